#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stnlffm/errors.hpp"

namespace stnlffm {

/// One multi-band reflectance image. Pixel data is band-sequential,
/// row-major, 32-bit float. A single validity mask is shared by all bands.
/// Immutable by convention once filled: the fusion code never mutates inputs.
struct RasterGrid {
    int width = 0;
    int height = 0;
    int band_count = 0;
    float pixel_size = 1.0f; // ground units per pixel, informational
    std::vector<float> data;          // width*height*band_count
    std::vector<std::uint8_t> valid;  // width*height, 0 or 1

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    std::size_t value_count() const { return pixel_count() * static_cast<std::size_t>(band_count); }

    std::size_t pixel_index(int x, int y) const {
        assert(x >= 0 && x < width && y >= 0 && y < height);
        return static_cast<std::size_t>(y) * width + x;
    }
    std::size_t value_index(int x, int y, int band) const {
        assert(band >= 0 && band < band_count);
        return static_cast<std::size_t>(band) * pixel_count() + pixel_index(x, y);
    }

    float at(int x, int y, int band) const { return data[value_index(x, y, band)]; }
    float& at(int x, int y, int band) { return data[value_index(x, y, band)]; }
    bool valid_at(int x, int y) const { return valid[pixel_index(x, y)] != 0; }

    bool empty() const { return width == 0 || height == 0 || band_count == 0; }

    static RasterGrid filled(int width, int height, int bands, float value,
                             float pixel_size = 1.0f);
};

/// Throws geometry_error / numeric_error if the grid violates its invariants
/// (consistent sizes, finite values on valid pixels).
void validate_grid(const RasterGrid& grid);

bool same_geometry(const RasterGrid& a, const RasterGrid& b);

/// A co-registered fine+coarse grid pair at one acquisition date. The coarse
/// grid is expected to be already resampled to the fine geometry.
struct ReferencePair {
    std::string date_tag; // ordinal day ("16") or ISO date ("2004-12-12")
    RasterGrid fine;
    RasterGrid coarse;
};

/// Parses a date tag as either an integer ordinal day or an ISO YYYY-MM-DD
/// date (converted to a day count). Throws config_error on anything else.
double date_ordinal(const std::string& tag);

// --- file format ------------------------------------------------------------
//
// A raster on disk is a raw payload plus a JSON sidecar at <path>.json:
//   { "width": W, "height": H, "bands": B, "pixel_size": ps,
//     "dtype": "f32le", "mask": "present" | "absent" }
// The payload holds width*height*bands little-endian 32-bit floats in
// band-sequential row-major order, followed (if mask is "present") by
// width*height bytes of 0/1 mask.

std::string sidecar_path(const std::string& payload_path);

RasterGrid read_raster(const std::string& path);
void write_raster(const RasterGrid& grid, const std::string& path);

// --- resampling -------------------------------------------------------------

/// Separable cubic-convolution upsampling by an integer factor (Keys kernel,
/// parameter -0.5, replicated borders). Masked source pixels never contribute;
/// kernel weights are renormalized over the valid taps.
RasterGrid upsample_cubic(const RasterGrid& low, int factor);

/// Block mean over factor x factor cells, valid source pixels only.
/// Width and height must be divisible by the factor.
RasterGrid downsample_boxavg(const RasterGrid& fine, int factor);

} // namespace stnlffm
