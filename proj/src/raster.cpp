#include "stnlffm/raster.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include <json.hpp>

namespace stnlffm {

RasterGrid RasterGrid::filled(int width, int height, int bands, float value, float pixel_size) {
    RasterGrid g;
    g.width = width;
    g.height = height;
    g.band_count = bands;
    g.pixel_size = pixel_size;
    g.data.assign(static_cast<std::size_t>(width) * height * bands, value);
    g.valid.assign(static_cast<std::size_t>(width) * height, 1);
    return g;
}

void validate_grid(const RasterGrid& grid) {
    if (grid.width <= 0 || grid.height <= 0 || grid.band_count <= 0)
        throw geometry_error("raster has degenerate geometry (" + std::to_string(grid.width) + "x" +
                             std::to_string(grid.height) + "x" + std::to_string(grid.band_count) + ")");
    if (grid.data.size() != grid.value_count())
        throw geometry_error("raster data length does not match width*height*bands");
    if (grid.valid.size() != grid.pixel_count())
        throw geometry_error("raster mask length does not match width*height");
    const std::size_t n = grid.pixel_count();
    for (int b = 0; b < grid.band_count; ++b) {
        const float* plane = grid.data.data() + static_cast<std::size_t>(b) * n;
        for (std::size_t i = 0; i < n; ++i) {
            if (grid.valid[i] && !std::isfinite(plane[i]))
                throw numeric_error("non-finite value at a valid pixel (band " + std::to_string(b) + ")");
        }
    }
}

bool same_geometry(const RasterGrid& a, const RasterGrid& b) {
    return a.width == b.width && a.height == b.height && a.band_count == b.band_count;
}

namespace {

// days-from-civil, Howard Hinnant's algorithm; epoch 1970-01-01 = day 0
long long days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const long long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long long>(doe) - 719468;
}

} // namespace

double date_ordinal(const std::string& tag) {
    if (tag.empty())
        throw config_error("empty date tag");
    // ISO date
    if (tag.size() == 10 && tag[4] == '-' && tag[7] == '-') {
        try {
            int y = std::stoi(tag.substr(0, 4));
            int m = std::stoi(tag.substr(5, 2));
            int d = std::stoi(tag.substr(8, 2));
            if (m < 1 || m > 12 || d < 1 || d > 31)
                throw config_error("invalid ISO date '" + tag + "'");
            return static_cast<double>(days_from_civil(y, m, d));
        } catch (const std::invalid_argument&) {
            throw config_error("invalid ISO date '" + tag + "'");
        }
    }
    // plain number (ordinal day)
    try {
        std::size_t pos = 0;
        double v = std::stod(tag, &pos);
        if (pos != tag.size())
            throw config_error("date tag '" + tag + "' is neither a number nor YYYY-MM-DD");
        return v;
    } catch (const std::invalid_argument&) {
        throw config_error("date tag '" + tag + "' is neither a number nor YYYY-MM-DD");
    }
}

// --- file I/O ---------------------------------------------------------------

std::string sidecar_path(const std::string& payload_path) {
    return payload_path + ".json";
}

namespace {

void to_little_endian_inplace(std::vector<float>& values) {
    if constexpr (std::endian::native == std::endian::little) {
        (void)values;
    } else {
        for (float& f : values) {
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            u = ((u & 0xff000000u) >> 24) | ((u & 0x00ff0000u) >> 8) |
                ((u & 0x0000ff00u) << 8) | ((u & 0x000000ffu) << 24);
            std::memcpy(&f, &u, 4);
        }
    }
}

} // namespace

RasterGrid read_raster(const std::string& path) {
    std::ifstream header_in(sidecar_path(path));
    if (!header_in)
        throw io_error("cannot open raster header " + sidecar_path(path));
    nlohmann::json header;
    try {
        header_in >> header;
    } catch (const nlohmann::json::exception& e) {
        throw io_error("malformed raster header " + sidecar_path(path) + ": " + e.what());
    }

    RasterGrid grid;
    try {
        grid.width = header.at("width").get<int>();
        grid.height = header.at("height").get<int>();
        grid.band_count = header.at("bands").get<int>();
        grid.pixel_size = header.value("pixel_size", 1.0f);
        if (header.at("dtype").get<std::string>() != "f32le")
            throw io_error("unsupported dtype in " + sidecar_path(path));
    } catch (const nlohmann::json::exception& e) {
        throw io_error("raster header " + sidecar_path(path) + " is missing fields: " + e.what());
    }
    const std::string mask_mode = header.value("mask", "absent");
    if (mask_mode != "present" && mask_mode != "absent")
        throw io_error("raster header mask field must be 'present' or 'absent'");

    if (grid.width <= 0 || grid.height <= 0 || grid.band_count <= 0)
        throw geometry_error("raster header declares degenerate geometry: " + path);

    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw io_error("cannot open raster payload " + path);
    in.seekg(0, std::ios::end);
    const std::size_t file_size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);

    const std::size_t n_pixels = grid.pixel_count();
    const std::size_t n_values = n_pixels * grid.band_count;
    const std::size_t expected = n_values * 4 + (mask_mode == "present" ? n_pixels : 0);
    if (file_size != expected)
        throw io_error("raster payload size mismatch for " + path + ": declared " +
                       std::to_string(expected) + " bytes, found " + std::to_string(file_size));

    grid.data.resize(n_values);
    in.read(reinterpret_cast<char*>(grid.data.data()), static_cast<std::streamsize>(n_values * 4));
    to_little_endian_inplace(grid.data); // no-op on LE hosts; payload is defined LE

    if (mask_mode == "present") {
        grid.valid.resize(n_pixels);
        in.read(reinterpret_cast<char*>(grid.valid.data()), static_cast<std::streamsize>(n_pixels));
        for (std::uint8_t& v : grid.valid)
            v = v ? 1 : 0;
    } else {
        grid.valid.assign(n_pixels, 1);
    }
    if (!in)
        throw io_error("short read on raster payload " + path);

    validate_grid(grid); // rejects non-finite values at valid pixels

    bool out_of_range = false;
    for (std::size_t i = 0; i < n_values && !out_of_range; ++i) {
        if (grid.valid[i % n_pixels] && (grid.data[i] < 0.0f || grid.data[i] > 1.0f))
            out_of_range = true;
    }
    if (out_of_range)
        std::cerr << "warning: " << path << " contains reflectance outside [0,1]\n";

    return grid;
}

void write_raster(const RasterGrid& grid, const std::string& path) {
    validate_grid(grid);

    nlohmann::json header = {
        {"width", grid.width},   {"height", grid.height}, {"bands", grid.band_count},
        {"pixel_size", grid.pixel_size}, {"dtype", "f32le"},      {"mask", "present"},
    };

    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw io_error("cannot write raster payload " + path);
        std::vector<float> payload = grid.data;
        to_little_endian_inplace(payload);
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size() * 4));
        std::vector<std::uint8_t> mask(grid.valid.size());
        for (std::size_t i = 0; i < mask.size(); ++i)
            mask[i] = grid.valid[i] ? 1 : 0;
        out.write(reinterpret_cast<const char*>(mask.data()), static_cast<std::streamsize>(mask.size()));
        if (!out)
            throw io_error("short write on raster payload " + path);
    }
    {
        std::ofstream out(sidecar_path(path), std::ios::trunc);
        if (!out)
            throw io_error("cannot write raster header " + sidecar_path(path));
        out << header.dump(2) << "\n";
        if (!out)
            throw io_error("short write on raster header " + sidecar_path(path));
    }
}

// --- resampling -------------------------------------------------------------

namespace {

// Keys cubic convolution kernel, a = -0.5
double keys_weight(double s) {
    s = std::fabs(s);
    if (s <= 1.0)
        return (1.5 * s - 2.5) * s * s + 1.0;
    if (s < 2.0)
        return ((-0.5 * s + 2.5) * s - 4.0) * s + 2.0;
    return 0.0;
}

} // namespace

RasterGrid upsample_cubic(const RasterGrid& low, int factor) {
    validate_grid(low);
    if (factor < 1)
        throw config_error("upsample factor must be >= 1");

    RasterGrid out;
    out.width = low.width * factor;
    out.height = low.height * factor;
    out.band_count = low.band_count;
    out.pixel_size = low.pixel_size / static_cast<float>(factor);
    out.data.assign(out.value_count(), 0.0f);
    out.valid.assign(out.pixel_count(), 0);

    // Per output column/row: base source index and the 4 tap weights.
    // Pixel-center mapping: sx = (X + 0.5)/factor - 0.5.
    struct Taps {
        int base;
        std::array<double, 4> w;
    };
    auto make_taps = [factor](int out_size) {
        std::vector<Taps> taps(out_size);
        for (int o = 0; o < out_size; ++o) {
            const double s = (o + 0.5) / factor - 0.5;
            const int base = static_cast<int>(std::floor(s));
            const double frac = s - base;
            Taps t;
            t.base = base - 1;
            for (int i = 0; i < 4; ++i)
                t.w[i] = keys_weight(frac - (i - 1));
            taps[o] = t;
        }
        return taps;
    };
    const std::vector<Taps> col_taps = make_taps(out.width);
    const std::vector<Taps> row_taps = make_taps(out.height);

    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };

    for (int oy = 0; oy < out.height; ++oy) {
        const Taps& ty = row_taps[oy];
        for (int ox = 0; ox < out.width; ++ox) {
            const Taps& tx = col_taps[ox];
            // Joint 4x4 accumulation so that masked taps can be dropped and
            // the remaining weights renormalized.
            double wsum = 0.0;
            std::array<double, 3> acc_static{};
            std::vector<double> acc;
            const bool few_bands = out.band_count <= 3;
            if (!few_bands)
                acc.assign(out.band_count, 0.0);
            double* accp = few_bands ? acc_static.data() : acc.data();
            for (int j = 0; j < 4; ++j) {
                const int sy = clampi(ty.base + j, low.height - 1);
                for (int i = 0; i < 4; ++i) {
                    const int sx = clampi(tx.base + i, low.width - 1);
                    if (!low.valid_at(sx, sy))
                        continue;
                    const double w = ty.w[j] * tx.w[i];
                    wsum += w;
                    for (int b = 0; b < out.band_count; ++b)
                        accp[b] += w * low.at(sx, sy, b);
                }
            }
            if (wsum > 1e-6) {
                out.valid[out.pixel_index(ox, oy)] = 1;
                for (int b = 0; b < out.band_count; ++b)
                    out.at(ox, oy, b) = static_cast<float>(accp[b] / wsum);
            }
        }
    }
    return out;
}

RasterGrid downsample_boxavg(const RasterGrid& fine, int factor) {
    validate_grid(fine);
    if (factor < 1)
        throw config_error("downsample factor must be >= 1");
    if (fine.width % factor != 0 || fine.height % factor != 0)
        throw geometry_error("raster dimensions are not divisible by downsample factor " +
                             std::to_string(factor));

    RasterGrid out;
    out.width = fine.width / factor;
    out.height = fine.height / factor;
    out.band_count = fine.band_count;
    out.pixel_size = fine.pixel_size * static_cast<float>(factor);
    out.data.assign(out.value_count(), 0.0f);
    out.valid.assign(out.pixel_count(), 0);

    for (int oy = 0; oy < out.height; ++oy) {
        for (int ox = 0; ox < out.width; ++ox) {
            int count = 0;
            for (int j = 0; j < factor; ++j)
                for (int i = 0; i < factor; ++i)
                    if (fine.valid_at(ox * factor + i, oy * factor + j))
                        ++count;
            if (count == 0)
                continue;
            out.valid[out.pixel_index(ox, oy)] = 1;
            for (int b = 0; b < out.band_count; ++b) {
                double sum = 0.0;
                for (int j = 0; j < factor; ++j)
                    for (int i = 0; i < factor; ++i)
                        if (fine.valid_at(ox * factor + i, oy * factor + j))
                            sum += fine.at(ox * factor + i, oy * factor + j, b);
                out.at(ox, oy, b) = static_cast<float>(sum / count);
            }
        }
    }
    return out;
}

} // namespace stnlffm
