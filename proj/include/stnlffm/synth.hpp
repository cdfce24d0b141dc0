#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stnlffm/fusion.hpp"
#include "stnlffm/raster.hpp"

namespace stnlffm {

enum class ClassMapMode { checkerboard, voronoi_patches, stripes };

/// Per-class reflectance trajectory: piecewise linear between dated knots,
/// linearly extrapolated beyond the first/last knot. Each knot carries one
/// value per band.
struct ClassTrajectory {
    struct Knot {
        double date = 0.0;
        std::vector<double> values;
    };
    std::vector<Knot> knots;
};

/// Step change applied to the affected classes from `date` on (e.g. a flood).
struct AbruptEvent {
    double date = 0.0;
    std::vector<int> classes;
    std::vector<double> delta; // per band
};

struct SceneSpec {
    int width = 32;
    int height = 32;
    int band_count = 1;
    std::vector<ClassTrajectory> classes;
    ClassMapMode class_map_mode = ClassMapMode::checkerboard;
    int feature_scale = 4; // checker block / stripe width, voronoi site density
    std::optional<AbruptEvent> event;
    double noise_sigma = 0.0;        // additive Gaussian noise on fine images
    double coarse_noise_sigma = 0.0; // optional noise on the simulated coarse source
    int resolution_ratio = 1;        // coarse:fine factor
    float pixel_size = 25.0f;
    std::uint64_t seed = 0;

    void validate() const;
};

SceneSpec scene_spec_from_json_text(const std::string& text);
SceneSpec load_scene_spec(const std::string& path);

/// Land-cover class id per pixel, row-major.
std::vector<int> build_class_map(const SceneSpec& spec);

/// Trajectory value of one class/band at a date, event included.
double class_value(const SceneSpec& spec, int class_id, int band, double date);

/// Noiseless fine image at a date: pure class trajectories (ground truth).
RasterGrid render_truth(const SceneSpec& spec, double date);

struct SynthFrame {
    std::string date_tag;
    RasterGrid fine;   // truth + noise
    RasterGrid coarse; // box-averaged then cubic-upsampled truth, at fine geometry
};

std::string format_date_tag(double date);

/// Generates the dated fine/coarse series. The coarse image simulates the
/// sensor gap: block average of the noiseless fine at the resolution ratio,
/// upsampled back to the fine geometry. Bit-deterministic per seed.
std::vector<SynthFrame> generate_series(const SceneSpec& spec, const std::vector<double>& dates);

/// Deliberately simple loop-everything reference implementation of the full
/// prediction pipeline. Small rasters only; equivalence oracle for
/// predict_image.
RasterGrid oracle_predict(const FusionTask& task, const FusionConfig& config);

} // namespace stnlffm
