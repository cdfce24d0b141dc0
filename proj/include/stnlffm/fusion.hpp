#pragma once

#include <string>
#include <vector>

#include "stnlffm/evaluation.hpp"
#include "stnlffm/raster.hpp"
#include "stnlffm/regression.hpp"
#include "stnlffm/similarity.hpp"
#include "stnlffm/weights.hpp"

namespace stnlffm {

enum class FusionMode {
    stnlffm,             // full model: restricted least-squares gain/offset
    starfm_special_case, // gain fixed at 1, offset = per-pixel coarse change
};

struct FusionConfig {
    SimilarityParams similarity;
    WeightParams weights;
    RegressionParams regression;
    FusionMode mode = FusionMode::stnlffm;
    int tile_size = 64;
    int thread_hint = 0; // 0 = use hardware concurrency

    void validate() const;
};

struct FusionTask {
    std::vector<ReferencePair> references; // >= 1; two or more recommended
    RasterGrid coarse_target;              // coarse image at the prediction date
    std::string prediction_date_tag;

    void validate() const;
};

/// Diagnostics collected during prediction. Merging across tiles uses only
/// max/sum, so the result is independent of the parallel schedule.
struct FusionStats {
    double max_weight_sum_error = 0.0;   // max |sum of final weights - 1| per pixel/band
    double max_abs_gain_deviation = 0.0; // max |a - 1| over all fits (full or forced)
    long long full_fits = 0;
    long long degenerate_fits = 0;
    long long predicted_pixels = 0;
    long long nodata_pixels = 0;
    double wall_seconds = 0.0;
    int threads_used = 1;
};

/// Predicts the fine-resolution reflectance of a single pixel and band.
/// Convenience path for tests and inspection; predict_image is the fast one.
double predict_pixel(int x, int y, int band, const FusionTask& task, const FusionConfig& config);

/// Predicts the full fine-resolution raster at the task's prediction date.
/// Tile-parallel; the output is bit-identical for any tile size and thread
/// count. Nodata where the coarse target is invalid or no reference pair is
/// valid.
RasterGrid predict_image(const FusionTask& task, const FusionConfig& config,
                         FusionStats* stats = nullptr);

// --- series protocols --------------------------------------------------------

struct DatedGrid {
    std::string date_tag;
    RasterGrid grid;
};

enum class SeriesProtocol {
    nearest_bracketing, // predict each interior date from its two neighbors
    symmetric_sweep,    // predict the middle date from symmetric pairs at growing interval
};

struct SeriesPrediction {
    std::string date_tag;   // predicted date
    double interval_days;   // mean interval to the reference dates
    RasterGrid predicted;
    EvalReport eval;        // against the held-out fine image at that date
};

struct SeriesResult {
    std::vector<SeriesPrediction> predictions;
};

/// Runs one of the time-series protocols over dated pairs. Pair dates must
/// parse as ordinals (integer day or ISO date) and be strictly increasing.
/// coarse_series must contain a coarse grid for every predicted date.
SeriesResult predict_series(const std::vector<ReferencePair>& pairs,
                            const std::vector<DatedGrid>& coarse_series, SeriesProtocol protocol,
                            const FusionConfig& config);

} // namespace stnlffm
