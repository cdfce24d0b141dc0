#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stnlffm/fusion.hpp"
#include "stnlffm/synth.hpp"
#include "scene_helpers.hpp"
#include "test_util.hpp"

using namespace stnlffm;
using testutil::make_synth_task;
using testutil::max_abs_difference;
using testutil::proportional_scene;

namespace {

FusionConfig small_config() {
    FusionConfig config;
    config.similarity.search_window = 9;
    config.weights.whole_window = 9;
    config.weights.patch_size = 3;
    config.similarity.cap = 20;
    config.tile_size = 8;
    config.thread_hint = 1;
    return config;
}

FusionTask uniform_task(float fine_value, float coarse_value, float coarse_p_value, int size = 12) {
    FusionTask task;
    ReferencePair ref;
    ref.date_tag = "0";
    ref.fine = RasterGrid::filled(size, size, 1, fine_value);
    ref.coarse = RasterGrid::filled(size, size, 1, coarse_value);
    task.references.push_back(std::move(ref));
    task.coarse_target = RasterGrid::filled(size, size, 1, coarse_p_value);
    task.prediction_date_tag = "1";
    return task;
}

} // namespace

TEST_CASE("no-change identity on a uniform scene") {
    FusionTask task = uniform_task(0.42f, 0.4f, 0.4f);
    FusionConfig config = small_config();
    const double v = predict_pixel(6, 6, 0, task, config);
    CHECK(v == doctest::Approx(static_cast<double>(0.42f)).epsilon(1e-9));
}

TEST_CASE("uniform shift: prediction follows the coarse offset") {
    FusionTask task = uniform_task(0.42f, 0.4f, 0.45f);
    FusionConfig config = small_config();
    const double v = predict_pixel(6, 6, 0, task, config);
    CHECK(std::fabs(v - 0.47) <= 1e-4);
}

TEST_CASE("no-change identity holds per pixel on a class-pure scene") {
    SceneSpec spec = proportional_scene(16, 2, 0.0, 5);
    testutil::SynthTask st = make_synth_task(spec, {0.0}, 16.0); // flat trajectories: no change
    FusionConfig config = small_config();
    RasterGrid out = predict_image(st.task, config);
    CHECK(max_abs_difference(out, st.task.references[0].fine) <= 1e-6);
}

TEST_CASE("no-change with two identical pairs blends to the same fine image") {
    SceneSpec spec = proportional_scene(16, 1, 0.0, 6, 3);
    testutil::SynthTask st = make_synth_task(spec, {0.0}, 16.0);
    ReferencePair second = st.task.references[0];
    second.date_tag = "32";
    st.task.references.push_back(std::move(second));
    st.task.coarse_target = st.task.references[0].coarse;
    FusionConfig config = small_config();
    RasterGrid out = predict_image(st.task, config);
    CHECK(max_abs_difference(out, st.task.references[0].fine) <= 1e-6);
}

TEST_CASE("engine matches the naive oracle on two-class scenes") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        SceneSpec spec = proportional_scene(16, 2, 0.004, seed);
        spec.noise_sigma = 0.004;
        testutil::SynthTask st = make_synth_task(spec, {0.0, 32.0}, 16.0);
        FusionConfig config = small_config();
        RasterGrid fast = predict_image(st.task, config);
        RasterGrid naive = oracle_predict(st.task, config);
        CHECK(max_abs_difference(fast, naive) <= 1e-6);
    }
}

TEST_CASE("engine matches the oracle under scattered masks") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        SceneSpec spec = proportional_scene(16, 2, 0.004, seed + 200, 3);
        spec.noise_sigma = 0.006;
        testutil::SynthTask st = make_synth_task(spec, {0.0, 32.0}, 16.0);
        std::mt19937_64 gen(seed);
        auto knock_out = [&](RasterGrid& g, int count) {
            for (int i = 0; i < count; ++i)
                g.valid[gen() % g.valid.size()] = 0;
        };
        knock_out(st.task.references[0].fine, 12);
        knock_out(st.task.references[0].coarse, 12);
        knock_out(st.task.references[1].fine, 12);
        knock_out(st.task.coarse_target, 12);
        FusionConfig config = small_config();
        RasterGrid fast = predict_image(st.task, config);
        RasterGrid naive = oracle_predict(st.task, config);
        CHECK(fast.valid == naive.valid);
        CHECK(max_abs_difference(fast, naive) <= 1e-6);
    }
}

TEST_CASE("engine matches the oracle in starfm mode too") {
    SceneSpec spec = proportional_scene(16, 1, 0.006, 9);
    testutil::SynthTask st = make_synth_task(spec, {0.0, 32.0}, 16.0);
    FusionConfig config = small_config();
    config.mode = FusionMode::starfm_special_case;
    RasterGrid fast = predict_image(st.task, config);
    RasterGrid naive = oracle_predict(st.task, config);
    CHECK(max_abs_difference(fast, naive) <= 1e-6);
}

TEST_CASE("oracle reproduces the per-pixel starfm formula on a uniform scene") {
    FusionTask task = uniform_task(0.3f, 0.35f, 0.5f);
    FusionConfig config = small_config();
    config.mode = FusionMode::starfm_special_case;
    RasterGrid out = oracle_predict(task, config);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(0.3 + (0.5 - 0.35)).epsilon(1e-6));
}

TEST_CASE("predict_image output is bit-identical across tile sizes and thread counts") {
    SceneSpec spec = proportional_scene(24, 2, 0.005, 21, 3);
    spec.noise_sigma = 0.01;
    testutil::SynthTask st = make_synth_task(spec, {0.0, 32.0}, 12.0);
    FusionConfig base = small_config();
    base.tile_size = 16;
    base.thread_hint = 1;
    RasterGrid ref = predict_image(st.task, base);
    for (int tile : {8, 24, 64}) {
        for (int threads : {1, 2, 8}) {
            FusionConfig config = base;
            config.tile_size = tile;
            config.thread_hint = threads;
            RasterGrid out = predict_image(st.task, config);
            CHECK(out.data == ref.data);
            CHECK(out.valid == ref.valid);
        }
    }
}

TEST_CASE("prediction is invariant under reference pair reordering") {
    SceneSpec spec = proportional_scene(16, 1, 0.005, 31, 2);
    testutil::SynthTask st = make_synth_task(spec, {0.0, 24.0, 48.0}, 12.0);
    FusionConfig config = small_config();
    RasterGrid ref = predict_image(st.task, config);

    FusionTask shuffled = st.task;
    std::swap(shuffled.references[0], shuffled.references[2]);
    std::swap(shuffled.references[1], shuffled.references[2]);
    RasterGrid out = predict_image(shuffled, config);
    CHECK(out.data == ref.data);
}

TEST_CASE("starfm mode with zero coarse change is an affine combination of fine values") {
    SceneSpec spec = proportional_scene(16, 1, 0.0, 41, 3);
    spec.noise_sigma = 0.02;
    spec.seed = 42;
    testutil::SynthTask st = make_synth_task(spec, {0.0}, 8.0);
    // force coarse_p identical to the reference coarse: b = 0 everywhere
    st.task.coarse_target = st.task.references[0].coarse;
    FusionConfig config = small_config();
    config.mode = FusionMode::starfm_special_case;
    RasterGrid out = predict_image(st.task, config);
    const auto [lo, hi] = std::minmax_element(st.task.references[0].fine.data.begin(),
                                              st.task.references[0].fine.data.end());
    for (float v : out.data) {
        CHECK(v >= *lo - 1e-6f);
        CHECK(v <= *hi + 1e-6f);
    }
}

TEST_CASE("stnlffm with huge gamma agrees with starfm mode on a uniform-window scene") {
    FusionTask task = uniform_task(0.35f, 0.3f, 0.38f, 16);
    FusionConfig config = small_config();
    config.regression.gamma = 1e9;
    RasterGrid stn = predict_image(task, config);
    config.mode = FusionMode::starfm_special_case;
    RasterGrid sta = predict_image(task, config);
    CHECK(max_abs_difference(stn, sta) <= 1e-4);
}

TEST_CASE("linear-change recovery: RMSE below 0.005 on a noiseless linear scene") {
    SceneSpec spec = proportional_scene(32, 2, 0.004, 51);
    testutil::SynthTask st = make_synth_task(spec, {0.0, 32.0}, 16.0);
    FusionConfig config = small_config();
    RasterGrid out = predict_image(st.task, config);
    EvalReport rep = evaluate(out, st.truth);
    for (double band_rmse : rep.band_rmse)
        CHECK(band_rmse <= 0.005);
}

TEST_CASE("weight sums stay within 1e-9 of 1") {
    SceneSpec spec = proportional_scene(16, 2, 0.004, 61);
    spec.noise_sigma = 0.01;
    testutil::SynthTask st = make_synth_task(spec, {0.0, 32.0}, 16.0);
    FusionConfig config = small_config();
    FusionStats stats;
    predict_image(st.task, config, &stats);
    CHECK(stats.max_weight_sum_error <= 1e-9);
    CHECK(stats.predicted_pixels == 16 * 16);
}

TEST_CASE("nodata propagation") {
    SceneSpec spec = proportional_scene(16, 1, 0.004, 71);
    testutil::SynthTask st = make_synth_task(spec, {0.0, 32.0}, 16.0);
    // invalid in coarse_p -> nodata
    st.task.coarse_target.valid[st.task.coarse_target.pixel_index(3, 3)] = 0;
    // invalid in one pair only -> still predicted from the other
    st.task.references[0].fine.valid[st.task.references[0].fine.pixel_index(5, 5)] = 0;
    // invalid in all pairs -> nodata
    for (auto& ref : st.task.references) {
        ref.fine.valid[ref.fine.pixel_index(7, 7)] = 0;
    }
    FusionConfig config = small_config();
    FusionStats stats;
    RasterGrid out = predict_image(st.task, config, &stats);
    CHECK(!out.valid_at(3, 3));
    CHECK(out.valid_at(5, 5));
    CHECK(!out.valid_at(7, 7));
    CHECK(stats.nodata_pixels == 2);
}

TEST_CASE("a pixel with no similar neighbors degrades to the per-pixel fallback") {
    SceneSpec spec = proportional_scene(16, 1, 0.005, 81, 2);
    testutil::SynthTask st = make_synth_task(spec, {0.0, 32.0}, 16.0);
    FusionConfig config = small_config();
    config.similarity.d = 1e-12;    // nobody passes the spectral test
    config.similarity.sigma_cc = 0.0; // nor the change test
    RasterGrid out = predict_image(st.task, config);

    const int x = 8, y = 8;
    // expected: per-date whole weights blending F_k + (C_p - C_k) at the pixel
    std::vector<double> sums;
    for (const auto& ref : st.task.references)
        sums.push_back(window_change_sum(ref.coarse, st.task.coarse_target, x, y, 0,
                                         config.weights.whole_window));
    const std::vector<double> whole = whole_weights_from_sums(sums, config.weights.epsilon);
    double expected = 0.0;
    for (std::size_t k = 0; k < st.task.references.size(); ++k) {
        const auto& ref = st.task.references[k];
        expected += whole[k] * (ref.fine.at(x, y, 0) + st.task.coarse_target.at(x, y, 0) -
                                ref.coarse.at(x, y, 0));
    }
    CHECK(out.at(x, y, 0) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("predict_pixel agrees with predict_image") {
    SceneSpec spec = proportional_scene(16, 2, 0.004, 91);
    spec.noise_sigma = 0.005;
    testutil::SynthTask st = make_synth_task(spec, {0.0, 32.0}, 16.0);
    FusionConfig config = small_config();
    RasterGrid out = predict_image(st.task, config);
    for (auto [x, y] : {std::pair{0, 0}, {8, 5}, {15, 15}})
        for (int b = 0; b < 2; ++b)
            CHECK(predict_pixel(x, y, b, st.task, config) ==
                  doctest::Approx(out.at(x, y, b)).epsilon(1e-7));
}

TEST_CASE("task validation catches bad setups") {
    FusionConfig config = small_config();
    FusionTask task;
    CHECK_THROWS_AS(predict_image(task, config), geometry_error);

    task = uniform_task(0.4f, 0.4f, 0.4f);
    task.references[0].date_tag = task.prediction_date_tag;
    CHECK_THROWS_AS(predict_image(task, config), config_error);

    task = uniform_task(0.4f, 0.4f, 0.4f);
    task.references[0].coarse = RasterGrid::filled(4, 4, 1, 0.4f);
    CHECK_THROWS_AS(predict_image(task, config), geometry_error);

    config.tile_size = 4;
    CHECK_THROWS_AS(predict_image(uniform_task(0.4f, 0.4f, 0.4f), config), config_error);
}

TEST_CASE("series: 3 dated pairs produce exactly 1 bracketing prediction") {
    SceneSpec spec = proportional_scene(16, 1, 0.004, 101);
    auto frames = generate_series(spec, {0.0, 16.0, 32.0});
    std::vector<ReferencePair> pairs;
    std::vector<DatedGrid> coarse_series;
    for (auto& f : frames) {
        pairs.push_back({f.date_tag, f.fine, f.coarse});
        coarse_series.push_back({f.date_tag, f.coarse});
    }
    FusionConfig config = small_config();
    SeriesResult res = predict_series(pairs, coarse_series, SeriesProtocol::nearest_bracketing, config);
    REQUIRE(res.predictions.size() == 1);
    CHECK(res.predictions[0].date_tag == "16");
    CHECK(res.predictions[0].interval_days == doctest::Approx(16.0));
}

TEST_CASE("series: 17 dated pairs produce 15 interior predictions") {
    SceneSpec spec = proportional_scene(8, 1, 0.002, 111);
    spec.resolution_ratio = 2;
    std::vector<double> dates;
    for (int i = 0; i < 17; ++i)
        dates.push_back(16.0 * i);
    auto frames = generate_series(spec, dates);
    std::vector<ReferencePair> pairs;
    std::vector<DatedGrid> coarse_series;
    for (auto& f : frames) {
        pairs.push_back({f.date_tag, f.fine, f.coarse});
        coarse_series.push_back({f.date_tag, f.coarse});
    }
    FusionConfig config = small_config();
    config.similarity.search_window = 5;
    config.weights.whole_window = 5;
    SeriesResult res = predict_series(pairs, coarse_series, SeriesProtocol::nearest_bracketing, config);
    CHECK(res.predictions.size() == 15);
}

TEST_CASE("series: symmetric sweep yields one prediction per interval") {
    SceneSpec spec = proportional_scene(16, 1, 0.004, 121);
    std::vector<double> dates = {0.0, 16.0, 32.0, 48.0, 64.0};
    auto frames = generate_series(spec, dates);
    std::vector<ReferencePair> pairs;
    std::vector<DatedGrid> coarse_series;
    for (auto& f : frames) {
        pairs.push_back({f.date_tag, f.fine, f.coarse});
        coarse_series.push_back({f.date_tag, f.coarse});
    }
    FusionConfig config = small_config();
    SeriesResult res = predict_series(pairs, coarse_series, SeriesProtocol::symmetric_sweep, config);
    REQUIRE(res.predictions.size() == 2);
    CHECK(res.predictions[0].interval_days == doctest::Approx(16.0));
    CHECK(res.predictions[1].interval_days == doctest::Approx(32.0));
}

TEST_CASE("series: unordered or insufficient dates are rejected") {
    SceneSpec spec = proportional_scene(16, 1, 0.004, 131);
    auto frames = generate_series(spec, {0.0, 16.0, 32.0});
    std::vector<ReferencePair> pairs;
    std::vector<DatedGrid> coarse_series;
    for (auto& f : frames) {
        pairs.push_back({f.date_tag, f.fine, f.coarse});
        coarse_series.push_back({f.date_tag, f.coarse});
    }
    FusionConfig config = small_config();
    std::swap(pairs[0], pairs[1]);
    CHECK_THROWS_AS(predict_series(pairs, coarse_series, SeriesProtocol::nearest_bracketing, config),
                    config_error);
    std::swap(pairs[0], pairs[1]);
    pairs.pop_back();
    CHECK_THROWS_AS(predict_series(pairs, coarse_series, SeriesProtocol::nearest_bracketing, config),
                    config_error);
    CHECK_THROWS_AS(predict_series(pairs, coarse_series, SeriesProtocol::symmetric_sweep, config),
                    config_error);
}
