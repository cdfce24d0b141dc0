// stnlffm command line tool: fuse | evaluate | synth | sweep
//
// Exit codes: 0 success, 2 usage/config, 3 I/O, 4 geometry/validation,
// 5 numeric failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stnlffm/evaluation.hpp"
#include "stnlffm/fusion.hpp"
#include "stnlffm/raster.hpp"
#include "stnlffm/synth.hpp"

namespace {

constexpr const char* kToolVersion = "0.1.0";

using nlohmann::json;

struct PairArg {
    std::string fine;
    std::string coarse;
    std::string date_tag; // optional; defaults to the pair index
};

PairArg parse_pair_arg(const std::string& text, std::size_t index) {
    PairArg p;
    std::stringstream ss(text);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, ','))
        parts.push_back(part);
    if (parts.size() < 2 || parts.size() > 3)
        throw stnlffm::config_error("--pair expects FINE,COARSE[,DATE]: got '" + text + "'");
    p.fine = parts[0];
    p.coarse = parts[1];
    p.date_tag = parts.size() == 3 ? parts[2] : std::to_string(index);
    return p;
}

struct FusionFlags {
    std::string mode = "stnlffm";
    int window = 31;
    int patch = 5;
    double h = 0.15;
    double kernel_sigma = 1.5;
    double d = 1.0;
    int classes = 4;
    double sigma_cc = 0.02;
    double gamma = 0.05;
    int cap = 40;
    int tile = 64;
    int threads = 0;
    int upsample_factor = 1;

    void attach(CLI::App* cmd) {
        cmd->set_help_flag("--help", "Print help"); // frees -h for the filtering parameter
        cmd->add_option("--mode", mode, "Fusion mode: stnlffm or starfm")
            ->check(CLI::IsMember({"stnlffm", "starfm"}));
        cmd->add_option("--window", window, "Similar-pixel search window (odd, fine pixels)");
        cmd->add_option("--patch", patch, "Patch size of the non-local weight (odd)");
        cmd->add_option("--h", h, "Filtering parameter of the non-local weight");
        cmd->add_option("--kernel-sigma", kernel_sigma, "Gaussian patch kernel sigma");
        cmd->add_option("--d", d, "Spectral threshold free parameter");
        cmd->add_option("--classes", classes, "Class count in the spectral threshold");
        cmd->add_option("--sigma-cc", sigma_cc, "Change-consistency tolerance");
        cmd->add_option("--gamma", gamma, "Regression regularization strength");
        cmd->add_option("--cap", cap, "Max similar pixels per target per date");
        cmd->add_option("--tile", tile, "Tile size of the parallel decomposition");
        cmd->add_option("--threads", threads, "Worker thread cap (0 = hardware)");
        cmd->add_option("--upsample-factor", upsample_factor,
                        "Cubic-upsample coarse inputs by this factor on load");
    }

    stnlffm::FusionConfig to_config() const {
        stnlffm::FusionConfig config;
        config.similarity.search_window = window;
        config.similarity.d = d;
        config.similarity.class_count = classes;
        config.similarity.sigma_cc = sigma_cc;
        config.similarity.cap = cap;
        config.weights.h = h;
        config.weights.kernel_sigma = kernel_sigma;
        config.weights.patch_size = patch;
        config.weights.whole_window = window;
        config.regression.gamma = gamma;
        config.mode = mode == "starfm" ? stnlffm::FusionMode::starfm_special_case
                                       : stnlffm::FusionMode::stnlffm;
        config.tile_size = tile;
        config.thread_hint = threads;
        return config;
    }

    json snapshot() const {
        return json{{"mode", mode},
                    {"window", window},
                    {"patch", patch},
                    {"h", h},
                    {"kernel_sigma", kernel_sigma},
                    {"d", d},
                    {"classes", classes},
                    {"sigma_cc", sigma_cc},
                    {"gamma", gamma},
                    {"cap", cap},
                    {"tile", tile},
                    {"threads", threads},
                    {"upsample_factor", upsample_factor}};
    }
};

void write_manifest(const std::string& out_path, const std::string& command, const json& parameters,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    double duration_seconds, std::uint64_t seed) {
    json manifest = {
        {"tool", "stnlffm"},
        {"version", kToolVersion},
        {"command", command},
        {"parameters", parameters},
        {"inputs", inputs},
        {"outputs", outputs},
        {"duration_seconds", duration_seconds},
        {"seed", seed},
    };
    std::ofstream out(out_path, std::ios::trunc);
    if (!out)
        throw stnlffm::io_error("cannot write manifest " + out_path);
    out << manifest.dump(2) << "\n";
}

stnlffm::RasterGrid load_coarse(const std::string& path, int upsample_factor) {
    stnlffm::RasterGrid grid = stnlffm::read_raster(path);
    if (upsample_factor > 1)
        grid = stnlffm::upsample_cubic(grid, upsample_factor);
    return grid;
}

std::vector<double> parse_date_list(const std::string& text) {
    std::vector<double> dates;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ','))
        dates.push_back(stnlffm::date_ordinal(part));
    if (dates.empty())
        throw stnlffm::config_error("--dates needs at least one date");
    return dates;
}

// --- subcommands --------------------------------------------------------------

int cmd_fuse(const std::vector<std::string>& pair_args, const std::string& target_path,
             const std::string& out_path, const FusionFlags& flags) {
    const auto t0 = std::chrono::steady_clock::now();

    stnlffm::FusionTask task;
    std::vector<std::string> inputs;
    for (std::size_t i = 0; i < pair_args.size(); ++i) {
        const PairArg p = parse_pair_arg(pair_args[i], i);
        stnlffm::ReferencePair ref;
        ref.date_tag = p.date_tag;
        ref.fine = stnlffm::read_raster(p.fine);
        ref.coarse = load_coarse(p.coarse, flags.upsample_factor);
        task.references.push_back(std::move(ref));
        inputs.push_back(p.fine);
        inputs.push_back(p.coarse);
    }
    task.coarse_target = load_coarse(target_path, flags.upsample_factor);
    task.prediction_date_tag = "prediction";
    inputs.push_back(target_path);

    stnlffm::FusionStats stats;
    const stnlffm::RasterGrid predicted = stnlffm::predict_image(task, flags.to_config(), &stats);
    stnlffm::write_raster(predicted, out_path);

    const double duration =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json parameters = flags.snapshot();
    parameters["pairs"] = pair_args;
    parameters["target"] = target_path;
    parameters["predicted_pixels"] = stats.predicted_pixels;
    parameters["nodata_pixels"] = stats.nodata_pixels;
    parameters["fuse_wall_seconds"] = stats.wall_seconds;
    parameters["threads_used"] = stats.threads_used;
    write_manifest(out_path + ".manifest.json", "fuse", parameters, inputs, {out_path}, duration, 0);
    std::cout << "fused " << predicted.width << "x" << predicted.height << "x"
              << predicted.band_count << " -> " << out_path << " (" << stats.wall_seconds
              << " s fusion, " << stats.threads_used << " threads)\n";
    return 0;
}

int cmd_evaluate(const std::string& predicted_path, const std::string& observed_path,
                 const std::string& csv_path, const std::string& json_path) {
    const stnlffm::RasterGrid predicted = stnlffm::read_raster(predicted_path);
    const stnlffm::RasterGrid observed = stnlffm::read_raster(observed_path);
    const stnlffm::EvalReport report = stnlffm::evaluate(predicted, observed);
    std::cout << report.to_csv();
    if (!csv_path.empty()) {
        std::ofstream out(csv_path, std::ios::trunc);
        if (!out)
            throw stnlffm::io_error("cannot write " + csv_path);
        out << report.to_csv();
    }
    if (!json_path.empty()) {
        std::ofstream out(json_path, std::ios::trunc);
        if (!out)
            throw stnlffm::io_error("cannot write " + json_path);
        out << report.to_json() << "\n";
    }
    return 0;
}

int cmd_synth(const std::string& scene_path, const std::string& dates_text,
              const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const stnlffm::SceneSpec spec = stnlffm::load_scene_spec(scene_path);
    const std::vector<double> dates = parse_date_list(dates_text);
    std::filesystem::create_directories(out_dir);

    const auto series = stnlffm::generate_series(spec, dates);
    std::vector<std::string> outputs;
    json listing = json::array();
    for (const stnlffm::SynthFrame& frame : series) {
        const std::string fine_path = out_dir + "/fine_" + frame.date_tag + ".raster";
        const std::string coarse_path = out_dir + "/coarse_" + frame.date_tag + ".raster";
        stnlffm::write_raster(frame.fine, fine_path);
        stnlffm::write_raster(frame.coarse, coarse_path);
        outputs.push_back(fine_path);
        outputs.push_back(coarse_path);
        listing.push_back({{"date", frame.date_tag}, {"fine", fine_path}, {"coarse", coarse_path}});
    }
    {
        std::ofstream out(out_dir + "/series.json", std::ios::trunc);
        if (!out)
            throw stnlffm::io_error("cannot write series listing");
        out << listing.dump(2) << "\n";
    }
    const double duration =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(out_dir + "/series.manifest.json", "synth",
                   {{"scene", scene_path}, {"dates", dates_text}}, {scene_path}, outputs, duration,
                   spec.seed);
    std::cout << "wrote " << series.size() << " dated frames to " << out_dir << "\n";
    return 0;
}

int cmd_sweep(const std::string& scene_path, const std::string& dates_text,
              const std::vector<std::string>& pair_args, const std::string& out_csv,
              const std::string& modes_text, const FusionFlags& flags) {
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<stnlffm::ReferencePair> pairs;
    std::vector<stnlffm::DatedGrid> coarse_series;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    if (!scene_path.empty()) {
        const stnlffm::SceneSpec spec = stnlffm::load_scene_spec(scene_path);
        seed = spec.seed;
        inputs.push_back(scene_path);
        const std::vector<double> dates = parse_date_list(dates_text);
        auto series = stnlffm::generate_series(spec, dates);
        for (auto& f : series) {
            pairs.push_back({f.date_tag, std::move(f.fine), f.coarse});
            coarse_series.push_back({f.date_tag, std::move(f.coarse)});
        }
    } else {
        for (std::size_t i = 0; i < pair_args.size(); ++i) {
            const PairArg p = parse_pair_arg(pair_args[i], i);
            if (p.date_tag == std::to_string(i))
                throw stnlffm::config_error("sweep pairs need explicit dates: FINE,COARSE,DATE");
            stnlffm::ReferencePair ref;
            ref.date_tag = p.date_tag;
            ref.fine = stnlffm::read_raster(p.fine);
            ref.coarse = load_coarse(p.coarse, flags.upsample_factor);
            coarse_series.push_back({p.date_tag, ref.coarse});
            pairs.push_back(std::move(ref));
            inputs.push_back(p.fine);
            inputs.push_back(p.coarse);
        }
    }
    if (pairs.size() < 3 || pairs.size() % 2 == 0)
        throw stnlffm::config_error("sweep needs an odd number (>= 3) of dated pairs");

    std::vector<std::string> modes;
    {
        std::stringstream ss(modes_text);
        std::string part;
        while (std::getline(ss, part, ','))
            modes.push_back(part);
    }

    std::ostringstream csv;
    csv.precision(10);
    csv << "interval_days,mode,mean_rmse,mean_r2\n";
    for (const std::string& mode : modes) {
        if (mode != "stnlffm" && mode != "starfm")
            throw stnlffm::config_error("unknown sweep mode '" + mode + "'");
        FusionFlags mode_flags = flags;
        mode_flags.mode = mode;
        const stnlffm::SeriesResult result = stnlffm::predict_series(
            pairs, coarse_series, stnlffm::SeriesProtocol::symmetric_sweep, mode_flags.to_config());
        for (const stnlffm::SeriesPrediction& p : result.predictions)
            csv << p.interval_days << "," << mode << "," << p.eval.mean_rmse << ","
                << p.eval.mean_r2 << "\n";
    }

    std::cout << csv.str();
    if (!out_csv.empty()) {
        std::ofstream out(out_csv, std::ios::trunc);
        if (!out)
            throw stnlffm::io_error("cannot write " + out_csv);
        out << csv.str();
        const double duration =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        json parameters = flags.snapshot();
        parameters["scene"] = scene_path;
        parameters["dates"] = dates_text;
        parameters["modes"] = modes_text;
        write_manifest(out_csv + ".manifest.json", "sweep", parameters, inputs, {out_csv}, duration,
                       seed);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"STNLFFM spatiotemporal reflectance fusion"};
    app.set_help_flag("--help", "Print help");
    app.set_version_flag("--version", kToolVersion);
    app.set_config("--config", "", "Read defaults from a TOML config file");
    app.fallthrough(); // lets --config appear after the subcommand name
    app.require_subcommand(1);

    // fuse
    CLI::App* fuse = app.add_subcommand("fuse", "Predict a fine image at the target date");
    std::vector<std::string> fuse_pairs;
    std::string fuse_target, fuse_out;
    FusionFlags fuse_flags;
    fuse->add_option("--pair", fuse_pairs, "Reference pair FINE,COARSE[,DATE] (repeatable)")
        ->required();
    fuse->add_option("--target", fuse_target, "Coarse raster at the prediction date")->required();
    fuse->add_option("--out", fuse_out, "Output raster path")->required();
    fuse_flags.attach(fuse);

    // evaluate
    CLI::App* evaluate = app.add_subcommand("evaluate", "Compare a predicted raster to an observed one");
    std::string eval_predicted, eval_observed, eval_csv, eval_json;
    evaluate->add_option("--predicted", eval_predicted, "Predicted raster")->required();
    evaluate->add_option("--observed", eval_observed, "Observed raster")->required();
    evaluate->add_option("--csv", eval_csv, "Write the report as CSV");
    evaluate->add_option("--json", eval_json, "Write the report as JSON");

    // synth
    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic fine/coarse series");
    std::string synth_scene, synth_dates, synth_out;
    synth->add_option("--scene", synth_scene, "Scene spec JSON")->required();
    synth->add_option("--dates", synth_dates, "Comma-separated dates")->required();
    synth->add_option("--out-dir", synth_out, "Output directory")->required();

    // sweep
    CLI::App* sweep = app.add_subcommand("sweep", "Time-interval sweep around the middle date");
    std::string sweep_scene, sweep_dates, sweep_out, sweep_modes = "stnlffm,starfm";
    std::vector<std::string> sweep_pairs;
    FusionFlags sweep_flags;
    sweep->add_option("--scene", sweep_scene, "Scene spec JSON (synthetic series)");
    sweep->add_option("--dates", sweep_dates, "Comma-separated dates for --scene");
    sweep->add_option("--pair", sweep_pairs, "Dated pair FINE,COARSE,DATE (repeatable)");
    sweep->add_option("--out", sweep_out, "Output CSV path");
    sweep->add_option("--modes", sweep_modes, "Comma-separated modes to run");
    sweep_flags.attach(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*fuse)
            return cmd_fuse(fuse_pairs, fuse_target, fuse_out, fuse_flags);
        if (*evaluate)
            return cmd_evaluate(eval_predicted, eval_observed, eval_csv, eval_json);
        if (*synth)
            return cmd_synth(synth_scene, synth_dates, synth_out);
        if (*sweep) {
            if (sweep_scene.empty() == sweep_pairs.empty())
                throw stnlffm::config_error("sweep needs either --scene with --dates or --pair inputs");
            if (!sweep_scene.empty() && sweep_dates.empty())
                throw stnlffm::config_error("sweep --scene needs --dates");
            return cmd_sweep(sweep_scene, sweep_dates, sweep_pairs, sweep_out, sweep_modes,
                             sweep_flags);
        }
    } catch (const stnlffm::io_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const stnlffm::geometry_error& e) {
        std::cerr << "geometry error: " << e.what() << "\n";
        return 4;
    } catch (const stnlffm::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const stnlffm::numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    }
    return 0;
}
