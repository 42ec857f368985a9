// Command-line front end: dataset synthesis, training, rendering, evaluation,
// and gradient-statistics export. Exit codes: 0 ok, 1 runtime/I/O, 2 usage.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "splat/engine.hpp"
#include "splat/io.hpp"
#include "splat/metrics.hpp"

namespace fs = std::filesystem;
using namespace splat;

namespace {

// Views in original dataset order (every eighth went to the test list).
std::vector<View> all_views(const Dataset& ds) {
    std::vector<View> out;
    std::size_t t = 0, r = 0, i = 0;
    while (t < ds.test_views.size() || r < ds.train_views.size()) {
        if (i % 8 == 0 && t < ds.test_views.size())
            out.push_back(ds.test_views[t++]);
        else if (r < ds.train_views.size())
            out.push_back(ds.train_views[r++]);
        else
            out.push_back(ds.test_views[t++]);
        ++i;
    }
    return out;
}

int run_synth(const std::string& scene, const std::string& out, std::uint64_t seed) {
    SynthSpec spec;
    spec.scene = scene;
    Dataset ds = synth_dataset(spec, seed, out);
    std::printf("synth: scene=%s n_views=%zu n_points=%zu out=%s\n", scene.c_str(),
                ds.train_views.size() + ds.test_views.size(), ds.points.size(), out.c_str());
    return 0;
}

struct TrainFlags {
    std::string data, out, config_path;
    std::string vgd = "on", lhe = "on";
    std::optional<double> gamma, tau;
    std::optional<int> iters;
    std::optional<std::uint64_t> seed;
};

int run_train(const TrainFlags& f, int threads) {
    TrainConfig cfg;
    bool config_sets_end = false;
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) throw std::runtime_error("train: cannot open config " + f.config_path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        cfg = train_config_from_json(text);
        config_sets_end = nlohmann::json::parse(text).contains("densify_end_step");
    }
    if (f.gamma) cfg.densify.variance_scale = *f.gamma;
    if (f.tau) cfg.densify.grad_threshold = *f.tau;
    if (f.iters) {
        cfg.iterations = *f.iters;
        if (!config_sets_end) cfg.densify.end_step = cfg.iterations / 2;
    }
    if (f.seed) cfg.seed = *f.seed;
    cfg.vgd = f.vgd == "on";
    cfg.lhe = f.lhe == "on";
    if (!cfg.vgd) cfg.densify.variance_scale = 0.0;
    if (threads > 1) cfg.parallel = true;
    if (!(cfg.densify.grad_threshold > 0) || !std::isfinite(cfg.densify.variance_scale))
        throw CLI::ValidationError("train", "non-finite or non-positive densify thresholds");

    Dataset ds = load_dataset(f.data);
    Scene scene = ds.to_scene(cfg.feature_dim, cfg.seed);
    fs::create_directories(f.out);
    {
        std::ofstream echo(fs::path(f.out) / "config.json");
        echo << train_config_to_json(cfg);
    }
    TrainResult res = train(scene, cfg);
    save_checkpoint((fs::path(f.out) / "checkpoint.ckpt").string(), res.checkpoint);
    std::ofstream(fs::path(f.out) / "metrics.csv") << res.metrics_csv;
    std::ofstream(fs::path(f.out) / "stats.csv") << res.stats_csv;
    std::ofstream(fs::path(f.out) / "events.csv") << res.events_csv;
    std::printf("train: iterations=%d n_gaussians=%zu out=%s\n", res.checkpoint.iteration,
                res.checkpoint.gaussians.size(), f.out.c_str());
    return 0;
}

int run_render(const std::string& ckpt_path, const std::string& camera_arg,
               const std::string& data_dir, const std::string& out) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Camera cam;
    bool is_index = !camera_arg.empty() &&
                    camera_arg.find_first_not_of("0123456789") == std::string::npos;
    if (is_index) {
        if (data_dir.empty())
            throw CLI::ValidationError("render", "--camera <index> requires --data <dir>");
        std::vector<View> views = all_views(load_dataset(data_dir));
        std::size_t idx = std::stoul(camera_arg);
        if (idx >= views.size())
            throw std::runtime_error("render: camera index " + camera_arg + " out of range (" +
                                     std::to_string(views.size()) + " views)");
        cam = views[idx].camera;
    } else {
        cam = load_camera_json(camera_arg);
    }
    write_png(out, render_view(ckpt, cam));
    std::printf("render: camera=%s out=%s\n", camera_arg.c_str(), out.c_str());
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& report) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Dataset ds = load_dataset(data_dir);
    EvalReport rep = evaluate(ckpt, ds.test_views);
    std::ofstream out(report);
    if (!out) throw std::runtime_error("eval: cannot open " + report);
    out.precision(17);
    out << "view,psnr,ssim\n";
    for (std::size_t i = 0; i < rep.psnr.size(); ++i)
        out << i << "," << rep.psnr[i] << "," << rep.ssim[i] << "\n";
    out << "mean," << rep.mean_psnr << "," << rep.mean_ssim << "\n";
    std::printf("eval: n_views=%zu mean_psnr=%.3f mean_ssim=%.4f report=%s\n", rep.psnr.size(),
                rep.mean_psnr, rep.mean_ssim, report.c_str());
    return 0;
}

int run_stats(const std::string& ckpt_path, const std::string& data_dir, const std::string& out) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Dataset ds = load_dataset(data_dir);
    GradAccum accum = accumulate_stats(ckpt, ds.train_views);
    accum.export_csv(out);
    std::printf("stats: n_gaussians=%zu n_views=%zu out=%s\n", accum.size(),
                ds.train_views.size(), out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CPU differentiable Gaussian-splatting micro-trainer"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads,
                   "Worker thread cap; >1 enables the parallel raster kernels (default: serial)");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    std::string synth_scene, synth_out;
    std::uint64_t synth_seed = 0;
    synth->add_option("--scene", synth_scene, "Scene name: texture or specular")
        ->required()
        ->check(CLI::IsMember({"texture", "specular"}));
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", synth_seed, "Generator seed");

    auto* train_cmd = app.add_subcommand("train", "Optimize a model on a dataset");
    TrainFlags tf;
    train_cmd->add_option("--data", tf.data, "Dataset directory")->required();
    train_cmd->add_option("--out", tf.out,
                          "Output directory (checkpoint.ckpt, metrics.csv [iter,loss,psnr_train,"
                          "n_gaussians], stats.csv [iter,q1_dbar..q4_dbar], events.csv [step,"
                          "n_before,n_selected_vgd_only,n_selected_baseline,n_after], config.json)")
        ->required();
    train_cmd->add_option("--vgd", tf.vgd, "Variance-guided densification: on|off")
        ->check(CLI::IsMember({"on", "off"}));
    train_cmd->add_option("--lhe", tf.lhe, "Hash-encoded view directions: on|off")
        ->check(CLI::IsMember({"on", "off"}));
    train_cmd->add_option("--gamma", tf.gamma, "Variance scale in the densify score");
    train_cmd->add_option("--tau", tf.tau, "Densification threshold");
    train_cmd->add_option("--iters", tf.iters, "Iteration count");
    train_cmd->add_option("--seed", tf.seed, "Training seed");
    train_cmd->add_option("--config", tf.config_path,
                          "Flat JSON config; precedence: CLI flags > config file > defaults");

    auto* render_cmd = app.add_subcommand("render", "Render one view from a checkpoint");
    std::string r_ckpt, r_camera, r_data, r_out;
    render_cmd->add_option("--ckpt", r_ckpt, "Checkpoint file")->required();
    render_cmd->add_option("--camera", r_camera, "View index (with --data) or camera JSON file")
        ->required();
    render_cmd->add_option("--data", r_data, "Dataset directory for index cameras");
    render_cmd->add_option("--out", r_out, "Output PNG")->required();

    auto* eval_cmd = app.add_subcommand("eval", "Score held-out views");
    std::string e_ckpt, e_data, e_report;
    eval_cmd->add_option("--ckpt", e_ckpt, "Checkpoint file")->required();
    eval_cmd->add_option("--data", e_data, "Dataset directory")->required();
    eval_cmd->add_option("--report", e_report, "Output CSV [view,psnr,ssim; final mean row]")
        ->required();

    auto* stats_cmd = app.add_subcommand("stats", "Replay one gradient-statistics pass");
    std::string s_ckpt, s_data, s_out;
    stats_cmd->add_option("--ckpt", s_ckpt, "Checkpoint file")->required();
    stats_cmd->add_option("--data", s_data, "Dataset directory")->required();
    stats_cmd->add_option("--out", s_out,
                          "Output CSV [gaussian_id,gnorm,dbar,var_r,var_g,var_b]")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors exit 2; --help exits 0
    }

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    try {
        if (*synth) return run_synth(synth_scene, synth_out, synth_seed);
        if (*train_cmd) return run_train(tf, threads);
        if (*render_cmd) return run_render(r_ckpt, r_camera, r_data, r_out);
        if (*eval_cmd) return run_eval(e_ckpt, e_data, e_report);
        if (*stats_cmd) return run_stats(s_ckpt, s_data, s_out);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
