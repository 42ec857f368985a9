#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "splat/appearance.hpp"
#include "splat/core.hpp"
#include "splat/densify.hpp"
#include "splat/raster.hpp"

namespace splat {

struct TrainConfig {
    int iterations = 7000;
    double lr_position = 1.6e-4;        // decayed exponentially to lr_position_final
    double lr_position_final = 1.6e-6;
    double lr_log_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_opacity = 5e-2;
    double lr_feature = 2.5e-3;
    double lr_mlp = 2e-3;
    double lr_hash = 2e-3;
    double lambda_dssim = 0.2;
    DensifyConfig densify;
    bool lhe = true;   // hash-encoded view direction; off = raw direction input
    bool vgd = true;   // variance term in densification; off = gradient norm only
    double noise_std = 0.02;  // training-time direction jitter (lhe only)
    bool parallel = false;    // OpenMP raster kernels (implies exact streaming stats)
    std::uint64_t seed = 0;
    DirHashGridConfig grid;
    int feature_dim = 16;

    void validate() const;  // throws std::invalid_argument
};

// Bias-corrected Adam, beta1 0.9, beta2 0.999, eps 1e-15.
struct AdamState {
    std::vector<double> m, v;
    std::int64_t t = 0;

    void resize(std::size_t n);
    // Reorder moments: entry i of the result takes the moments of source[i]
    // (dim values each), zeros where source[i] < 0.
    void remap(const std::vector<std::int64_t>& source, std::size_t dim);
    void compact(const std::vector<char>& keep, std::size_t dim);
};

// One update step. Returns false and leaves params untouched when grads
// contain a non-finite value; throws on shape mismatch.
bool adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads,
               double lr);

struct Checkpoint {
    std::uint32_t version = 1;
    GaussianSet gaussians;
    DirHashGrid grid;
    ColorMlp mlp;
    TrainConfig config;
    int iteration = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::string metrics_csv;  // iter,loss,psnr_train,n_gaussians
    std::string stats_csv;    // iter,q1_dbar,q2_dbar,q3_dbar,q4_dbar
    std::string events_csv;   // step,n_before,n_selected_vgd_only,n_selected_baseline,n_after
};

// Full optimization over scene.train_views. Deterministic given cfg.seed in
// sequential mode. Throws on a non-finite loss.
TrainResult train(const Scene& scene, const TrainConfig& cfg);

// Appearance-decoded forward render (clean view directions, no noise).
Image render_view(const Checkpoint& ckpt, const Camera& camera, const RasterConfig& rcfg = {});

struct EvalReport {
    std::vector<double> psnr;
    std::vector<double> ssim;
    double mean_psnr = 0;
    double mean_ssim = 0;
};

// Renders every view and scores it; throws on an empty view list.
EvalReport evaluate(const Checkpoint& ckpt, const std::vector<View>& views);

// One accumulation pass over the views with no optimization: render, loss
// gradient, analytic backward streaming into the returned accumulator.
// Clean view directions, sequential kernels.
GradAccum accumulate_stats(const Checkpoint& ckpt, const std::vector<View>& views);

}  // namespace splat
