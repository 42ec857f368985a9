#pragma once
#include <cstdint>
#include <vector>

#include "splat/core.hpp"
#include "splat/gradstats.hpp"

namespace splat {

// Adaptive density control: variance-guided selection, clone/split, opacity
// pruning, periodic opacity reset.
struct DensifyConfig {
    double grad_threshold = 4e-4;       // selection threshold on the combined score
    double variance_scale = 2048.0;     // weight of mean gradient variance in the score
    int interval = 100;                 // steps between densifications
    int start_step = 500;
    int end_step = 3500;
    double percent_dense = 0.01;        // clone/split boundary as a fraction of scene extent
    double prune_opacity = 0.005;
    double split_factor = 1.6;          // children's scales = parent's / split_factor
    int opacity_reset_interval = 3000;

    void validate() const;  // throws std::invalid_argument on a bad field
};

// Indices whose combined score variance_scale * D_bar + g_norm exceeds
// grad_threshold, ascending.
std::vector<std::size_t> select(const GradAccum& accum, const DensifyConfig& cfg);

// Clone (small Gaussians: duplicate, copy nudged by the given per-selection
// offset) or split (large ones: 2 children sampled from the parent density,
// scales shrunk by split_factor, parent removed). "Small" means every
// activated scale axis is below percent_dense * scene_extent.
// position_nudges[i] belongs to indices[i]; throws on size mismatch or an
// out-of-range index. When source_of is given it receives, per output
// Gaussian, the input index it was carried over from, or -1 for freshly
// created ones (clone copies and split children).
GaussianSet clone_or_split(const GaussianSet& set, const std::vector<std::size_t>& indices,
                           const std::vector<Vec3>& position_nudges, const DensifyConfig& cfg,
                           double scene_extent, std::uint64_t seed,
                           std::vector<std::int64_t>* source_of = nullptr);

// Removes Gaussians with activated opacity < prune_opacity and, when
// screen_radii is given, those whose last-known radius exceeds
// max_screen_radius. Survivor statistics in accum (optional) are compacted in
// order. Returns the keep mask that was applied.
std::vector<char> prune(GaussianSet& set, double prune_opacity, GradAccum* accum = nullptr,
                        const std::vector<double>* screen_radii = nullptr,
                        double max_screen_radius = 0.0);

// Clamps every opacity to at most ceiling: logit <- min(logit, logit(ceiling)).
void reset_opacity(GaussianSet& set, double ceiling = 0.01);

// Radius of the bounding sphere of the camera centers, times 1.1.
double scene_extent(const std::vector<Camera>& cameras);

}  // namespace splat
