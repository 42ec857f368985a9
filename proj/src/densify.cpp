#include "splat/densify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "splat/rng.hpp"

namespace splat {

void DensifyConfig::validate() const {
    if (!(grad_threshold > 0)) throw std::invalid_argument("densify: grad_threshold must be > 0");
    if (variance_scale < 0) throw std::invalid_argument("densify: variance_scale must be >= 0");
    if (interval < 1) throw std::invalid_argument("densify: interval must be >= 1");
    if (!(percent_dense > 0 && percent_dense < 1))
        throw std::invalid_argument("densify: percent_dense must be in (0,1)");
    if (!(split_factor > 0)) throw std::invalid_argument("densify: split_factor must be > 0");
}

std::vector<std::size_t> select(const GradAccum& accum, const DensifyConfig& cfg) {
    cfg.validate();
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < accum.size(); ++k)
        if (accum.criteria(k, cfg.variance_scale, cfg.grad_threshold).densify) out.push_back(k);
    return out;
}

namespace {

void append_gaussian(GaussianSet& dst, const GaussianSet& src, std::size_t k) {
    dst.positions.push_back(src.positions[k]);
    dst.log_scales.push_back(src.log_scales[k]);
    dst.rotations.push_back(src.rotations[k]);
    dst.opacity_logits.push_back(src.opacity_logits[k]);
    dst.features.push_back(src.features[k]);
}

}  // namespace

GaussianSet clone_or_split(const GaussianSet& set, const std::vector<std::size_t>& indices,
                           const std::vector<Vec3>& position_nudges, const DensifyConfig& cfg,
                           double scene_extent, std::uint64_t seed,
                           std::vector<std::int64_t>* source_of) {
    cfg.validate();
    if (position_nudges.size() != indices.size())
        throw std::invalid_argument("clone_or_split: one nudge per selected index required");
    for (std::size_t k : indices)
        if (k >= set.size()) throw std::out_of_range("clone_or_split: index out of range");

    std::vector<char> selected(set.size(), 0);
    std::vector<std::size_t> nudge_of(set.size(), 0);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        selected[indices[i]] = 1;
        nudge_of[indices[i]] = i;
    }

    const double threshold = cfg.percent_dense * scene_extent;
    const double log_shrink = std::log(cfg.split_factor);
    Rng rng(seed);
    GaussianSet out;
    out.feature_dim = set.feature_dim;
    if (source_of) source_of->clear();
    auto record = [&](std::int64_t src) {
        if (source_of) source_of->push_back(src);
    };
    for (std::size_t k = 0; k < set.size(); ++k) {
        if (!selected[k]) {
            append_gaussian(out, set, k);
            record(std::int64_t(k));
            continue;
        }
        Vec3 s = set.activated_scale(k);
        double max_scale = std::max({s.x, s.y, s.z});
        if (max_scale < threshold) {
            // Clone: keep the original, add a nudged copy.
            append_gaussian(out, set, k);
            record(std::int64_t(k));
            append_gaussian(out, set, k);
            record(-1);
            out.positions.back() += position_nudges[nudge_of[k]];
        } else {
            // Split: two children sampled from the parent density, shrunk.
            Mat3 rot = quat_to_rotation(set.rotations[k]);
            for (int child = 0; child < 2; ++child) {
                append_gaussian(out, set, k);
                record(-1);
                Vec3 local{rng.normal() * s.x, rng.normal() * s.y, rng.normal() * s.z};
                out.positions.back() += rot * local;
                out.log_scales.back() = {set.log_scales[k].x - log_shrink,
                                         set.log_scales[k].y - log_shrink,
                                         set.log_scales[k].z - log_shrink};
            }
        }
    }
    return out;
}

std::vector<char> prune(GaussianSet& set, double prune_opacity, GradAccum* accum,
                        const std::vector<double>* screen_radii, double max_screen_radius) {
    if (screen_radii && screen_radii->size() != set.size())
        throw std::invalid_argument("prune: screen radius list size mismatch");
    std::vector<char> keep(set.size(), 1);
    for (std::size_t k = 0; k < set.size(); ++k) {
        if (set.activated_opacity(k) < prune_opacity) keep[k] = 0;
        if (screen_radii && (*screen_radii)[k] > max_screen_radius) keep[k] = 0;
    }
    std::size_t w = 0;
    for (std::size_t k = 0; k < set.size(); ++k) {
        if (!keep[k]) continue;
        if (w != k) {
            set.positions[w] = set.positions[k];
            set.log_scales[w] = set.log_scales[k];
            set.rotations[w] = set.rotations[k];
            set.opacity_logits[w] = set.opacity_logits[k];
            set.features[w] = std::move(set.features[k]);
        }
        ++w;
    }
    set.positions.resize(w);
    set.log_scales.resize(w);
    set.rotations.resize(w);
    set.opacity_logits.resize(w);
    set.features.resize(w);
    if (accum) accum->compact(keep);
    return keep;
}

void reset_opacity(GaussianSet& set, double ceiling) {
    double cap = logit(ceiling);
    for (double& o : set.opacity_logits) o = std::min(o, cap);
}

double scene_extent(const std::vector<Camera>& cameras) {
    if (cameras.empty()) throw std::invalid_argument("scene_extent: no cameras");
    Vec3 mean{0, 0, 0};
    for (const Camera& c : cameras) mean += c.center();
    mean = {mean.x / cameras.size(), mean.y / cameras.size(), mean.z / cameras.size()};
    double r = 0;
    for (const Camera& c : cameras) r = std::max(r, (c.center() - mean).norm());
    return 1.1 * r;
}

}  // namespace splat
