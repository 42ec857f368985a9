#include "splat/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "splat/rng.hpp"

namespace splat {

bool Camera::valid(std::string* why) const {
    auto fail = [&](const char* msg) {
        if (why) *why = msg;
        return false;
    };
    if (width < 1 || height < 1) return fail("image dimensions must be >= 1");
    if (!(fx > 0) || !(fy > 0)) return fail("focal lengths must be positive");
    Mat3 rrt = w2c_rotation * w2c_rotation.transposed();
    Mat3 eye = Mat3::identity();
    for (int i = 0; i < 9; ++i)
        if (std::abs(rrt.m[i] - eye.m[i]) > 1e-9) return fail("rotation block not orthonormal");
    return true;
}

GaussianSet init_from_points(const std::vector<Vec3>& points, int feature_dim, uint64_t seed) {
    if (points.empty()) throw std::invalid_argument("init_from_points: empty point set");
    for (const Vec3& p : points)
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw std::invalid_argument("init_from_points: non-finite coordinate");

    const std::size_t n = points.size();
    GaussianSet set;
    set.feature_dim = feature_dim;
    set.positions = points;
    set.log_scales.resize(n);
    set.rotations.assign(n, Quat{});
    set.opacity_logits.assign(n, logit(0.1));
    set.features.resize(n);

    // Mean distance to up to 3 nearest neighbors, brute force.
    for (std::size_t i = 0; i < n; ++i) {
        double best[3] = {HUGE_VAL, HUGE_VAL, HUGE_VAL};
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d = (points[j] - points[i]).norm();
            if (d < best[0]) {
                best[2] = best[1];
                best[1] = best[0];
                best[0] = d;
            } else if (d < best[1]) {
                best[2] = best[1];
                best[1] = d;
            } else if (d < best[2]) {
                best[2] = d;
            }
        }
        double sum = 0;
        int cnt = 0;
        for (double d : best)
            if (std::isfinite(d)) {
                sum += d;
                ++cnt;
            }
        double mean = cnt > 0 ? sum / cnt : 1e-7;
        mean = std::max(mean, 1e-7);
        double ls = std::log(mean);
        set.log_scales[i] = {ls, ls, ls};
    }

    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        set.features[i].resize(feature_dim);
        for (int f = 0; f < feature_dim; ++f) set.features[i][f] = rng.normal(0.0, 0.1);
    }
    return set;
}

Mat3 build_covariance(const Vec3& log_scale, const Quat& rotation) {
    if (rotation.norm() == 0) throw std::invalid_argument("build_covariance: zero quaternion");
    Mat3 r = quat_to_rotation(rotation);
    Mat3 d{};
    d(0, 0) = std::exp(2 * log_scale.x);
    d(1, 1) = std::exp(2 * log_scale.y);
    d(2, 2) = std::exp(2 * log_scale.z);
    return r * d * r.transposed();
}

}  // namespace splat
