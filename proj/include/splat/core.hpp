#pragma once
#include <string>
#include <vector>

#include "splat/math.hpp"

namespace splat {

// Structure-of-arrays Gaussian primitives. Scales are stored as log of the
// per-axis standard deviation, opacities as logits; activation happens at use.
struct GaussianSet {
    std::vector<Vec3> positions;
    std::vector<Vec3> log_scales;
    std::vector<Quat> rotations;
    std::vector<double> opacity_logits;
    std::vector<std::vector<double>> features;  // per-Gaussian embedding, dim F_a
    int feature_dim = 16;

    std::size_t size() const { return positions.size(); }
    double activated_opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }
    Vec3 activated_scale(std::size_t i) const {
        return {std::exp(log_scales[i].x), std::exp(log_scales[i].y), std::exp(log_scales[i].z)};
    }
};

struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    Mat3 w2c_rotation = Mat3::identity();
    Vec3 w2c_translation;

    Vec3 to_camera(const Vec3& p) const { return w2c_rotation * p + w2c_translation; }
    // Camera center in world coordinates: -R^T t.
    Vec3 center() const {
        Mat3 rt = w2c_rotation.transposed();
        Vec3 c = rt * w2c_translation;
        return {-c.x, -c.y, -c.z};
    }
    bool valid(std::string* why = nullptr) const;
};

// H x W x 3 image in [0,1], row-major, channel-interleaved.
struct Image {
    int width = 0, height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, double fill = 0.0) : width(w), height(h), data(std::size_t(w) * h * 3, fill) {}
    double& at(int x, int y, int c) { return data[(std::size_t(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return data[(std::size_t(y) * width + x) * 3 + c]; }
    std::size_t pixels() const { return std::size_t(width) * height; }
};

struct View {
    Camera camera;
    Image image;
};

struct Scene {
    GaussianSet gaussians;
    std::vector<View> train_views;
    std::vector<View> test_views;
};

// One Gaussian per point: scale from mean distance to the 3 nearest neighbors
// (fewer when fewer exist), opacity 0.1, identity rotation, seeded features.
GaussianSet init_from_points(const std::vector<Vec3>& points, int feature_dim, uint64_t seed);

// Sigma = R diag(exp(2 log_scale)) R^T. Throws on a zero quaternion.
Mat3 build_covariance(const Vec3& log_scale, const Quat& rotation);

}  // namespace splat
