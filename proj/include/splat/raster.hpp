#pragma once
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "splat/core.hpp"
#include "splat/gradstats.hpp"

namespace splat {

struct RasterConfig {
    double near_plane = 0.01;
    double lowpass = 0.3;          // added to cov2d diagonal, px^2
    int tile_size = 16;
    double alpha_min = 1.0 / 255.0;
    double alpha_max = 0.9999;
    double min_transmittance = 1e-4;
    Vec3 background{0, 0, 0};
    bool weighted_stream = true;   // stream w * dL/dC rather than raw dL/dC
    bool parallel = false;         // OpenMP tile kernels; serial is the reference
};

struct Projected2D {
    std::size_t index = 0;  // into the GaussianSet
    Vec2 ndc;
    Vec2 pixel;
    Sym2 cov2d;
    Sym2 conic;
    Vec3 cam_point;         // camera-space position
    double depth = 0;
    double radius = 0;      // 3-sigma bound, px
};

// Everything backward needs. The GaussianSet and rgb passed to render() must
// outlive the context; per-pixel weights are replayed from the stored
// projections rather than stored densely.
struct RenderContext {
    const GaussianSet* gaussians = nullptr;
    Camera camera;
    RasterConfig config;
    std::vector<Projected2D> projected;
    std::vector<Vec3> rgb;                       // per-Gaussian input colors
    std::vector<std::vector<std::uint32_t>> tile_lists;  // indices into projected, depth-sorted
    int tiles_x = 0, tiles_y = 0;
    std::vector<double> final_transmittance;     // per pixel
    std::vector<std::uint32_t> n_contrib;        // per pixel, list positions processed

    // Replays compositing for one pixel; returns (gaussian index, weight) pairs.
    std::vector<std::pair<std::size_t, double>> pixel_weights(int px, int py) const;
};

struct ParamGrads {
    std::vector<Vec3> position;
    std::vector<Vec3> log_scale;
    std::vector<std::array<double, 4>> rotation;  // w,x,y,z (raw quaternion)
    std::vector<double> opacity_logit;
    std::vector<Vec3> rgb;

    void resize(std::size_t n);
};

// Perspective projection + EWA covariance. Gaussians behind the near plane or
// projecting off-screen are culled.
std::vector<Projected2D> project(const GaussianSet& gaussians, const Camera& camera,
                                 const RasterConfig& cfg);

// Front-to-back alpha compositing over 16x16 tiles.
Image render(const GaussianSet& gaussians, const Camera& camera, const std::vector<Vec3>& rgb,
             const RasterConfig& cfg, RenderContext& ctx);

// Analytic gradients for all Gaussian parameters and input colors. When accum
// is given, streams per-pixel color gradients (Eq. mode per accum's estimator)
// and finalizes the view for every visible Gaussian.
ParamGrads backward(const RenderContext& ctx, const Image& dL_dimage, GradAccum* accum);

}  // namespace splat
