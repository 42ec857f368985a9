// Serial vs OpenMP tile-rasterizer timing on a synthetic cloud.
#include <benchmark/benchmark.h>

#include "splat/raster.hpp"
#include "splat/rng.hpp"

using namespace splat;

namespace {

GaussianSet make_cloud(std::size_t n, std::uint64_t seed) {
    GaussianSet set;
    set.feature_dim = 0;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        set.positions.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                                 rng.uniform(4.0, 8.0)});
        set.log_scales.push_back({rng.uniform(-2.5, -1.0), rng.uniform(-2.5, -1.0),
                                  rng.uniform(-2.5, -1.0)});
        Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        set.rotations.push_back(q);
        set.opacity_logits.push_back(rng.uniform(-1.0, 2.0));
        set.features.emplace_back();
    }
    return set;
}

Camera make_camera() {
    Camera cam;
    cam.fx = cam.fy = 300;
    cam.width = cam.height = 256;
    cam.cx = cam.cy = 128;
    return cam;
}

std::vector<Vec3> make_colors(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec3> rgb(n);
    for (auto& c : rgb) c = {rng.uniform(), rng.uniform(), rng.uniform()};
    return rgb;
}

void bench_render(benchmark::State& state, bool parallel) {
    const std::size_t n = std::size_t(state.range(0));
    GaussianSet set = make_cloud(n, 7);
    std::vector<Vec3> rgb = make_colors(n, 11);
    Camera cam = make_camera();
    RasterConfig cfg;
    cfg.parallel = parallel;
    for (auto _ : state) {
        RenderContext ctx;
        Image img = render(set, cam, rgb, cfg, ctx);
        benchmark::DoNotOptimize(img.data.data());
    }
}

void bench_backward(benchmark::State& state, bool parallel) {
    const std::size_t n = std::size_t(state.range(0));
    GaussianSet set = make_cloud(n, 7);
    std::vector<Vec3> rgb = make_colors(n, 11);
    Camera cam = make_camera();
    RasterConfig cfg;
    cfg.parallel = parallel;
    RenderContext ctx;
    Image img = render(set, cam, rgb, cfg, ctx);
    Image dl(img.width, img.height);
    for (double& v : dl.data) v = 1.0 / double(dl.data.size());
    for (auto _ : state) {
        GradAccum accum(n, parallel ? Estimator::kExact : Estimator::kPaper);
        accum.begin_view();
        ParamGrads grads = backward(ctx, dl, &accum);
        benchmark::DoNotOptimize(grads.position.data());
    }
}

}  // namespace

BENCHMARK_CAPTURE(bench_render, serial, false)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bench_render, parallel, true)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bench_backward, serial, false)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bench_backward, parallel, true)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
