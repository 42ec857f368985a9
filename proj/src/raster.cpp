#include "splat/raster.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace splat {

namespace {

struct Jacobian {  // 2x3 perspective Jacobian, pixel units
    double m[2][3];
};

Jacobian perspective_jacobian(const Camera& cam, const Vec3& t) {
    Jacobian j{};
    double iz = 1.0 / t.z, iz2 = iz * iz;
    j.m[0][0] = cam.fx * iz;
    j.m[0][2] = -cam.fx * t.x * iz2;
    j.m[1][1] = cam.fy * iz;
    j.m[1][2] = -cam.fy * t.y * iz2;
    return j;
}

// V = J M J^T for symmetric 3x3 M.
Sym2 project_covariance(const Jacobian& j, const Mat3& m3) {
    double jm[2][3];
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c) {
            jm[r][c] = 0;
            for (int k = 0; k < 3; ++k) jm[r][c] += j.m[r][k] * m3(k, c);
        }
    Sym2 v;
    v.a = jm[0][0] * j.m[0][0] + jm[0][1] * j.m[0][1] + jm[0][2] * j.m[0][2];
    v.b = jm[0][0] * j.m[1][0] + jm[0][1] * j.m[1][1] + jm[0][2] * j.m[1][2];
    v.c = jm[1][0] * j.m[1][0] + jm[1][1] * j.m[1][1] + jm[1][2] * j.m[1][2];
    return v;
}

// One composited contributor at one pixel.
struct Contribution {
    std::uint32_t proj;  // index into ctx.projected
    double alpha, gexp, dx, dy, weight, transmittance;
    bool clamped;
};

// Replays front-to-back compositing at one pixel sample; returns final T.
template <typename Fn>
double composite(const RenderContext& ctx, const std::vector<std::uint32_t>& list, double sx,
                 double sy, std::uint32_t* processed, Fn&& emit) {
    const RasterConfig& cfg = ctx.config;
    double t = 1.0;
    std::uint32_t count = 0;
    for (std::uint32_t li = 0; li < list.size(); ++li) {
        if (t < cfg.min_transmittance) break;
        const Projected2D& g = ctx.projected[list[li]];
        double dx = sx - g.pixel.x, dy = sy - g.pixel.y;
        double power = -0.5 * g.conic.quad(dx, dy);
        count = li + 1;
        if (power > 0) power = 0;
        double gexp = std::exp(power);
        double opacity = ctx.gaussians->activated_opacity(g.index);
        double alpha = opacity * gexp;
        if (alpha < cfg.alpha_min) continue;
        bool clamped = alpha > cfg.alpha_max;
        if (clamped) alpha = cfg.alpha_max;
        emit(Contribution{list[li], alpha, gexp, dx, dy, alpha * t, t, clamped});
        t *= 1.0 - alpha;
    }
    if (processed) *processed = count;
    return t;
}

// Per-Gaussian pixel-loop accumulation, merged into parameter grads afterwards.
struct PixelAccum {
    Vec2 gpix;
    double gconic[3] = {0, 0, 0};
    double glogit = 0;
    Vec3 grgb;
    double max_weight = 0;
    bool touched = false;
    StreamStat stream[3];  // parallel path only (exact mode)
};

void pixel_backward(const RenderContext& ctx, const Image& dl, int px, int py,
                    const std::vector<std::uint32_t>& list, std::vector<PixelAccum>& acc,
                    GradAccum* direct_accum) {
    double sx = px + 0.5, sy = py + 0.5;
    std::vector<Contribution> contribs;
    double final_t = composite(ctx, list, sx, sy, nullptr,
                               [&](const Contribution& c) { contribs.push_back(c); });
    const double dldc[3] = {dl.at(px, py, 0), dl.at(px, py, 1), dl.at(px, py, 2)};

    double suffix[3] = {final_t * ctx.config.background.x, final_t * ctx.config.background.y,
                        final_t * ctx.config.background.z};
    // Reverse pass for d/d alpha, forward-order values already recorded.
    std::vector<double> dalpha(contribs.size(), 0.0);
    for (std::size_t i = contribs.size(); i-- > 0;) {
        const Contribution& c = contribs[i];
        const Vec3& rgb = ctx.rgb[ctx.projected[c.proj].index];
        const double col[3] = {rgb.x, rgb.y, rgb.z};
        double da = 0;
        for (int ch = 0; ch < 3; ++ch)
            da += dldc[ch] * (c.transmittance * col[ch] - suffix[ch] / (1.0 - c.alpha));
        dalpha[i] = da;
        for (int ch = 0; ch < 3; ++ch) suffix[ch] += c.weight * col[ch];
    }

    for (std::size_t i = 0; i < contribs.size(); ++i) {
        const Contribution& c = contribs[i];
        const Projected2D& g = ctx.projected[c.proj];
        PixelAccum& a = acc[c.proj];
        a.touched = true;
        a.max_weight = std::max(a.max_weight, c.weight);
        for (int ch = 0; ch < 3; ++ch) (&a.grgb.x)[ch] += c.weight * dldc[ch];

        double opacity = ctx.gaussians->activated_opacity(g.index);
        if (!c.clamped) {
            double dg = dalpha[i] * opacity;            // d/d exp term
            double dpow = dg * c.gexp;                  // d/d power
            a.glogit += dalpha[i] * c.gexp * opacity * (1.0 - opacity);
            double qdx = g.conic.a * c.dx + g.conic.b * c.dy;
            double qdy = g.conic.b * c.dx + g.conic.c * c.dy;
            a.gpix.x += dpow * qdx;
            a.gpix.y += dpow * qdy;
            a.gconic[0] += dpow * (-0.5 * c.dx * c.dx);
            a.gconic[1] += dpow * (-c.dx * c.dy);
            a.gconic[2] += dpow * (-0.5 * c.dy * c.dy);
        }

        for (int ch = 0; ch < 3; ++ch) {
            double gval = ctx.config.weighted_stream ? c.weight * dldc[ch] : dldc[ch];
            if (direct_accum)
                direct_accum->stream(g.index, ch, gval);
            else
                stream_update_exact(acc[c.proj].stream[ch], gval);
        }
    }
}

// Chains the per-pixel accumulation through projection into parameter space.
void finalize_gaussian(const RenderContext& ctx, const Projected2D& g, const PixelAccum& a,
                       ParamGrads& grads) {
    const Camera& cam = ctx.camera;
    const GaussianSet& set = *ctx.gaussians;
    std::size_t i = g.index;

    grads.rgb[i] += a.grgb;
    grads.opacity_logit[i] += a.glogit;

    // conic = V^-1: full-matrix gradient dL/dV = -Q Gq Q.
    double qa = g.conic.a, qb = g.conic.b, qc = g.conic.c;
    double fa = a.gconic[0], fb = a.gconic[1] * 0.5, fc = a.gconic[2];
    // Q * Gq
    double t00 = qa * fa + qb * fb, t01 = qa * fb + qb * fc;
    double t10 = qb * fa + qc * fb, t11 = qb * fb + qc * fc;
    // -(Q Gq) Q
    double gv00 = -(t00 * qa + t01 * qb);
    double gv01 = -(t00 * qb + t01 * qc);
    double gv11 = -(t10 * qb + t11 * qc);
    double gv10 = -(t10 * qa + t11 * qb);
    // symmetric by construction; average guards roundoff
    double gvo = 0.5 * (gv01 + gv10);

    const Mat3& w = cam.w2c_rotation;
    Quat qn = set.rotations[i].normalized();
    Mat3 r = quat_to_rotation(qn);
    Mat3 d{};
    const Vec3& ls = set.log_scales[i];
    d(0, 0) = std::exp(2 * ls.x);
    d(1, 1) = std::exp(2 * ls.y);
    d(2, 2) = std::exp(2 * ls.z);
    Mat3 sigma = r * d * r.transposed();
    Mat3 m3 = w * sigma * w.transposed();
    Jacobian j = perspective_jacobian(cam, g.cam_point);

    // Gm3 = J^T Gv J
    Mat3 gm3;
    for (int rr = 0; rr < 3; ++rr)
        for (int cc = 0; cc < 3; ++cc) {
            double jr0 = j.m[0][rr], jr1 = j.m[1][rr];
            double jc0 = j.m[0][cc], jc1 = j.m[1][cc];
            gm3(rr, cc) = jr0 * gv00 * jc0 + jr0 * gvo * jc1 + jr1 * gvo * jc0 + jr1 * gv11 * jc1;
        }
    Mat3 gsigma = w.transposed() * gm3 * w;

    // dL/dJ = 2 Gv J M
    double jm[2][3];
    for (int rr = 0; rr < 2; ++rr)
        for (int cc = 0; cc < 3; ++cc) {
            jm[rr][cc] = 0;
            for (int k = 0; k < 3; ++k) jm[rr][cc] += j.m[rr][k] * m3(k, cc);
        }
    double gj[2][3];
    for (int cc = 0; cc < 3; ++cc) {
        gj[0][cc] = 2 * (gv00 * jm[0][cc] + gvo * jm[1][cc]);
        gj[1][cc] = 2 * (gvo * jm[0][cc] + gv11 * jm[1][cc]);
    }

    const Vec3& t = g.cam_point;
    double iz = 1.0 / t.z, iz2 = iz * iz, iz3 = iz2 * iz;
    Vec3 gt;
    gt.x = gj[0][2] * (-cam.fx * iz2);
    gt.y = gj[1][2] * (-cam.fy * iz2);
    gt.z = gj[0][0] * (-cam.fx * iz2) + gj[0][2] * (2 * cam.fx * t.x * iz3) +
           gj[1][1] * (-cam.fy * iz2) + gj[1][2] * (2 * cam.fy * t.y * iz3);
    // mean position through the pixel projection
    gt.x += a.gpix.x * cam.fx * iz;
    gt.y += a.gpix.y * cam.fy * iz;
    gt.z += -a.gpix.x * cam.fx * t.x * iz2 - a.gpix.y * cam.fy * t.y * iz2;

    grads.position[i] += w.transposed() * gt;

    // log scales: (R^T Gsigma R)_ii * 2 exp(2 ls_i)
    Mat3 inr = r.transposed() * gsigma * r;
    grads.log_scale[i] += Vec3{inr(0, 0) * 2 * std::exp(2 * ls.x), inr(1, 1) * 2 * std::exp(2 * ls.y),
                               inr(2, 2) * 2 * std::exp(2 * ls.z)};

    // rotation: dL/dR = 2 Gsigma R D, contracted with dR/dq of the unit
    // quaternion, then projected through the normalization.
    Mat3 gr = (gsigma * r * d) * 2.0;
    auto jq = rotation_quat_jacobian(qn);
    double gq_hat[4];
    for (int qi = 0; qi < 4; ++qi) {
        double s = 0;
        for (int e = 0; e < 9; ++e) s += gr.m[e] * jq[qi].m[e];
        gq_hat[qi] = s;
    }
    const Quat& qraw = set.rotations[i];
    double qnorm = qraw.norm();
    double qhat[4] = {qn.w, qn.x, qn.y, qn.z};
    double dotp = 0;
    for (int qi = 0; qi < 4; ++qi) dotp += gq_hat[qi] * qhat[qi];
    for (int qi = 0; qi < 4; ++qi)
        grads.rotation[i][qi] += (gq_hat[qi] - dotp * qhat[qi]) / qnorm;
}

}  // namespace

void ParamGrads::resize(std::size_t n) {
    position.assign(n, Vec3{});
    log_scale.assign(n, Vec3{});
    rotation.assign(n, std::array<double, 4>{});
    opacity_logit.assign(n, 0.0);
    rgb.assign(n, Vec3{});
}

std::vector<Projected2D> project(const GaussianSet& gaussians, const Camera& camera,
                                 const RasterConfig& cfg) {
    std::string why;
    if (!camera.valid(&why)) throw std::invalid_argument("project: invalid camera: " + why);
    std::vector<Projected2D> out;
    out.reserve(gaussians.size());
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        Vec3 t = camera.to_camera(gaussians.positions[i]);
        if (t.z < cfg.near_plane) continue;
        Projected2D p;
        p.index = i;
        p.cam_point = t;
        p.depth = t.z;
        p.pixel = {camera.fx * t.x / t.z + camera.cx, camera.fy * t.y / t.z + camera.cy};
        p.ndc = {2.0 * p.pixel.x / camera.width - 1.0, 2.0 * p.pixel.y / camera.height - 1.0};
        Mat3 sigma = build_covariance(gaussians.log_scales[i], gaussians.rotations[i]);
        Mat3 m3 = camera.w2c_rotation * sigma * camera.w2c_rotation.transposed();
        Sym2 v = project_covariance(perspective_jacobian(camera, t), m3);
        v.a += cfg.lowpass;
        v.c += cfg.lowpass;
        p.cov2d = v;
        double mid = 0.5 * (v.a + v.c);
        double disc = std::sqrt(std::max(0.0, 0.25 * (v.a - v.c) * (v.a - v.c) + v.b * v.b));
        double lmax = mid + disc;
        p.radius = std::max(1.0, std::ceil(3.0 * std::sqrt(lmax)));
        p.conic = v.inverse();
        out.push_back(p);
    }
    return out;
}

Image render(const GaussianSet& gaussians, const Camera& camera, const std::vector<Vec3>& rgb,
             const RasterConfig& cfg, RenderContext& ctx) {
    if (rgb.size() != gaussians.size())
        throw std::invalid_argument("render: rgb length does not match Gaussian count");

    ctx = RenderContext{};
    ctx.gaussians = &gaussians;
    ctx.camera = camera;
    ctx.config = cfg;
    ctx.rgb = rgb;
    ctx.projected = project(gaussians, camera, cfg);

    const int w = camera.width, h = camera.height, ts = cfg.tile_size;
    ctx.tiles_x = (w + ts - 1) / ts;
    ctx.tiles_y = (h + ts - 1) / ts;
    ctx.tile_lists.assign(std::size_t(ctx.tiles_x) * ctx.tiles_y, {});
    for (std::uint32_t pi = 0; pi < ctx.projected.size(); ++pi) {
        const Projected2D& p = ctx.projected[pi];
        int x0 = std::max(0, int(std::floor((p.pixel.x - p.radius) / ts)));
        int x1 = std::min(ctx.tiles_x - 1, int(std::floor((p.pixel.x + p.radius) / ts)));
        int y0 = std::max(0, int(std::floor((p.pixel.y - p.radius) / ts)));
        int y1 = std::min(ctx.tiles_y - 1, int(std::floor((p.pixel.y + p.radius) / ts)));
        if (p.pixel.x + p.radius < 0 || p.pixel.y + p.radius < 0 || p.pixel.x - p.radius > w ||
            p.pixel.y - p.radius > h)
            continue;
        for (int ty = y0; ty <= y1; ++ty)
            for (int tx = x0; tx <= x1; ++tx)
                ctx.tile_lists[std::size_t(ty) * ctx.tiles_x + tx].push_back(pi);
    }
    // Depth order, ties by Gaussian index.
    for (auto& list : ctx.tile_lists)
        std::sort(list.begin(), list.end(), [&](std::uint32_t a, std::uint32_t b) {
            const Projected2D& pa = ctx.projected[a];
            const Projected2D& pb = ctx.projected[b];
            if (pa.depth != pb.depth) return pa.depth < pb.depth;
            return pa.index < pb.index;
        });

    Image img(w, h);
    ctx.final_transmittance.assign(img.pixels(), 1.0);
    ctx.n_contrib.assign(img.pixels(), 0);

    auto run_tile = [&](int tx, int ty) {
        const auto& list = ctx.tile_lists[std::size_t(ty) * ctx.tiles_x + tx];
        for (int py = ty * ts; py < std::min(h, (ty + 1) * ts); ++py)
            for (int px = tx * ts; px < std::min(w, (tx + 1) * ts); ++px) {
                double col[3] = {0, 0, 0};
                std::uint32_t processed = 0;
                double t = composite(ctx, list, px + 0.5, py + 0.5, &processed,
                                     [&](const Contribution& c) {
                                         const Vec3& rc = rgb[ctx.projected[c.proj].index];
                                         col[0] += c.weight * rc.x;
                                         col[1] += c.weight * rc.y;
                                         col[2] += c.weight * rc.z;
                                     });
                std::size_t pix = std::size_t(py) * w + px;
                ctx.final_transmittance[pix] = t;
                ctx.n_contrib[pix] = processed;
                img.at(px, py, 0) = col[0] + t * cfg.background.x;
                img.at(px, py, 1) = col[1] + t * cfg.background.y;
                img.at(px, py, 2) = col[2] + t * cfg.background.z;
            }
    };

    if (cfg.parallel) {
#pragma omp parallel for collapse(2) schedule(dynamic)
        for (int ty = 0; ty < ctx.tiles_y; ++ty)
            for (int tx = 0; tx < ctx.tiles_x; ++tx) run_tile(tx, ty);
    } else {
        for (int ty = 0; ty < ctx.tiles_y; ++ty)
            for (int tx = 0; tx < ctx.tiles_x; ++tx) run_tile(tx, ty);
    }
    return img;
}

std::vector<std::pair<std::size_t, double>> RenderContext::pixel_weights(int px, int py) const {
    const auto& list = tile_lists[std::size_t(py / config.tile_size) * tiles_x + px / config.tile_size];
    std::vector<std::pair<std::size_t, double>> out;
    composite(*this, list, px + 0.5, py + 0.5, nullptr, [&](const Contribution& c) {
        out.emplace_back(projected[c.proj].index, c.weight);
    });
    return out;
}

ParamGrads backward(const RenderContext& ctx, const Image& dL_dimage, GradAccum* accum) {
    const GaussianSet& set = *ctx.gaussians;
    if (dL_dimage.width != ctx.camera.width || dL_dimage.height != ctx.camera.height)
        throw std::invalid_argument("backward: gradient image dimensions mismatch");
    if (accum && accum->size() != set.size())
        throw std::invalid_argument("backward: accumulator size mismatch");
    if (accum && ctx.config.parallel && accum->estimator() == Estimator::kPaper)
        throw std::invalid_argument(
            "backward: the order-dependent estimator requires the serial kernel");

    ParamGrads grads;
    grads.resize(set.size());
    if (accum) accum->begin_view();

    const int w = ctx.camera.width, h = ctx.camera.height, ts = ctx.config.tile_size;
    std::vector<PixelAccum> acc(ctx.projected.size());

    if (!ctx.config.parallel) {
        // Reference kernel: global row-major pixel order. This is the canonical
        // streaming order for the order-dependent estimator.
        for (int py = 0; py < h; ++py)
            for (int px = 0; px < w; ++px) {
                const auto& list = ctx.tile_lists[std::size_t(py / ts) * ctx.tiles_x + px / ts];
                pixel_backward(ctx, dL_dimage, px, py, list, acc, accum);
            }
    } else {
        const int ntiles = ctx.tiles_x * ctx.tiles_y;
        std::vector<std::vector<PixelAccum>> partials(ntiles);
#pragma omp parallel for schedule(dynamic)
        for (int tile = 0; tile < ntiles; ++tile) {
            const int tx = tile % ctx.tiles_x, ty = tile / ctx.tiles_x;
            auto& local = partials[tile];
            local.assign(ctx.projected.size(), PixelAccum{});
            const auto& list = ctx.tile_lists[tile];
            if (list.empty()) continue;
            for (int py = ty * ts; py < std::min(h, (ty + 1) * ts); ++py)
                for (int px = tx * ts; px < std::min(w, (tx + 1) * ts); ++px)
                    pixel_backward(ctx, dL_dimage, px, py, list, local, nullptr);
        }
        // Deterministic merge: ascending tile index regardless of thread count.
        for (int tile = 0; tile < ntiles; ++tile) {
            for (std::size_t pi = 0; pi < ctx.projected.size(); ++pi) {
                const PixelAccum& p = partials[tile][pi];
                if (!p.touched) continue;
                PixelAccum& a = acc[pi];
                a.touched = true;
                a.gpix += p.gpix;
                for (int k = 0; k < 3; ++k) a.gconic[k] += p.gconic[k];
                a.glogit += p.glogit;
                a.grgb += p.grgb;
                a.max_weight = std::max(a.max_weight, p.max_weight);
                if (accum)
                    for (int ch = 0; ch < 3; ++ch)
                        accum->merge_live(ctx.projected[pi].index, ch, p.stream[ch]);
            }
        }
    }

    for (std::size_t pi = 0; pi < ctx.projected.size(); ++pi) {
        if (!acc[pi].touched) continue;
        finalize_gaussian(ctx, ctx.projected[pi], acc[pi], grads);
    }

    if (accum) {
        for (std::size_t pi = 0; pi < ctx.projected.size(); ++pi) {
            const PixelAccum& a = acc[pi];
            if (a.max_weight <= 1.0 / 255.0) continue;  // view-level visibility
            Vec2 ndc_grad{a.gpix.x * ctx.camera.width * 0.5, a.gpix.y * ctx.camera.height * 0.5};
            accum->finalize_view(ctx.projected[pi].index, ndc_grad);
        }
    }
    return grads;
}

}  // namespace splat
