#include "splat/engine.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <cstdarg>
#include <cstdio>
#include <stdexcept>

#include "splat/metrics.hpp"
#include "splat/rng.hpp"

namespace splat {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-15;

void append_row(std::string& csv, const char* fmt, ...) {
    char buf[256];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    csv += buf;
}

std::vector<double> flatten_vec3(const std::vector<Vec3>& v) {
    std::vector<double> out(v.size() * 3);
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[3 * i] = v[i].x;
        out[3 * i + 1] = v[i].y;
        out[3 * i + 2] = v[i].z;
    }
    return out;
}

void unflatten_vec3(const std::vector<double>& flat, std::vector<Vec3>& v) {
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
}

// Appearance decode for one camera: per Gaussian, view direction -> encoding
// (or raw direction) concatenated with the feature embedding -> MLP -> rgb.
struct AppearancePass {
    std::vector<Vec3> rgb;
    std::vector<ColorMlp::Context> mlp_ctx;
    std::vector<DirHashGrid::EncodeContext> enc_ctx;
};

AppearancePass decode_colors(const GaussianSet& set, const DirHashGrid& grid, const ColorMlp& mlp,
                             bool lhe, const Camera& cam, double noise_std, Rng* noise_rng,
                             bool want_ctx) {
    AppearancePass pass;
    const std::size_t n = set.size();
    pass.rgb.resize(n);
    if (want_ctx) pass.mlp_ctx.resize(n);
    if (want_ctx && lhe) pass.enc_ctx.resize(n);
    Vec3 center = cam.center();
    for (std::size_t k = 0; k < n; ++k) {
        Vec3 delta = set.positions[k] - center;
        Vec3 dir = delta.norm() > 1e-12 ? delta.normalized() : Vec3{0, 0, 1};
        if (noise_rng && noise_std > 0) dir = perturb_direction(dir, noise_std, *noise_rng);
        std::vector<double> input = set.features[k];
        if (lhe) {
            auto enc = grid.encode(dir, want_ctx ? &pass.enc_ctx[k] : nullptr);
            input.insert(input.end(), enc.begin(), enc.end());
        } else {
            input.push_back(dir.x);
            input.push_back(dir.y);
            input.push_back(dir.z);
        }
        pass.rgb[k] = mlp.forward(input, want_ctx ? &pass.mlp_ctx[k] : nullptr);
    }
    return pass;
}

// Means of the four quarters of the ascending-sorted values; empty quarters
// read as zero.
std::array<double, 4> quartile_means(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    std::array<double, 4> q{0, 0, 0, 0};
    std::size_t n = values.size();
    for (int i = 0; i < 4; ++i) {
        std::size_t lo = n * i / 4, hi = n * (i + 1) / 4;
        if (hi > lo) {
            double s = 0;
            for (std::size_t j = lo; j < hi; ++j) s += values[j];
            q[i] = s / double(hi - lo);
        }
    }
    return q;
}

}  // namespace

void TrainConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0)) throw std::invalid_argument(std::string("train: ") + name + " must be > 0");
    };
    positive(lr_position, "lr_position");
    positive(lr_position_final, "lr_position_final");
    positive(lr_log_scale, "lr_log_scale");
    positive(lr_rotation, "lr_rotation");
    positive(lr_opacity, "lr_opacity");
    positive(lr_feature, "lr_feature");
    positive(lr_mlp, "lr_mlp");
    positive(lr_hash, "lr_hash");
    if (iterations < 0) throw std::invalid_argument("train: iterations must be >= 0");
    if (lambda_dssim < 0 || lambda_dssim >= 1)
        throw std::invalid_argument("train: lambda_dssim must be in [0, 1)");
    if (noise_std < 0) throw std::invalid_argument("train: noise_std must be >= 0");
    if (feature_dim < 0) throw std::invalid_argument("train: feature_dim must be >= 0");
    densify.validate();
}

void AdamState::resize(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
}

void AdamState::remap(const std::vector<std::int64_t>& source, std::size_t dim) {
    std::vector<double> nm(source.size() * dim, 0.0), nv(source.size() * dim, 0.0);
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (source[i] < 0) continue;
        for (std::size_t d = 0; d < dim; ++d) {
            nm[i * dim + d] = m[std::size_t(source[i]) * dim + d];
            nv[i * dim + d] = v[std::size_t(source[i]) * dim + d];
        }
    }
    m = std::move(nm);
    v = std::move(nv);
}

void AdamState::compact(const std::vector<char>& keep, std::size_t dim) {
    std::size_t w = 0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        for (std::size_t d = 0; d < dim; ++d) {
            m[w * dim + d] = m[i * dim + d];
            v[w * dim + d] = v[i * dim + d];
        }
        ++w;
    }
    m.resize(w * dim);
    v.resize(w * dim);
}

bool adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads,
               double lr) {
    if (params.size() != grads.size() || state.m.size() != params.size() ||
        state.v.size() != params.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    for (double g : grads)
        if (!std::isfinite(g)) return false;
    state.t += 1;
    double c1 = 1.0 - std::pow(kBeta1, double(state.t));
    double c2 = 1.0 - std::pow(kBeta2, double(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = kBeta1 * state.m[i] + (1 - kBeta1) * grads[i];
        state.v[i] = kBeta2 * state.v[i] + (1 - kBeta2) * grads[i] * grads[i];
        double mhat = state.m[i] / c1, vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
    return true;
}

TrainResult train(const Scene& scene, const TrainConfig& cfg) {
    cfg.validate();
    if (scene.train_views.empty()) throw std::invalid_argument("train: no training views");
    for (const View& view : scene.train_views) {
        std::string why;
        if (!view.camera.valid(&why)) throw std::invalid_argument("train: invalid camera: " + why);
        if (view.image.width != view.camera.width || view.image.height != view.camera.height)
            throw std::invalid_argument("train: image/camera dimensions disagree");
    }

    TrainResult result;
    Checkpoint& ckpt = result.checkpoint;
    ckpt.config = cfg;
    ckpt.gaussians = scene.gaussians;
    ckpt.grid = DirHashGrid(cfg.grid, cfg.seed + 1);
    int mlp_input = cfg.feature_dim + (cfg.lhe ? ckpt.grid.output_dim() : 3);
    ckpt.mlp = ColorMlp(mlp_input, cfg.seed + 2);
    GaussianSet& set = ckpt.gaussians;
    if (set.feature_dim != cfg.feature_dim)
        throw std::invalid_argument("train: scene feature_dim disagrees with config");

    result.metrics_csv = "iter,loss,psnr_train,n_gaussians\n";
    result.stats_csv = "iter,q1_dbar,q2_dbar,q3_dbar,q4_dbar\n";
    result.events_csv = "step,n_before,n_selected_vgd_only,n_selected_baseline,n_after\n";
    if (cfg.iterations == 0) return result;

    Rng rng(cfg.seed);
    RasterConfig rcfg;
    rcfg.parallel = cfg.parallel;
    Estimator est = cfg.parallel ? Estimator::kExact : Estimator::kPaper;
    GradAccum accum(set.size(), est);
    double extent = scene_extent([&] {
        std::vector<Camera> cams;
        for (const View& view : scene.train_views) cams.push_back(view.camera);
        return cams;
    }());

    const std::size_t fd = std::size_t(cfg.feature_dim);
    AdamState st_pos, st_scale, st_rot, st_opac, st_feat, st_hash;
    std::vector<AdamState> st_mlp_w(3), st_mlp_b(3);
    st_pos.resize(set.size() * 3);
    st_scale.resize(set.size() * 3);
    st_rot.resize(set.size() * 4);
    st_opac.resize(set.size());
    st_feat.resize(set.size() * fd);
    st_hash.resize(ckpt.grid.raw_tables().size());
    for (int l = 0; l < 3; ++l) {
        st_mlp_w[l].resize(ckpt.mlp.weights(l).size());
        st_mlp_b[l].resize(ckpt.mlp.biases(l).size());
    }

    std::vector<std::size_t> order(scene.train_views.size());
    std::size_t order_pos = order.size();  // trigger a shuffle on first use

    for (int it = 1; it <= cfg.iterations; ++it) {
        if (order_pos >= order.size()) {
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[std::size_t(rng.uniform() * double(i))]);
            order_pos = 0;
        }
        const View& view = scene.train_views[order[order_pos++]];

        AppearancePass pass =
            decode_colors(set, ckpt.grid, ckpt.mlp, cfg.lhe, view.camera,
                          cfg.lhe ? cfg.noise_std : 0.0, cfg.lhe ? &rng : nullptr, true);
        RenderContext ctx;
        Image pred = render(set, view.camera, pass.rgb, rcfg, ctx);
        Image dl;
        double l = loss(pred, view.image, cfg.lambda_dssim, &dl);
        if (!std::isfinite(l))
            throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(it));
        ParamGrads grads = backward(ctx, dl, &accum);

        // Appearance backward: per-Gaussian rgb gradient through the MLP into
        // embeddings and, with the hash encoder on, into the feature tables.
        ColorMlp::Grads mlp_grads;
        mlp_grads.resize_like(ckpt.mlp);
        std::vector<double> feat_grads(set.size() * fd, 0.0);
        std::vector<double> hash_grads(ckpt.grid.raw_tables().size(), 0.0);
        for (std::size_t k = 0; k < set.size(); ++k) {
            const Vec3& gr = grads.rgb[k];
            if (gr.x == 0 && gr.y == 0 && gr.z == 0) continue;
            std::vector<double> dinput = ckpt.mlp.backward(pass.mlp_ctx[k], gr, mlp_grads);
            for (std::size_t d = 0; d < fd; ++d) feat_grads[k * fd + d] = dinput[d];
            if (cfg.lhe) {
                std::vector<double> denc(dinput.begin() + fd, dinput.end());
                for (const auto& tg : ckpt.grid.encode_backward(pass.enc_ctx[k], denc)) {
                    std::size_t base =
                        (std::size_t(tg.level) * ckpt.grid.table_size() + tg.slot) *
                        ckpt.grid.config().feats;
                    for (int f = 0; f < ckpt.grid.config().feats; ++f)
                        hash_grads[base + f] += tg.grad[f];
                }
            }
        }

        // Optimizer step, positions on the exponentially decayed schedule.
        double lr_pos = cfg.lr_position *
                        std::pow(cfg.lr_position_final / cfg.lr_position,
                                 double(it) / double(cfg.iterations));
        {
            std::vector<double> p = flatten_vec3(set.positions);
            adam_step(st_pos, p, flatten_vec3(grads.position), lr_pos);
            unflatten_vec3(p, set.positions);
        }
        {
            std::vector<double> p = flatten_vec3(set.log_scales);
            adam_step(st_scale, p, flatten_vec3(grads.log_scale), cfg.lr_log_scale);
            unflatten_vec3(p, set.log_scales);
        }
        {
            std::vector<double> p(set.size() * 4), g(set.size() * 4);
            for (std::size_t k = 0; k < set.size(); ++k) {
                const Quat& q = set.rotations[k];
                p[4 * k] = q.w;
                p[4 * k + 1] = q.x;
                p[4 * k + 2] = q.y;
                p[4 * k + 3] = q.z;
                for (int d = 0; d < 4; ++d) g[4 * k + d] = grads.rotation[k][d];
            }
            adam_step(st_rot, p, g, cfg.lr_rotation);
            for (std::size_t k = 0; k < set.size(); ++k)
                set.rotations[k] = {p[4 * k], p[4 * k + 1], p[4 * k + 2], p[4 * k + 3]};
        }
        adam_step(st_opac, set.opacity_logits, grads.opacity_logit, cfg.lr_opacity);
        {
            std::vector<double> p(set.size() * fd);
            for (std::size_t k = 0; k < set.size(); ++k)
                for (std::size_t d = 0; d < fd; ++d) p[k * fd + d] = set.features[k][d];
            adam_step(st_feat, p, feat_grads, cfg.lr_feature);
            for (std::size_t k = 0; k < set.size(); ++k)
                for (std::size_t d = 0; d < fd; ++d) set.features[k][d] = p[k * fd + d];
        }
        for (int layer = 0; layer < 3; ++layer) {
            adam_step(st_mlp_w[layer], ckpt.mlp.weights(layer), mlp_grads.weights[layer],
                      cfg.lr_mlp);
            adam_step(st_mlp_b[layer], ckpt.mlp.biases(layer), mlp_grads.biases[layer],
                      cfg.lr_mlp);
        }
        if (cfg.lhe) adam_step(st_hash, ckpt.grid.raw_tables(), hash_grads, cfg.lr_hash);

        append_row(result.metrics_csv, "%d,%.17g,%.17g,%zu\n", it, l, psnr(pred, view.image),
                   set.size());

        if (it % 100 == 0) {
            std::vector<double> dbars(set.size());
            for (std::size_t k = 0; k < set.size(); ++k)
                dbars[k] = accum.criteria(k, 0.0, 1.0).dbar;
            auto q = quartile_means(std::move(dbars));
            append_row(result.stats_csv, "%d,%.17g,%.17g,%.17g,%.17g\n", it, q[0], q[1], q[2],
                       q[3]);
        }

        bool densify_now = it >= cfg.densify.start_step && it <= cfg.densify.end_step &&
                           it % cfg.densify.interval == 0;
        if (densify_now) {
            std::size_t n_before = set.size();
            DensifyConfig active = cfg.densify;
            if (!cfg.vgd) active.variance_scale = 0.0;
            DensifyConfig baseline = cfg.densify;
            baseline.variance_scale = 0.0;
            std::vector<std::size_t> sel = select(accum, active);
            std::vector<std::size_t> sel_base = select(accum, baseline);
            std::size_t vgd_only = 0;
            for (std::size_t k : sel)
                if (!std::binary_search(sel_base.begin(), sel_base.end(), k)) ++vgd_only;

            // Clone nudge: the Adam update the position would take right now.
            std::vector<Vec3> nudges(sel.size(), Vec3{0, 0, 0});
            if (st_pos.t > 0) {
                double c1 = 1.0 - std::pow(kBeta1, double(st_pos.t));
                double c2 = 1.0 - std::pow(kBeta2, double(st_pos.t));
                for (std::size_t i = 0; i < sel.size(); ++i) {
                    std::size_t k = sel[i];
                    double* n = &nudges[i].x;
                    for (int d = 0; d < 3; ++d) {
                        double mhat = st_pos.m[3 * k + d] / c1;
                        double vhat = st_pos.v[3 * k + d] / c2;
                        n[d] = -lr_pos * mhat / (std::sqrt(vhat) + kEps);
                    }
                }
            }

            std::vector<std::int64_t> source;
            set = clone_or_split(set, sel, nudges, active, extent, rng.next_u64(), &source);
            st_pos.remap(source, 3);
            st_scale.remap(source, 3);
            st_rot.remap(source, 4);
            st_opac.remap(source, 1);
            st_feat.remap(source, fd);
            accum.resize(set.size(), est);

            std::vector<char> keep = prune(set, cfg.densify.prune_opacity, &accum);
            st_pos.compact(keep, 3);
            st_scale.compact(keep, 3);
            st_rot.compact(keep, 4);
            st_opac.compact(keep, 1);
            st_feat.compact(keep, fd);
            accum.reset();

            append_row(result.events_csv, "%d,%zu,%zu,%zu,%zu\n", it, n_before, vgd_only,
                       sel_base.size(), set.size());
        }

        if (cfg.densify.opacity_reset_interval > 0 && it % cfg.densify.opacity_reset_interval == 0)
            reset_opacity(set);
    }
    ckpt.iteration = cfg.iterations;
    return result;
}

Image render_view(const Checkpoint& ckpt, const Camera& camera, const RasterConfig& rcfg) {
    AppearancePass pass = decode_colors(ckpt.gaussians, ckpt.grid, ckpt.mlp, ckpt.config.lhe,
                                        camera, 0.0, nullptr, false);
    RenderContext ctx;
    return render(ckpt.gaussians, camera, pass.rgb, rcfg, ctx);
}

GradAccum accumulate_stats(const Checkpoint& ckpt, const std::vector<View>& views) {
    if (views.empty()) throw std::invalid_argument("accumulate_stats: empty view list");
    GradAccum accum(ckpt.gaussians.size(), Estimator::kPaper);
    RasterConfig rcfg;  // sequential: canonical stream order
    for (const View& view : views) {
        AppearancePass pass = decode_colors(ckpt.gaussians, ckpt.grid, ckpt.mlp, ckpt.config.lhe,
                                            view.camera, 0.0, nullptr, false);
        RenderContext ctx;
        Image pred = render(ckpt.gaussians, view.camera, pass.rgb, rcfg, ctx);
        Image dl;
        loss(pred, view.image, ckpt.config.lambda_dssim, &dl);
        backward(ctx, dl, &accum);
    }
    return accum;
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<View>& views) {
    if (views.empty()) throw std::invalid_argument("evaluate: empty view list");
    EvalReport report;
    for (const View& view : views) {
        Image pred = render_view(ckpt, view.camera);
        report.psnr.push_back(psnr(pred, view.image));
        report.ssim.push_back(ssim(pred, view.image));
    }
    for (double p : report.psnr) report.mean_psnr += p;
    for (double s : report.ssim) report.mean_ssim += s;
    report.mean_psnr /= double(report.psnr.size());
    report.mean_ssim /= double(report.ssim.size());
    return report;
}

}  // namespace splat
