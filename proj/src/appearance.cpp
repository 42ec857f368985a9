#include "splat/appearance.hpp"

#include <cmath>
#include <stdexcept>

namespace splat {

DirHashGrid::DirHashGrid(const DirHashGridConfig& cfg, uint64_t seed) : cfg_(cfg) {
    resolutions_.resize(cfg.levels);
    double b = cfg.levels > 1
                   ? std::pow(double(cfg.max_res) / cfg.base_res, 1.0 / (cfg.levels - 1))
                   : 1.0;
    int prev = 0;
    for (int l = 0; l < cfg.levels; ++l) {
        // Tiny epsilon keeps exact powers (e.g. ratio^(L-1) = max/base) from
        // landing one below the intended resolution due to pow() rounding.
        int r = int(std::floor(cfg.base_res * std::pow(b, l) + 1e-9));
        if (r <= prev) r = prev + 1;  // keep strictly increasing
        resolutions_[l] = r;
        prev = r;
    }
    tables_.resize(std::size_t(cfg.levels) * table_size() * cfg.feats);
    Rng rng(seed);
    for (double& v : tables_) v = rng.uniform(-1e-4, 1e-4);
}

std::size_t DirHashGrid::hash_index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    std::uint64_t h = std::uint64_t(x) * 1ull ^ std::uint64_t(y) * 2654435761ull ^
                      std::uint64_t(z) * 805459861ull;
    return h & (table_size() - 1);
}

std::vector<double> DirHashGrid::encode(const Vec3& dir, EncodeContext* ctx) const {
    if (std::abs(dir.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("encode: direction must be unit length");
    return encode_at(dir, ctx);
}

std::vector<double> DirHashGrid::encode_at(const Vec3& dir, EncodeContext* ctx) const {
    std::vector<double> out(output_dim(), 0.0);
    if (ctx) {
        ctx->slots.assign(cfg_.levels, {});
        ctx->weights.assign(cfg_.levels, {});
    }
    for (int l = 0; l < cfg_.levels; ++l) {
        double half = resolutions_[l] / 2.0;  // 1/s with s = 2/N_l
        double u = dir.x * half, v = dir.y * half, w = dir.z * half;
        std::int64_t bx = std::int64_t(std::floor(u));
        std::int64_t by = std::int64_t(std::floor(v));
        std::int64_t bz = std::int64_t(std::floor(w));
        double fx = u - double(bx), fy = v - double(by), fz = w - double(bz);
        for (int corner = 0; corner < 8; ++corner) {
            int ox = corner & 1, oy = (corner >> 1) & 1, oz = (corner >> 2) & 1;
            std::size_t slot = hash_index(bx + ox, by + oy, bz + oz);
            double weight = (ox ? fx : 1.0 - fx) * (oy ? fy : 1.0 - fy) * (oz ? fz : 1.0 - fz);
            if (ctx) {
                ctx->slots[l][corner] = slot;
                ctx->weights[l][corner] = weight;
            }
            for (int f = 0; f < cfg_.feats; ++f)
                out[std::size_t(l) * cfg_.feats + f] += weight * table(l, slot, f);
        }
    }
    return out;
}

std::vector<DirHashGrid::TableGrad> DirHashGrid::encode_backward(
    const EncodeContext& ctx, const std::vector<double>& dL_dfeatures) const {
    if (dL_dfeatures.size() != std::size_t(output_dim()))
        throw std::invalid_argument("encode_backward: gradient dimension mismatch");
    if (ctx.slots.size() != std::size_t(cfg_.levels))
        throw std::invalid_argument("encode_backward: stale context");
    std::vector<TableGrad> grads;
    grads.reserve(std::size_t(cfg_.levels) * 8);
    for (int l = 0; l < cfg_.levels; ++l) {
        for (int corner = 0; corner < 8; ++corner) {
            TableGrad g;
            g.level = l;
            g.slot = ctx.slots[l][corner];
            g.grad.resize(cfg_.feats);
            for (int f = 0; f < cfg_.feats; ++f)
                g.grad[f] = ctx.weights[l][corner] * dL_dfeatures[std::size_t(l) * cfg_.feats + f];
            grads.push_back(std::move(g));
        }
    }
    return grads;
}

ColorMlp::ColorMlp(int input_dim, uint64_t seed, int hidden) {
    dims_ = {input_dim, hidden, hidden, 3};
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
        int in = dims_[l], out = dims_[l + 1];
        double a = std::sqrt(6.0 / (in + out));
        std::vector<double> w(std::size_t(out) * in);
        for (double& x : w) x = rng.uniform(-a, a);
        weights_.push_back(std::move(w));
        biases_.push_back(std::vector<double>(out, 0.0));
    }
}

Vec3 ColorMlp::forward(const std::vector<double>& input, Context* ctx) const {
    if (input.size() != std::size_t(dims_.front()))
        throw std::invalid_argument("ColorMlp: input dimension mismatch");
    std::vector<double> x = input;
    if (ctx) {
        ctx->activations.clear();
        ctx->preacts.clear();
        ctx->activations.push_back(x);
    }
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        int in = dims_[l], out = dims_[l + 1];
        std::vector<double> z(out);
        for (int o = 0; o < out; ++o) {
            double s = biases_[l][o];
            const double* wrow = &weights_[l][std::size_t(o) * in];
            for (int i = 0; i < in; ++i) s += wrow[i] * x[i];
            z[o] = s;
        }
        if (ctx) ctx->preacts.push_back(z);
        bool last = l + 1 == weights_.size();
        for (int o = 0; o < out; ++o) z[o] = last ? sigmoid(z[o]) : std::max(0.0, z[o]);
        x = std::move(z);
        if (ctx) ctx->activations.push_back(x);
    }
    return {x[0], x[1], x[2]};
}

void ColorMlp::Grads::resize_like(const ColorMlp& mlp) {
    weights.clear();
    biases.clear();
    for (std::size_t l = 0; l + 1 < mlp.dims().size(); ++l) {
        weights.push_back(std::vector<double>(mlp.weights(int(l)).size(), 0.0));
        biases.push_back(std::vector<double>(mlp.biases(int(l)).size(), 0.0));
    }
}

void ColorMlp::Grads::accumulate(const Grads& other) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += other.weights[l][i];
        for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += other.biases[l][i];
    }
}

std::vector<double> ColorMlp::backward(const Context& ctx, const Vec3& dL_drgb,
                                       Grads& grads) const {
    const int nlayers = int(weights_.size());
    std::vector<double> delta(3);
    for (int c = 0; c < 3; ++c) {
        double s = ctx.activations.back()[c];
        delta[c] = (&dL_drgb.x)[c] * s * (1.0 - s);
    }
    for (int l = nlayers - 1; l >= 0; --l) {
        int in = dims_[l], out = dims_[l + 1];
        const std::vector<double>& x = ctx.activations[l];
        for (int o = 0; o < out; ++o) {
            grads.biases[l][o] += delta[o];
            double* grow = &grads.weights[l][std::size_t(o) * in];
            for (int i = 0; i < in; ++i) grow[i] += delta[o] * x[i];
        }
        if (l == 0) {
            std::vector<double> dx(in, 0.0);
            for (int o = 0; o < out; ++o) {
                const double* wrow = &weights_[l][std::size_t(o) * in];
                for (int i = 0; i < in; ++i) dx[i] += delta[o] * wrow[i];
            }
            return dx;
        }
        std::vector<double> prev(in, 0.0);
        for (int o = 0; o < out; ++o) {
            const double* wrow = &weights_[l][std::size_t(o) * in];
            for (int i = 0; i < in; ++i) prev[i] += delta[o] * wrow[i];
        }
        // ReLU mask from the previous layer's pre-activation.
        for (int i = 0; i < in; ++i)
            if (ctx.preacts[l - 1][i] <= 0.0) prev[i] = 0.0;
        delta = std::move(prev);
    }
    return {};
}

Vec3 view_direction(const Vec3& gaussian_position, const Vec3& camera_center) {
    Vec3 d = gaussian_position - camera_center;
    double n = d.norm();
    if (n == 0.0) throw std::invalid_argument("view_direction: position equals camera center");
    return {d.x / n, d.y / n, d.z / n};
}

Vec3 perturb_direction(const Vec3& dir, double noise_std, Rng& rng) {
    if (noise_std < 0) throw std::invalid_argument("perturb_direction: negative noise_std");
    if (noise_std == 0.0) return dir;
    Vec3 d{dir.x + rng.normal(0, noise_std), dir.y + rng.normal(0, noise_std),
           dir.z + rng.normal(0, noise_std)};
    return d.normalized();
}

}  // namespace splat
