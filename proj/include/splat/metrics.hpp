#pragma once
#include "splat/core.hpp"

namespace splat {

// Mean squared error over all H*W*3 elements. Throws on dimension mismatch.
double mse(const Image& a, const Image& b);

// 10 * log10(1 / MSE) with peak 1.0, capped at 100 dB when MSE < 1e-10.
double psnr(const Image& a, const Image& b);

// Mean SSIM over pixels and channels: 11x11 Gaussian window (sigma 1.5),
// C1 = 0.01^2, C2 = 0.03^2, window weights renormalized at the borders.
// When d_da is given it receives dSSIM/da (analytic).
double ssim(const Image& a, const Image& b, Image* d_da = nullptr);

// (1 - lambda) * L1 + lambda * (1 - SSIM); gradient w.r.t. pred is analytic
// for both terms. lambda in [0, 1).
double loss(const Image& pred, const Image& target, double lambda_dssim, Image* dL_dpred);

}  // namespace splat
