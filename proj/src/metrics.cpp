#include "splat/metrics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace splat {

namespace {

void check_same_shape(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("metrics: image dimensions disagree");
}

constexpr int kWin = 11;
constexpr int kHalf = kWin / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWin> gaussian_window() {
    std::array<double, kWin> w;
    double sum = 0;
    for (int i = 0; i < kWin; ++i) {
        double d = i - kHalf;
        w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace

double mse(const Image& a, const Image& b) {
    check_same_shape(a, b);
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return a.data.empty() ? 0.0 : s / a.data.size();
}

double psnr(const Image& a, const Image& b) {
    double e = mse(a, b);
    if (e < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / e);
}

double ssim(const Image& a, const Image& b, Image* d_da) {
    check_same_shape(a, b);
    const int W = a.width, H = a.height;
    if (W == 0 || H == 0) throw std::invalid_argument("metrics: empty image");
    static const std::array<double, kWin> win = gaussian_window();
    if (d_da) *d_da = Image(W, H, 0.0);

    double total = 0;
    const double inv_count = 1.0 / (double(W) * H * 3);
    for (int c = 0; c < 3; ++c) {
        for (int qy = 0; qy < H; ++qy) {
            for (int qx = 0; qx < W; ++qx) {
                int x0 = std::max(0, qx - kHalf), x1 = std::min(W - 1, qx + kHalf);
                int y0 = std::max(0, qy - kHalf), y1 = std::min(H - 1, qy + kHalf);
                double wsum = 0, mux = 0, muy = 0, mx2 = 0, my2 = 0, mxy = 0;
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x) {
                        double w = win[x - qx + kHalf] * win[y - qy + kHalf];
                        double xa = a.at(x, y, c), yb = b.at(x, y, c);
                        wsum += w;
                        mux += w * xa;
                        muy += w * yb;
                        mx2 += w * xa * xa;
                        my2 += w * yb * yb;
                        mxy += w * xa * yb;
                    }
                mux /= wsum;
                muy /= wsum;
                mx2 /= wsum;
                my2 /= wsum;
                mxy /= wsum;
                double sx2 = mx2 - mux * mux, sy2 = my2 - muy * muy, sxy = mxy - mux * muy;
                double A1 = 2 * mux * muy + kC1, B1 = mux * mux + muy * muy + kC1;
                double A2 = 2 * sxy + kC2, B2 = sx2 + sy2 + kC2;
                double l = A1 / B1, cs = A2 / B2;
                total += l * cs;
                if (!d_da) continue;
                // S = l*cs as a function of (mux, mx2, mxy); scatter the chain
                // back through the renormalized window weights.
                double dS_dmux = cs * (2 * muy * B1 - A1 * 2 * mux) / (B1 * B1) +
                                 l * (-2 * muy * B2 + A2 * 2 * mux) / (B2 * B2);
                double dS_dmx2 = l * (-A2) / (B2 * B2);
                double dS_dmxy = l * 2.0 / B2;
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x) {
                        double w = win[x - qx + kHalf] * win[y - qy + kHalf] / wsum;
                        double xa = a.at(x, y, c), yb = b.at(x, y, c);
                        d_da->at(x, y, c) +=
                            inv_count * w * (dS_dmux + 2 * xa * dS_dmx2 + yb * dS_dmxy);
                    }
            }
        }
    }
    return total * inv_count;
}

double loss(const Image& pred, const Image& target, double lambda_dssim, Image* dL_dpred) {
    check_same_shape(pred, target);
    if (lambda_dssim < 0 || lambda_dssim >= 1)
        throw std::invalid_argument("loss: lambda_dssim must be in [0, 1)");
    const double n = double(pred.data.size());
    double l1 = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) l1 += std::abs(pred.data[i] - target.data[i]);
    l1 /= n;

    double value = (1.0 - lambda_dssim) * l1;
    Image dssim_grad;
    if (lambda_dssim > 0) {
        double s = ssim(pred, target, dL_dpred ? &dssim_grad : nullptr);
        value += lambda_dssim * (1.0 - s);
    }
    if (dL_dpred) {
        *dL_dpred = Image(pred.width, pred.height, 0.0);
        for (std::size_t i = 0; i < pred.data.size(); ++i) {
            double d = pred.data[i] - target.data[i];
            double g = (1.0 - lambda_dssim) * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n;
            if (lambda_dssim > 0) g -= lambda_dssim * dssim_grad.data[i];
            dL_dpred->data[i] = g;
        }
    }
    return value;
}

}  // namespace splat
