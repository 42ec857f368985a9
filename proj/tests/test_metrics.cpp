#include <cmath>

#include "doctest.h"
#include "splat/metrics.hpp"
#include "splat/rng.hpp"

using namespace splat;

namespace {

Image random_image(int w, int h, Rng& rng) {
    Image img(w, h);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("psnr: identity cap and hand-computed MSE") {
    Rng rng(1);
    Image a = random_image(6, 5, rng);
    CHECK(psnr(a, a) == 100.0);

    Image b = a;
    for (double& v : b.data) v += 0.1;  // uniform MSE 0.01
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(mse(a, b) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("metrics reject mismatched dimensions") {
    Image a(4, 4), b(4, 5);
    CHECK_THROWS(mse(a, b));
    CHECK_THROWS(psnr(a, b));
    CHECK_THROWS(ssim(a, b));
    CHECK_THROWS(loss(a, b, 0.2, nullptr));
}

TEST_CASE("ssim: identity, symmetry, range") {
    Rng rng(3);
    Image a = random_image(16, 16, rng);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    Image b = random_image(16, 16, rng);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    CHECK(ssim(a, b) <= 1.0);
    CHECK(ssim(a, b) >= -1.0);
    CHECK(ssim(a, b) < 0.999);  // unrelated noise is far from identical
}

TEST_CASE("ssim gradient matches finite differences") {
    Rng rng(5);
    Image a = random_image(8, 8, rng);
    Image b = random_image(8, 8, rng);
    Image grad;
    ssim(a, b, &grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < a.data.size(); i += 13) {
        double orig = a.data[i];
        a.data[i] = orig + h;
        double sp = ssim(a, b);
        a.data[i] = orig - h;
        double sm = ssim(a, b);
        a.data[i] = orig;
        double fd = (sp - sm) / (2 * h);
        double denom = std::max({std::abs(fd), std::abs(grad.data[i]), 1e-8});
        CHECK(std::abs(fd - grad.data[i]) / denom < 1e-4);
    }
}

TEST_CASE("loss: zero at the target, pure-L1 constant offset") {
    Rng rng(7);
    Image t = random_image(8, 8, rng);
    Image grad;
    CHECK(loss(t, t, 0.2, &grad) == doctest::Approx(0.0).epsilon(1e-15));
    for (double v : grad.data) CHECK(std::abs(v) < 1e-15);

    Image p = t;
    double c = 0.07;
    for (double& v : p.data) v += c;
    double l = loss(p, t, 0.0, &grad);
    CHECK(l == doctest::Approx(c).epsilon(1e-12));
    double expect = 1.0 / double(p.data.size());
    for (double v : grad.data) CHECK(v == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("loss gradient matches finite differences at the default mix") {
    Rng rng(9);
    Image p = random_image(8, 8, rng);
    Image t = random_image(8, 8, rng);
    Image grad;
    loss(p, t, 0.2, &grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.data.size(); i += 11) {
        double orig = p.data[i];
        p.data[i] = orig + h;
        double lp = loss(p, t, 0.2, nullptr);
        p.data[i] = orig - h;
        double lm = loss(p, t, 0.2, nullptr);
        p.data[i] = orig;
        double fd = (lp - lm) / (2 * h);
        double denom = std::max({std::abs(fd), std::abs(grad.data[i]), 1e-8});
        CHECK(std::abs(fd - grad.data[i]) / denom < 1e-4);
    }
}

TEST_CASE("loss validates the mix parameter") {
    Image a(4, 4), b(4, 4);
    CHECK_THROWS(loss(a, b, -0.1, nullptr));
    CHECK_THROWS(loss(a, b, 1.0, nullptr));
}
