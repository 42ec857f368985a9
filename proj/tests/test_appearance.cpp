#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "splat/appearance.hpp"

using namespace splat;

namespace {

DirHashGridConfig small_grid() {
    DirHashGridConfig cfg;
    cfg.levels = 4;
    cfg.base_res = 4;
    cfg.max_res = 16;
    cfg.log2_table = 12;
    return cfg;
}

// All sphere-intersecting corner slots for one level.
std::set<std::size_t> sphere_slots(const DirHashGrid& grid, int level) {
    std::set<std::size_t> slots;
    int n = grid.resolution(level);
    double s = 2.0 / n;
    for (int bx = -n / 2 - 1; bx <= n / 2; ++bx)
        for (int by = -n / 2 - 1; by <= n / 2; ++by)
            for (int bz = -n / 2 - 1; bz <= n / 2; ++bz) {
                double lo2 = 0, hi2 = 0;
                int b[3] = {bx, by, bz};
                for (int a = 0; a < 3; ++a) {
                    double c0 = b[a] * s, c1 = (b[a] + 1) * s;
                    double lo = (c0 > 0) ? c0 : (c1 < 0 ? -c1 : 0.0);
                    double hi = std::max(std::abs(c0), std::abs(c1));
                    lo2 += lo * lo;
                    hi2 += hi * hi;
                }
                if (lo2 <= 1.0 && 1.0 <= hi2)
                    for (int corner = 0; corner < 8; ++corner)
                        slots.insert(grid.hash_index(bx + (corner & 1), by + ((corner >> 1) & 1),
                                                     bz + ((corner >> 2) & 1)));
            }
    return slots;
}

}  // namespace

TEST_CASE("view_direction basics") {
    Vec3 d = view_direction({0, 0, 1}, {0, 0, 0});
    CHECK(d.z == 1.0);
    Vec3 d2 = view_direction({3, 4, 0}, {0, 0, 0});
    CHECK(d2.x == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(d2.y == doctest::Approx(0.8).epsilon(1e-15));
    CHECK_THROWS(view_direction({1, 2, 3}, {1, 2, 3}));

    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        Vec3 p{rng.normal(), rng.normal(), rng.normal()};
        Vec3 c{rng.normal(), rng.normal(), rng.normal()};
        if ((p - c).norm() < 1e-9) continue;
        CHECK(std::abs(view_direction(p, c).norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("perturb_direction identity, unit norm, reproducibility") {
    Rng rng(2);
    Vec3 d = view_direction({1, 2, 3}, {0, 0, 0});
    Vec3 same = perturb_direction(d, 0.0, rng);
    CHECK(same.x == d.x);
    CHECK(same.y == d.y);
    CHECK(same.z == d.z);

    for (int i = 0; i < 200; ++i)
        CHECK(std::abs(perturb_direction(d, 0.05, rng).norm() - 1.0) < 1e-12);

    Rng a(77), b(77);
    Vec3 pa = perturb_direction(d, 0.02, a);
    Vec3 pb = perturb_direction(d, 0.02, b);
    CHECK(pa.x == pb.x);
    CHECK(pa.y == pb.y);
    CHECK(pa.z == pb.z);
}

TEST_CASE("hash_index zero tuple and purity") {
    DirHashGrid grid(DirHashGridConfig{}, 0);
    CHECK(grid.hash_index(0, 0, 0) == 0);
    CHECK(grid.hash_index(5, -3, 2) == grid.hash_index(5, -3, 2));
}

TEST_CASE("hash_index matches a hand-computed combiner value") {
    // Query (0.5,-0.5,0.25) at resolution 8 (cell size 0.25) lands in cell
    // (2,-2,1); combiner value frozen from hand evaluation.
    DirHashGrid grid(DirHashGridConfig{}, 0);  // log2_table = 19
    double s = 2.0 / 8;
    CHECK(std::int64_t(std::floor(0.5 / s)) == 2);
    CHECK(std::int64_t(std::floor(-0.5 / s)) == -2);
    CHECK(std::int64_t(std::floor(0.25 / s)) == 1);
    CHECK(grid.hash_index(2, -2, 1) == 219913);
}

TEST_CASE("encode at a lattice direction returns the stored corner features") {
    DirHashGrid grid(small_grid(), 3);
    Vec3 dir{1, 0, 0};
    // (1,0,0) is a lattice point at every even resolution.
    DirHashGrid::EncodeContext ctx;
    grid.encode(dir, &ctx);
    for (int l = 0; l < grid.config().levels; ++l) {
        std::size_t slot = grid.hash_index(grid.resolution(l) / 2, 0, 0);
        grid.table(l, slot, 0) = 0.25 + l;
        grid.table(l, slot, 1) = -1.5 * l;
    }
    auto enc = grid.encode(dir);
    for (int l = 0; l < grid.config().levels; ++l) {
        CHECK(enc[l * 2 + 0] == 0.25 + l);
        CHECK(enc[l * 2 + 1] == -1.5 * l);
    }
}

TEST_CASE("encode at a cell center is the mean of the 8 corners") {
    DirHashGridConfig cfg = small_grid();
    cfg.levels = 1;
    cfg.base_res = cfg.max_res = 4;
    DirHashGrid grid(cfg, 5);
    Vec3 center{0.25, 0.25, 0.75};  // frac (0.5, 0.5, 0.5) at cell size 0.5
    DirHashGrid::EncodeContext ctx;
    auto enc = grid.encode_at(center, &ctx);
    for (int f = 0; f < 2; ++f) {
        double mean = 0;
        for (int corner = 0; corner < 8; ++corner) mean += grid.table(0, ctx.slots[0][corner], f);
        mean /= 8.0;
        CHECK(enc[f] == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("trilinear interpolation reproduces a trilinear polynomial exactly") {
    DirHashGridConfig cfg = small_grid();
    cfg.levels = 1;
    cfg.base_res = cfg.max_res = 4;
    DirHashGrid grid(cfg, 7);
    auto poly = [](double x, double y, double z) {
        return 0.3 + 1.1 * x - 0.7 * y + 2.0 * z + 0.5 * x * y - 1.3 * x * z + 0.9 * y * z +
               0.4 * x * y * z;
    };
    // Pick a cell, write polynomial values at its corners.
    double s = 0.5;
    std::int64_t bx = 0, by = -1, bz = 1;
    std::set<std::size_t> distinct;
    for (int corner = 0; corner < 8; ++corner) {
        std::int64_t cx = bx + (corner & 1), cy = by + ((corner >> 1) & 1),
                     cz = bz + ((corner >> 2) & 1);
        std::size_t slot = grid.hash_index(cx, cy, cz);
        distinct.insert(slot);
        grid.table(0, slot, 0) = poly(cx * s, cy * s, cz * s);
    }
    REQUIRE(distinct.size() == 8);  // no collisions among this cell's corners
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        Vec3 q{(bx + rng.uniform()) * s, (by + rng.uniform()) * s, (bz + rng.uniform()) * s};
        auto enc = grid.encode_at(q);
        CHECK(enc[0] == doctest::Approx(poly(q.x, q.y, q.z)).epsilon(1e-12));
    }
}

TEST_CASE("encoding is continuous across a cell boundary") {
    DirHashGrid grid(small_grid(), 11);
    for (double& v : grid.raw_tables()) v *= 1e4;  // O(1) features
    double eps = 1e-12;
    double y = 0.3;
    auto unit_x = [&](double x) {
        double z = std::sqrt(1.0 - x * x - y * y);
        return Vec3{x, y, z};
    };
    // x = 0.25 is a cell-boundary plane of the resolution-16 level.
    auto a = grid.encode(unit_x(0.25 - eps));
    auto b = grid.encode(unit_x(0.25 + eps));
    double diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    CHECK(diff <= 1e-9);
}

TEST_CASE("encode rejects non-unit directions") {
    DirHashGrid grid(small_grid(), 1);
    CHECK_THROWS(grid.encode({0.5, 0.5, 0.5}));
}

TEST_CASE("encode_backward: corner query routes the full gradient to one slot") {
    DirHashGrid grid(small_grid(), 13);
    DirHashGrid::EncodeContext ctx;
    grid.encode({0, 1, 0}, &ctx);
    // At a lattice point one corner holds weight 1, the rest 0.
    for (int l = 0; l < grid.config().levels; ++l) {
        double sum = 0, maxw = 0;
        for (int corner = 0; corner < 8; ++corner) {
            sum += ctx.weights[l][corner];
            maxw = std::max(maxw, ctx.weights[l][corner]);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(maxw == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("encode_backward weights form a partition of unity") {
    DirHashGrid grid(small_grid(), 17);
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        Vec3 d{rng.normal(), rng.normal(), rng.normal()};
        if (d.norm() < 1e-9) continue;
        DirHashGrid::EncodeContext ctx;
        grid.encode(d.normalized(), &ctx);
        for (int l = 0; l < grid.config().levels; ++l) {
            double sum = 0;
            for (int corner = 0; corner < 8; ++corner) sum += ctx.weights[l][corner];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("encode_backward table gradients match finite differences") {
    DirHashGrid grid(small_grid(), 19);
    Rng rng(23);
    Vec3 d = Vec3{rng.normal(), rng.normal(), rng.normal()}.normalized();
    DirHashGrid::EncodeContext ctx;
    auto enc = grid.encode(d, &ctx);
    // Loss = sum_i v_i * enc_i with fixed random v.
    std::vector<double> v(enc.size());
    for (double& x : v) x = rng.uniform(-1, 1);
    auto grads = grid.encode_backward(ctx, v);

    const double h = 1e-5;
    for (const auto& g : grads) {
        for (int f = 0; f < grid.config().feats; ++f) {
            double orig = grid.table(g.level, g.slot, f);
            grid.table(g.level, g.slot, f) = orig + h;
            auto ep = grid.encode(d);
            grid.table(g.level, g.slot, f) = orig - h;
            auto em = grid.encode(d);
            grid.table(g.level, g.slot, f) = orig;
            double lp = 0, lm = 0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                lp += v[i] * ep[i];
                lm += v[i] * em[i];
            }
            double fd = (lp - lm) / (2 * h);
            // A slot can appear under several corners; sum matching entries.
            double analytic = 0;
            for (const auto& g2 : grads)
                if (g2.level == g.level && g2.slot == g.slot) analytic += g2.grad[f];
            double denom = std::max({std::abs(analytic), std::abs(fd), 1e-4});
            CHECK(std::abs(analytic - fd) / denom < 1e-4);
        }
    }
}

TEST_CASE("touched slots stay within the sphere-intersecting slot set") {
    DirHashGrid grid(small_grid(), 29);
    std::vector<std::set<std::size_t>> allowed;
    for (int l = 0; l < grid.config().levels; ++l) allowed.push_back(sphere_slots(grid, l));
    Rng rng(31);
    for (int i = 0; i < 1000; ++i) {
        Vec3 d{rng.normal(), rng.normal(), rng.normal()};
        if (d.norm() < 1e-9) continue;
        DirHashGrid::EncodeContext ctx;
        grid.encode(d.normalized(), &ctx);
        for (int l = 0; l < grid.config().levels; ++l)
            for (int corner = 0; corner < 8; ++corner)
                CHECK(allowed[l].count(ctx.slots[l][corner]) == 1);
    }
}

TEST_CASE("ColorMlp with zero parameters outputs mid-gray") {
    ColorMlp mlp(8, 1);
    for (int l = 0; l < 3; ++l) {
        for (double& w : mlp.weights(l)) w = 0;
        for (double& b : mlp.biases(l)) b = 0;
    }
    Vec3 rgb = mlp.forward(std::vector<double>(8, 0.7));
    CHECK(rgb.x == 0.5);
    CHECK(rgb.y == 0.5);
    CHECK(rgb.z == 0.5);
}

TEST_CASE("ColorMlp gradients match finite differences") {
    const int in_dim = 6;
    ColorMlp mlp(in_dim, 3, 8);
    Rng rng(37);
    std::vector<double> input(in_dim);
    for (double& x : input) x = rng.uniform(-1, 1);
    Vec3 v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};  // loss = v . rgb

    ColorMlp::Context ctx;
    mlp.forward(input, &ctx);
    ColorMlp::Grads grads;
    grads.resize_like(mlp);
    std::vector<double> dinput = mlp.backward(ctx, v, grads);

    auto loss = [&]() {
        Vec3 rgb = mlp.forward(input);
        return v.dot(rgb);
    };
    const double h = 1e-6;
    auto check = [&](double analytic, double* p) {
        double orig = *p;
        *p = orig + h;
        double lp = loss();
        *p = orig - h;
        double lm = loss();
        *p = orig;
        double fd = (lp - lm) / (2 * h);
        double denom = std::max({std::abs(analytic), std::abs(fd), 1e-4});
        CHECK(std::abs(analytic - fd) / denom < 1e-4);
    };
    for (int l = 0; l < 3; ++l) {
        for (std::size_t i = 0; i < mlp.weights(l).size(); i += 7)
            check(grads.weights[l][i], &mlp.weights(l)[i]);
        for (std::size_t i = 0; i < mlp.biases(l).size(); ++i)
            check(grads.biases[l][i], &mlp.biases(l)[i]);
    }
    for (int i = 0; i < in_dim; ++i) check(dinput[i], &input[i]);
}

TEST_CASE("ColorMlp is sensitive to the direction-encoding block") {
    ColorMlp mlp(10, 5, 8);
    std::vector<double> a(10, 0.2), b(10, 0.2);
    b[7] = 0.9;  // change only an encoding dimension
    Vec3 ra = mlp.forward(a), rb = mlp.forward(b);
    CHECK(std::abs(ra.x - rb.x) + std::abs(ra.y - rb.y) + std::abs(ra.z - rb.z) > 1e-9);
}

TEST_CASE("grid level resolutions grow strictly") {
    DirHashGrid grid(DirHashGridConfig{}, 0);
    CHECK(grid.resolution(0) == 8);
    CHECK(grid.resolution(grid.config().levels - 1) == 64);
    for (int l = 1; l < grid.config().levels; ++l)
        CHECK(grid.resolution(l) > grid.resolution(l - 1));
}
