#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "splat/io.hpp"
#include "splat/rng.hpp"

using namespace splat;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("splat_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

GaussianSet random_set(int n, int feature_dim, uint64_t seed) {
    GaussianSet set;
    set.feature_dim = feature_dim;
    Rng rng(seed);
    for (int k = 0; k < n; ++k) {
        set.positions.push_back({rng.normal(), rng.normal(), rng.normal()});
        set.log_scales.push_back({rng.normal(), rng.normal(), rng.normal()});
        set.rotations.push_back({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
        set.opacity_logits.push_back(rng.normal());
        std::vector<double> f(feature_dim);
        for (double& v : f) v = rng.normal();
        set.features.push_back(std::move(f));
    }
    return set;
}

bool sets_bitwise_equal(const GaussianSet& a, const GaussianSet& b) {
    if (a.size() != b.size() || a.feature_dim != b.feature_dim) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a.positions[k].x != b.positions[k].x || a.positions[k].y != b.positions[k].y ||
            a.positions[k].z != b.positions[k].z)
            return false;
        if (a.log_scales[k].x != b.log_scales[k].x || a.log_scales[k].y != b.log_scales[k].y ||
            a.log_scales[k].z != b.log_scales[k].z)
            return false;
        if (a.rotations[k].w != b.rotations[k].w || a.rotations[k].x != b.rotations[k].x ||
            a.rotations[k].y != b.rotations[k].y || a.rotations[k].z != b.rotations[k].z)
            return false;
        if (a.opacity_logits[k] != b.opacity_logits[k]) return false;
        if (a.features[k] != b.features[k]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("png: mid-gray quantizes to byte 128 and quantized values round trip") {
    fs::path dir = fresh_dir("png");
    Image gray(5, 4, 0.5);
    write_png((dir / "gray.png").string(), gray);
    Image back = read_png((dir / "gray.png").string());
    for (double v : back.data) CHECK(v == 128.0 / 255.0);

    Image ramp(16, 16);
    Rng rng(1);
    for (double& v : ramp.data) v = std::floor(rng.uniform() * 256.0 * 0.999) / 255.0;
    write_png((dir / "ramp.png").string(), ramp);
    Image ramp2 = read_png((dir / "ramp.png").string());
    CHECK(ramp2.data == ramp.data);

    CHECK_THROWS(read_png((dir / "missing.png").string()));
}

TEST_CASE("ply: save-load round trip is bitwise") {
    fs::path dir = fresh_dir("ply");
    GaussianSet set = random_set(17, 16, 3);
    save_ply((dir / "set.ply").string(), set);
    GaussianSet back = load_ply((dir / "set.ply").string());
    CHECK(sets_bitwise_equal(set, back));

    GaussianSet empty;
    save_ply((dir / "empty.ply").string(), empty);
    CHECK(load_ply((dir / "empty.ply").string()).size() == 0);

    std::ofstream(dir / "junk.ply") << "not a ply at all\n";
    CHECK_THROWS(load_ply((dir / "junk.ply").string()));
    // Truncated body.
    std::string whole = slurp(dir / "set.ply");
    std::ofstream(dir / "cut.ply", std::ios::binary) << whole.substr(0, whole.size() - 40);
    CHECK_THROWS(load_ply((dir / "cut.ply").string()));
}

TEST_CASE("checkpoint: bitwise round trip and error paths") {
    fs::path dir = fresh_dir("ckpt");
    Checkpoint ckpt;
    ckpt.config.iterations = 123;
    ckpt.config.lhe = false;
    ckpt.config.grid.log2_table = 8;
    ckpt.config.densify.variance_scale = 1024.0;
    ckpt.gaussians = random_set(9, 16, 5);
    ckpt.grid = DirHashGrid(ckpt.config.grid, 77);
    ckpt.mlp = ColorMlp(19, 78);
    ckpt.iteration = 123;
    std::string path = (dir / "a.ckpt").string();
    save_checkpoint(path, ckpt);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.iteration == 123);
    CHECK(back.config.iterations == 123);
    CHECK(back.config.lhe == false);
    CHECK(back.config.densify.variance_scale == 1024.0);
    CHECK(sets_bitwise_equal(back.gaussians, ckpt.gaussians));
    CHECK(back.grid.raw_tables() == ckpt.grid.raw_tables());
    for (int l = 0; l < 3; ++l) {
        CHECK(back.mlp.weights(l) == ckpt.mlp.weights(l));
        CHECK(back.mlp.biases(l) == ckpt.mlp.biases(l));
    }
    // Saving the loaded checkpoint reproduces the file byte for byte.
    save_checkpoint((dir / "b.ckpt").string(), back);
    CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));

    std::ofstream(dir / "bad.ckpt", std::ios::binary) << "WRONGMAGICxxxxxxxx";
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "bad.ckpt").string()),
                         doctest::Contains("magic"), std::runtime_error);
    std::string whole = slurp(dir / "a.ckpt");
    std::ofstream(dir / "cut.ckpt", std::ios::binary) << whole.substr(0, whole.size() / 2);
    CHECK_THROWS(load_checkpoint((dir / "cut.ckpt").string()));
    // Bump the version field (bytes 8..11).
    whole[8] = char(9);
    std::ofstream(dir / "ver.ckpt", std::ios::binary) << whole;
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "ver.ckpt").string()),
                         doctest::Contains("version"), std::runtime_error);
    CHECK_THROWS(load_checkpoint((dir / "missing.ckpt").string()));
}

TEST_CASE("colmap text: hand-written fixture loads field by field") {
    fs::path dir = fresh_dir("colmap");
    fs::create_directories(dir / "images");
    write_png((dir / "images/a.png").string(), Image(4, 3, 0.25));
    write_png((dir / "images/b.png").string(), Image(6, 5, 0.75));
    std::ofstream(dir / "cameras.txt") << "# comment line\n"
                                       << "1 PINHOLE 4 3 100.5 101.5 2.0 1.5\n"
                                       << "2 SIMPLE_PINHOLE 6 5 88.0 3.0 2.5\n";
    // Image 2 uses an identity quaternion; image 7 a 180-degree turn about x.
    std::ofstream(dir / "images.txt") << "# id qw qx qy qz tx ty tz cam name\n"
                                      << "2 1 0 0 0 0.1 0.2 0.3 1 a.png\n"
                                      << "1.0 2.0 55\n"
                                      << "7 0 1 0 0 -1 0 2 2 b.png\n"
                                      << "\n";
    std::ofstream(dir / "points3D.txt") << "# pid x y z r g b err track\n"
                                        << "4 0.5 -0.25 2.0 255 0 51 0.1 1 0\n"
                                        << "9 1.0 2.0 3.0 0 128 255 0.0 1 0\n";

    Dataset ds = load_colmap_text(dir.string());
    REQUIRE(ds.test_views.size() == 1);   // first view (index 0) held out
    REQUIRE(ds.train_views.size() == 1);
    const Camera& a = ds.test_views[0].camera;  // image id 2 comes first
    CHECK(a.fx == 100.5);
    CHECK(a.fy == 101.5);
    CHECK(a.cx == 2.0);
    CHECK(a.cy == 1.5);
    CHECK(a.width == 4);
    CHECK(a.height == 3);
    CHECK(a.w2c_rotation.m[0] == 1.0);  // identity rotation
    CHECK(a.w2c_rotation.m[4] == 1.0);
    CHECK(a.w2c_translation.x == 0.1);
    CHECK(ds.test_views[0].image.at(0, 0, 0) == 64.0 / 255.0);

    const Camera& b = ds.train_views[0].camera;
    CHECK(b.fx == 88.0);  // SIMPLE_PINHOLE: fx = fy = f
    CHECK(b.fy == 88.0);
    CHECK(b.cx == 3.0);
    CHECK(b.cy == 2.5);
    CHECK(b.w2c_rotation.m[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.w2c_rotation.m[4] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(b.w2c_rotation.m[8] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(b.w2c_translation.z == 2.0);

    REQUIRE(ds.points.size() == 2);
    CHECK(ds.points[0].x == 0.5);
    CHECK(ds.points[0].z == 2.0);
    CHECK(ds.point_colors[0].x == 1.0);
    CHECK(ds.point_colors[0].z == doctest::Approx(51.0 / 255.0).epsilon(1e-15));
    CHECK(ds.points[1].y == 2.0);
}

TEST_CASE("colmap text: named error paths") {
    fs::path dir = fresh_dir("colmap_err");
    fs::create_directories(dir / "images");
    std::ofstream(dir / "images.txt") << "";
    std::ofstream(dir / "points3D.txt") << "";

    std::ofstream(dir / "cameras.txt") << "1 RADIAL 4 3 80 2 1.5 0.01\n";
    CHECK_THROWS_WITH_AS(load_colmap_text(dir.string()),
                         doctest::Contains("unsupported camera model RADIAL"), std::runtime_error);

    std::ofstream(dir / "cameras.txt") << "1 PINHOLE 4 3 not_a_number 101 2 1.5\n";
    CHECK_THROWS_WITH_AS(load_colmap_text(dir.string()), doctest::Contains("cameras.txt:1"),
                         std::runtime_error);

    std::ofstream(dir / "cameras.txt") << "1 PINHOLE 4 3 100 101 2 1.5\n";
    std::ofstream(dir / "images.txt") << "2 1 0 0 0 0 0 0 1 nope.png\n\n";
    CHECK_THROWS_WITH_AS(load_colmap_text(dir.string()), doctest::Contains("missing image file"),
                         std::runtime_error);
}

TEST_CASE("synth: reproducible byte-identical output and correct split") {
    fs::path a = fresh_dir("synth_a"), b = fresh_dir("synth_b");
    SynthSpec spec;
    spec.scene = "texture";
    spec.n_views = 9;
    spec.width = spec.height = 32;
    Dataset da = synth_dataset(spec, 7, a.string());
    Dataset db = synth_dataset(spec, 7, b.string());
    CHECK(slurp(a / "cameras.json") == slurp(b / "cameras.json"));
    CHECK(slurp(a / "points.json") == slurp(b / "points.json"));
    for (int i = 0; i < spec.n_views; ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "images/view_%03d.png", i);
        CHECK(slurp(a / name) == slurp(b / name));
    }
    CHECK(da.test_views.size() == 2);  // indices 0 and 8 of 9
    CHECK(da.train_views.size() == 7);
    CHECK(da.points.size() == 57);  // floor(0.1 * 576) ground-truth Gaussians
    CHECK(da.points.size() == db.points.size());

    Dataset loaded = load_dataset(a.string());
    CHECK(loaded.train_views.size() == da.train_views.size());
    CHECK(loaded.points.size() == da.points.size());
    CHECK(loaded.train_views[0].image.data == da.train_views[0].image.data);
    CHECK(loaded.train_views[0].camera.w2c_rotation.m == da.train_views[0].camera.w2c_rotation.m);

    Scene scene = loaded.to_scene(16, 1);
    CHECK(scene.gaussians.size() == 57);
    CHECK(scene.train_views.size() == 7);

    CHECK_THROWS_WITH_AS(synth_dataset(SynthSpec{"volcano", 4, 8, 8}, 1, a.string()),
                         doctest::Contains("texture or specular"), std::runtime_error);
}

TEST_CASE("synth specular: lobe rule and view dependence") {
    Vec3 base{0.3, 0.2, 0.4}, n{0, 0, 1};
    Vec3 peak = specular_lobe(base, n, 0.5, 8.0, n);
    CHECK(peak.x == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(peak.y == doctest::Approx(0.7).epsilon(1e-15));
    Vec3 away = specular_lobe(base, n, 0.5, 8.0, {0, 0, -1});
    CHECK(away.x == base.x);
    CHECK(away.y == base.y);
    CHECK(away.z == base.z);
    Vec3 graze = specular_lobe(base, n, 0.5, 8.0, Vec3{1, 0, 1}.normalized());
    CHECK(graze.x == doctest::Approx(base.x + 0.5 * std::pow(std::sqrt(0.5), 8.0)).epsilon(1e-12));
    Vec3 clamped = specular_lobe({0.9, 0.9, 0.9}, n, 0.5, 8.0, n);
    CHECK(clamped.x == 1.0);

    fs::path dir = fresh_dir("synth_spec");
    SynthSpec spec;
    spec.scene = "specular";
    spec.n_views = 8;
    spec.width = spec.height = 32;
    Dataset ds = synth_dataset(spec, 3, dir.string());
    CHECK(ds.train_views.size() + ds.test_views.size() == 8);
    CHECK(ds.points.size() == 20);  // floor(0.1 * 200)
}

TEST_CASE("train config json: round trip, overrides, unknown keys") {
    TrainConfig def;
    TrainConfig back = train_config_from_json(train_config_to_json(def));
    CHECK(back.iterations == def.iterations);
    CHECK(back.lr_position == def.lr_position);
    CHECK(back.densify.variance_scale == def.densify.variance_scale);
    CHECK(back.grid.log2_table == def.grid.log2_table);
    CHECK(back.lhe == def.lhe);

    TrainConfig partial = train_config_from_json(
        R"({"iterations": 42, "vgd": false, "densify_variance_scale": 512.0})");
    CHECK(partial.iterations == 42);
    CHECK(partial.vgd == false);
    CHECK(partial.densify.variance_scale == 512.0);
    CHECK(partial.lr_position == def.lr_position);

    CHECK_THROWS_WITH_AS(train_config_from_json(R"({"gamma": 12})"),
                         doctest::Contains("unknown key"), std::runtime_error);
    CHECK_THROWS(train_config_from_json("not json"));
}
