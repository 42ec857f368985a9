#include "splat/io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "splat/raster.hpp"
#include "splat/rng.hpp"

namespace splat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

// ---- little-endian binary primitives -------------------------------------

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) fail(std::string("checkpoint: truncated while reading ") + what);
    return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
    write_pod<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& in, const char* what) {
    auto n = read_pod<std::uint64_t>(in, what);
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(double)));
    if (!in) fail(std::string("checkpoint: truncated while reading ") + what);
    return v;
}

// ---- view splitting -------------------------------------------------------

void split_views(std::vector<View> views, Dataset& ds) {
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (i % 8 == 0)
            ds.test_views.push_back(std::move(views[i]));
        else
            ds.train_views.push_back(std::move(views[i]));
    }
}

Camera camera_from_json(const json& j) {
    Camera cam;
    cam.fx = j.at("fx");
    cam.fy = j.at("fy");
    cam.cx = j.at("cx");
    cam.cy = j.at("cy");
    cam.width = j.at("width");
    cam.height = j.at("height");
    const auto& r = j.at("w2c_rotation");
    const auto& t = j.at("w2c_translation");
    if (r.size() != 9 || t.size() != 3) fail("cameras.json: bad rotation/translation length");
    for (int i = 0; i < 9; ++i) cam.w2c_rotation.m[i] = r[std::size_t(i)].get<double>();
    cam.w2c_translation = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
    return cam;
}

json camera_to_json(const Camera& cam, const std::string& image_rel) {
    json j;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["w2c_rotation"] = std::vector<double>(cam.w2c_rotation.m.begin(), cam.w2c_rotation.m.end());
    j["w2c_translation"] = {cam.w2c_translation.x, cam.w2c_translation.y, cam.w2c_translation.z};
    j["image"] = image_rel;
    return j;
}

Dataset load_json_dataset(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "cameras.json");
    if (!in) fail("load_dataset: cannot open " + dir + "/cameras.json");
    json cams = json::parse(in);
    std::vector<View> views;
    for (const json& j : cams) {
        View view;
        view.camera = camera_from_json(j);
        view.image = read_png((fs::path(dir) / std::string(j.at("image"))).string());
        if (view.image.width != view.camera.width || view.image.height != view.camera.height)
            fail("load_dataset: image does not match camera dimensions: " +
                 std::string(j.at("image")));
        views.push_back(std::move(view));
    }
    Dataset ds;
    split_views(std::move(views), ds);
    fs::path pts = fs::path(dir) / "points.json";
    if (fs::exists(pts)) {
        std::ifstream pin(pts);
        json pj = json::parse(pin);
        for (const json& p : pj.at("points"))
            ds.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
        for (const json& c : pj.at("colors"))
            ds.point_colors.push_back({c[0].get<double>(), c[1].get<double>(), c[2].get<double>()});
    }
    return ds;
}

// ---- COLMAP text ----------------------------------------------------------

std::vector<std::string> tokens_of(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> toks;
    std::string t;
    while (ss >> t) toks.push_back(t);
    return toks;
}

[[noreturn]] void malformed(const std::string& file, int line_no) {
    fail("load_colmap_text: malformed line at " + file + ":" + std::to_string(line_no));
}

}  // namespace

Scene Dataset::to_scene(int feature_dim, std::uint64_t seed) const {
    Scene scene;
    scene.gaussians = init_from_points(points, feature_dim, seed);
    scene.train_views = train_views;
    scene.test_views = test_views;
    return scene;
}

Dataset load_colmap_text(const std::string& dir) {
    std::map<long, Camera> cameras;
    {
        std::string file = (fs::path(dir) / "cameras.txt").string();
        std::ifstream in(file);
        if (!in) fail("load_colmap_text: cannot open " + file);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#') continue;
            auto toks = tokens_of(line);
            if (toks.size() < 5) malformed(file, line_no);
            try {
                long id = std::stol(toks[0]);
                const std::string& model = toks[1];
                Camera cam;
                cam.width = std::stoi(toks[2]);
                cam.height = std::stoi(toks[3]);
                if (model == "PINHOLE") {
                    if (toks.size() != 8) malformed(file, line_no);
                    cam.fx = std::stod(toks[4]);
                    cam.fy = std::stod(toks[5]);
                    cam.cx = std::stod(toks[6]);
                    cam.cy = std::stod(toks[7]);
                } else if (model == "SIMPLE_PINHOLE") {
                    if (toks.size() != 7) malformed(file, line_no);
                    cam.fx = cam.fy = std::stod(toks[4]);
                    cam.cx = std::stod(toks[5]);
                    cam.cy = std::stod(toks[6]);
                } else {
                    fail("load_colmap_text: unsupported camera model " + model + " in " + file);
                }
                cameras[id] = cam;
            } catch (const std::logic_error&) {
                malformed(file, line_no);
            }
        }
    }

    std::map<long, View> views;  // keyed by image id: deterministic order
    {
        std::string file = (fs::path(dir) / "images.txt").string();
        std::ifstream in(file);
        if (!in) fail("load_colmap_text: cannot open " + file);
        std::string line;
        int line_no = 0;
        bool expect_points2d = false;
        long pending_id = 0;
        View pending;
        while (std::getline(in, line)) {
            ++line_no;
            if (expect_points2d) {  // POINTS2D line (possibly empty), ignored
                expect_points2d = false;
                views[pending_id] = std::move(pending);
                continue;
            }
            if (line.empty() || line[0] == '#') continue;
            auto toks = tokens_of(line);
            if (toks.size() != 10) malformed(file, line_no);
            try {
                pending_id = std::stol(toks[0]);
                Quat q{std::stod(toks[1]), std::stod(toks[2]), std::stod(toks[3]),
                       std::stod(toks[4])};
                Vec3 t{std::stod(toks[5]), std::stod(toks[6]), std::stod(toks[7])};
                long cam_id = std::stol(toks[8]);
                auto it = cameras.find(cam_id);
                if (it == cameras.end())
                    fail("load_colmap_text: unknown camera id " + toks[8] + " at " + file + ":" +
                         std::to_string(line_no));
                pending.camera = it->second;
                pending.camera.w2c_rotation = quat_to_rotation(q);
                pending.camera.w2c_translation = t;
                fs::path img_path = fs::path(dir) / "images" / toks[9];
                if (!fs::exists(img_path))
                    fail("load_colmap_text: missing image file " + img_path.string());
                pending.image = read_png(img_path.string());
                expect_points2d = true;
            } catch (const std::logic_error&) {
                malformed(file, line_no);
            }
        }
        if (expect_points2d) views[pending_id] = std::move(pending);
    }

    Dataset ds;
    {
        std::string file = (fs::path(dir) / "points3D.txt").string();
        std::ifstream in(file);
        if (!in) fail("load_colmap_text: cannot open " + file);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#') continue;
            auto toks = tokens_of(line);
            if (toks.size() < 8) malformed(file, line_no);
            try {
                ds.points.push_back(
                    {std::stod(toks[1]), std::stod(toks[2]), std::stod(toks[3])});
                ds.point_colors.push_back({std::stod(toks[4]) / 255.0, std::stod(toks[5]) / 255.0,
                                           std::stod(toks[6]) / 255.0});
            } catch (const std::logic_error&) {
                malformed(file, line_no);
            }
        }
    }

    std::vector<View> ordered;
    for (auto& [id, view] : views) ordered.push_back(std::move(view));
    split_views(std::move(ordered), ds);
    return ds;
}

Dataset load_dataset(const std::string& dir) {
    if (fs::exists(fs::path(dir) / "cameras.json")) return load_json_dataset(dir);
    if (fs::exists(fs::path(dir) / "cameras.txt")) return load_colmap_text(dir);
    fail("load_dataset: neither cameras.json nor cameras.txt found in " + dir);
}

Camera load_camera_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("load_camera_json: cannot open " + path);
    return camera_from_json(json::parse(in));
}

// ---- PNG ------------------------------------------------------------------

Image read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) fail("read_png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        std::fclose(fp);
        fail("read_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        fail("read_png: decode error in " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    int w = int(png_get_image_width(png, info));
    int h = int(png_get_image_height(png, info));
    if (png_get_channels(png, info) != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        fail("read_png: unsupported channel layout in " + path);
    }
    std::vector<png_byte> row(std::size_t(w) * 3);
    Image img(w, h);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = row[std::size_t(x) * 3 + c] / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

void write_png(const std::string& path, const Image& image) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) fail("write_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        std::fclose(fp);
        fail("write_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        fail("write_png: encode error for " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(image.width), png_uint_32(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(std::size_t(image.width) * 3);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::floor(image.at(x, y, c) * 255.0 + 0.5);  // round half up
                row[std::size_t(x) * 3 + c] = png_byte(std::min(255.0, std::max(0.0, v)));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

// ---- PLY ------------------------------------------------------------------

void save_ply(const std::string& path, const GaussianSet& set) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("save_ply: cannot open " + path);
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "comment feature_dim " << set.feature_dim << "\n";
    out << "element vertex " << set.size() << "\n";
    const char* base[] = {"x",     "y",     "z",     "log_scale_0", "log_scale_1",  "log_scale_2",
                          "rot_0", "rot_1", "rot_2", "rot_3",       "opacity_logit"};
    for (const char* p : base) out << "property double " << p << "\n";
    for (int f = 0; f < set.feature_dim; ++f) out << "property double f_" << f << "\n";
    out << "end_header\n";
    for (std::size_t k = 0; k < set.size(); ++k) {
        double row[11] = {set.positions[k].x,  set.positions[k].y,  set.positions[k].z,
                          set.log_scales[k].x, set.log_scales[k].y, set.log_scales[k].z,
                          set.rotations[k].w,  set.rotations[k].x,  set.rotations[k].y,
                          set.rotations[k].z,  set.opacity_logits[k]};
        out.write(reinterpret_cast<const char*>(row), sizeof(row));
        out.write(reinterpret_cast<const char*>(set.features[k].data()),
                  std::streamsize(set.features[k].size() * sizeof(double)));
    }
    if (!out) fail("save_ply: write failed for " + path);
}

GaussianSet load_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("load_ply: cannot open " + path);
    std::string line;
    std::size_t n = 0;
    int n_props = 0, feature_dim = 0;
    bool header_done = false;
    while (std::getline(in, line)) {
        auto toks = tokens_of(line);
        if (toks.empty()) continue;
        if (toks[0] == "format" && (toks.size() < 2 || toks[1] != "binary_little_endian"))
            fail("load_ply: unsupported format in " + path);
        if (toks[0] == "comment" && toks.size() == 3 && toks[1] == "feature_dim")
            feature_dim = std::stoi(toks[2]);
        if (toks[0] == "element" && toks.size() == 3 && toks[1] == "vertex")
            n = std::stoul(toks[2]);
        if (toks[0] == "property") ++n_props;
        if (toks[0] == "end_header") {
            header_done = true;
            break;
        }
    }
    if (!header_done) fail("load_ply: missing end_header in " + path);
    if (n_props != 11 + feature_dim) fail("load_ply: property count disagrees in " + path);
    GaussianSet set;
    set.feature_dim = feature_dim;
    for (std::size_t k = 0; k < n; ++k) {
        double row[11];
        in.read(reinterpret_cast<char*>(row), sizeof(row));
        std::vector<double> f(std::size_t(feature_dim), 0.0);
        in.read(reinterpret_cast<char*>(f.data()),
                std::streamsize(f.size() * sizeof(double)));
        if (!in) fail("load_ply: truncated file " + path);
        set.positions.push_back({row[0], row[1], row[2]});
        set.log_scales.push_back({row[3], row[4], row[5]});
        set.rotations.push_back({row[6], row[7], row[8], row[9]});
        set.opacity_logits.push_back(row[10]);
        set.features.push_back(std::move(f));
    }
    return set;
}

// ---- checkpoint -----------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'S', 'P', 'L', 'A', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void write_config(std::ostream& out, const TrainConfig& c) {
    write_pod(out, c.iterations);
    write_pod(out, c.lr_position);
    write_pod(out, c.lr_position_final);
    write_pod(out, c.lr_log_scale);
    write_pod(out, c.lr_rotation);
    write_pod(out, c.lr_opacity);
    write_pod(out, c.lr_feature);
    write_pod(out, c.lr_mlp);
    write_pod(out, c.lr_hash);
    write_pod(out, c.lambda_dssim);
    write_pod(out, c.densify.grad_threshold);
    write_pod(out, c.densify.variance_scale);
    write_pod(out, c.densify.interval);
    write_pod(out, c.densify.start_step);
    write_pod(out, c.densify.end_step);
    write_pod(out, c.densify.percent_dense);
    write_pod(out, c.densify.prune_opacity);
    write_pod(out, c.densify.split_factor);
    write_pod(out, c.densify.opacity_reset_interval);
    write_pod<std::uint8_t>(out, c.lhe);
    write_pod<std::uint8_t>(out, c.vgd);
    write_pod(out, c.noise_std);
    write_pod<std::uint8_t>(out, c.parallel);
    write_pod(out, c.seed);
    write_pod(out, c.grid.levels);
    write_pod(out, c.grid.base_res);
    write_pod(out, c.grid.max_res);
    write_pod(out, c.grid.log2_table);
    write_pod(out, c.grid.feats);
    write_pod(out, c.feature_dim);
}

TrainConfig read_config(std::istream& in) {
    TrainConfig c;
    c.iterations = read_pod<int>(in, "config");
    c.lr_position = read_pod<double>(in, "config");
    c.lr_position_final = read_pod<double>(in, "config");
    c.lr_log_scale = read_pod<double>(in, "config");
    c.lr_rotation = read_pod<double>(in, "config");
    c.lr_opacity = read_pod<double>(in, "config");
    c.lr_feature = read_pod<double>(in, "config");
    c.lr_mlp = read_pod<double>(in, "config");
    c.lr_hash = read_pod<double>(in, "config");
    c.lambda_dssim = read_pod<double>(in, "config");
    c.densify.grad_threshold = read_pod<double>(in, "config");
    c.densify.variance_scale = read_pod<double>(in, "config");
    c.densify.interval = read_pod<int>(in, "config");
    c.densify.start_step = read_pod<int>(in, "config");
    c.densify.end_step = read_pod<int>(in, "config");
    c.densify.percent_dense = read_pod<double>(in, "config");
    c.densify.prune_opacity = read_pod<double>(in, "config");
    c.densify.split_factor = read_pod<double>(in, "config");
    c.densify.opacity_reset_interval = read_pod<int>(in, "config");
    c.lhe = read_pod<std::uint8_t>(in, "config");
    c.vgd = read_pod<std::uint8_t>(in, "config");
    c.noise_std = read_pod<double>(in, "config");
    c.parallel = read_pod<std::uint8_t>(in, "config");
    c.seed = read_pod<std::uint64_t>(in, "config");
    c.grid.levels = read_pod<int>(in, "config");
    c.grid.base_res = read_pod<int>(in, "config");
    c.grid.max_res = read_pod<int>(in, "config");
    c.grid.log2_table = read_pod<int>(in, "config");
    c.grid.feats = read_pod<int>(in, "config");
    c.feature_dim = read_pod<int>(in, "config");
    return c;
}
}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    // Atomic write: temp file in place, then rename.
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) fail("save_checkpoint: cannot open " + tmp);
        out.write(kMagic, sizeof(kMagic));
        write_pod(out, kVersion);
        write_pod(out, ckpt.iteration);
        write_config(out, ckpt.config);

        const GaussianSet& g = ckpt.gaussians;
        write_pod<std::uint64_t>(out, g.size());
        write_pod(out, g.feature_dim);
        for (std::size_t k = 0; k < g.size(); ++k) {
            write_pod(out, g.positions[k]);
            write_pod(out, g.log_scales[k]);
            write_pod(out, g.rotations[k]);
            write_pod(out, g.opacity_logits[k]);
            out.write(reinterpret_cast<const char*>(g.features[k].data()),
                      std::streamsize(g.features[k].size() * sizeof(double)));
        }
        write_doubles(out, ckpt.grid.raw_tables());
        write_pod(out, ckpt.mlp.input_dim());
        write_pod(out, ckpt.mlp.dims()[1]);
        for (int l = 0; l < 3; ++l) {
            write_doubles(out, ckpt.mlp.weights(l));
            write_doubles(out, ckpt.mlp.biases(l));
        }
        if (!out) fail("save_checkpoint: write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        fail("load_checkpoint: bad magic in " + path + " (not a checkpoint file)");
    auto version = read_pod<std::uint32_t>(in, "version");
    if (version != kVersion)
        fail("load_checkpoint: unsupported version " + std::to_string(version) + " in " + path);
    Checkpoint ckpt;
    ckpt.version = version;
    ckpt.iteration = read_pod<int>(in, "iteration");
    ckpt.config = read_config(in);

    auto n = read_pod<std::uint64_t>(in, "gaussian count");
    ckpt.gaussians.feature_dim = read_pod<int>(in, "feature_dim");
    for (std::size_t k = 0; k < n; ++k) {
        ckpt.gaussians.positions.push_back(read_pod<Vec3>(in, "position"));
        ckpt.gaussians.log_scales.push_back(read_pod<Vec3>(in, "log_scale"));
        ckpt.gaussians.rotations.push_back(read_pod<Quat>(in, "rotation"));
        ckpt.gaussians.opacity_logits.push_back(read_pod<double>(in, "opacity"));
        std::vector<double> f(std::size_t(ckpt.gaussians.feature_dim));
        in.read(reinterpret_cast<char*>(f.data()), std::streamsize(f.size() * sizeof(double)));
        if (!in) fail("load_checkpoint: truncated features in " + path);
        ckpt.gaussians.features.push_back(std::move(f));
    }
    ckpt.grid = DirHashGrid(ckpt.config.grid, 0);
    std::vector<double> tables = read_doubles(in, "hash tables");
    if (tables.size() != ckpt.grid.raw_tables().size())
        fail("load_checkpoint: hash table size disagrees with grid shape in " + path);
    ckpt.grid.raw_tables() = std::move(tables);
    int input_dim = read_pod<int>(in, "mlp input dim");
    int hidden = read_pod<int>(in, "mlp hidden dim");
    ckpt.mlp = ColorMlp(input_dim, 0, hidden);
    for (int l = 0; l < 3; ++l) {
        std::vector<double> w = read_doubles(in, "mlp weights");
        std::vector<double> b = read_doubles(in, "mlp biases");
        if (w.size() != ckpt.mlp.weights(l).size() || b.size() != ckpt.mlp.biases(l).size())
            fail("load_checkpoint: MLP layer shape disagrees in " + path);
        ckpt.mlp.weights(l) = std::move(w);
        ckpt.mlp.biases(l) = std::move(b);
    }
    return ckpt;
}

// ---- TrainConfig JSON -----------------------------------------------------

std::string train_config_to_json(const TrainConfig& c) {
    json j;
    j["iterations"] = c.iterations;
    j["lr_position"] = c.lr_position;
    j["lr_position_final"] = c.lr_position_final;
    j["lr_log_scale"] = c.lr_log_scale;
    j["lr_rotation"] = c.lr_rotation;
    j["lr_opacity"] = c.lr_opacity;
    j["lr_feature"] = c.lr_feature;
    j["lr_mlp"] = c.lr_mlp;
    j["lr_hash"] = c.lr_hash;
    j["lambda_dssim"] = c.lambda_dssim;
    j["densify_grad_threshold"] = c.densify.grad_threshold;
    j["densify_variance_scale"] = c.densify.variance_scale;
    j["densify_interval"] = c.densify.interval;
    j["densify_start_step"] = c.densify.start_step;
    j["densify_end_step"] = c.densify.end_step;
    j["densify_percent_dense"] = c.densify.percent_dense;
    j["densify_prune_opacity"] = c.densify.prune_opacity;
    j["densify_split_factor"] = c.densify.split_factor;
    j["densify_opacity_reset_interval"] = c.densify.opacity_reset_interval;
    j["lhe"] = c.lhe;
    j["vgd"] = c.vgd;
    j["noise_std"] = c.noise_std;
    j["parallel"] = c.parallel;
    j["seed"] = c.seed;
    j["grid_levels"] = c.grid.levels;
    j["grid_base_res"] = c.grid.base_res;
    j["grid_max_res"] = c.grid.max_res;
    j["grid_log2_table"] = c.grid.log2_table;
    j["grid_feats"] = c.grid.feats;
    j["feature_dim"] = c.feature_dim;
    return j.dump(2) + "\n";
}

TrainConfig train_config_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    TrainConfig c;
    json known = json::parse(train_config_to_json(c));
    for (auto& [key, value] : j.items())
        if (!known.contains(key)) fail("config: unknown key \"" + key + "\"");
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key);
    };
    get("iterations", c.iterations);
    get("lr_position", c.lr_position);
    get("lr_position_final", c.lr_position_final);
    get("lr_log_scale", c.lr_log_scale);
    get("lr_rotation", c.lr_rotation);
    get("lr_opacity", c.lr_opacity);
    get("lr_feature", c.lr_feature);
    get("lr_mlp", c.lr_mlp);
    get("lr_hash", c.lr_hash);
    get("lambda_dssim", c.lambda_dssim);
    get("densify_grad_threshold", c.densify.grad_threshold);
    get("densify_variance_scale", c.densify.variance_scale);
    get("densify_interval", c.densify.interval);
    get("densify_start_step", c.densify.start_step);
    get("densify_end_step", c.densify.end_step);
    get("densify_percent_dense", c.densify.percent_dense);
    get("densify_prune_opacity", c.densify.prune_opacity);
    get("densify_split_factor", c.densify.split_factor);
    get("densify_opacity_reset_interval", c.densify.opacity_reset_interval);
    get("lhe", c.lhe);
    get("vgd", c.vgd);
    get("noise_std", c.noise_std);
    get("parallel", c.parallel);
    get("seed", c.seed);
    get("grid_levels", c.grid.levels);
    get("grid_base_res", c.grid.base_res);
    get("grid_max_res", c.grid.max_res);
    get("grid_log2_table", c.grid.log2_table);
    get("grid_feats", c.grid.feats);
    get("feature_dim", c.feature_dim);
    return c;
}

// ---- synthetic datasets ---------------------------------------------------

namespace {

Camera look_at(const Vec3& eye, const Vec3& target, int width, int height, double f) {
    Vec3 zc = (target - eye).normalized();
    Vec3 up{0, 1, 0};
    Vec3 xc{up.y * zc.z - up.z * zc.y, up.z * zc.x - up.x * zc.z, up.x * zc.y - up.y * zc.x};
    xc = xc.normalized();
    Vec3 yc{zc.y * xc.z - zc.z * xc.y, zc.z * xc.x - zc.x * xc.z, zc.x * xc.y - zc.y * xc.x};
    Camera cam;
    cam.fx = cam.fy = f;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    cam.w2c_rotation = Mat3{{xc.x, xc.y, xc.z, yc.x, yc.y, yc.z, zc.x, zc.y, zc.z}};
    Vec3 rt = cam.w2c_rotation * eye;
    cam.w2c_translation = {-rt.x, -rt.y, -rt.z};
    return cam;
}

struct GroundTruth {
    GaussianSet set;
    std::vector<Vec3> base_color;
    std::vector<Vec3> normal;  // specular only
    double lobe_gain = 0.0;
    double lobe_power = 8.0;
};

// Dense wall of Gaussians with a high-frequency checkerboard color field.
GroundTruth texture_scene(Rng& rng) {
    GroundTruth gt;
    gt.set.feature_dim = 0;
    const int n = 24;
    const double span = 0.9, step = 2 * span / (n - 1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            gt.set.positions.push_back({-span + i * step, -span + j * step, 0.0});
            double ls = std::log(step * 0.6);
            gt.set.log_scales.push_back({ls, ls, std::log(0.01)});
            gt.set.rotations.push_back(Quat{});
            gt.set.opacity_logits.push_back(logit(0.9));
            gt.set.features.push_back({});
            Vec3 c = (i + j) % 2 ? Vec3{0.85, 0.8, 0.15} : Vec3{0.12, 0.2, 0.7};
            c.x = std::min(1.0, std::max(0.0, c.x + rng.uniform(-0.06, 0.06)));
            c.y = std::min(1.0, std::max(0.0, c.y + rng.uniform(-0.06, 0.06)));
            c.z = std::min(1.0, std::max(0.0, c.z + rng.uniform(-0.06, 0.06)));
            gt.base_color.push_back(c);
        }
    return gt;
}

// Gaussians on a sphere with a view-dependent specular lobe over a base color.
GroundTruth specular_scene(Rng& rng) {
    GroundTruth gt;
    gt.set.feature_dim = 0;
    gt.lobe_gain = 0.55;
    const int n = 200;
    const double radius = 0.55;
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        double y = 1.0 - 2.0 * (i + 0.5) / n;
        double r = std::sqrt(std::max(0.0, 1.0 - y * y));
        double phi = golden * i;
        Vec3 dir{r * std::cos(phi), y, r * std::sin(phi)};
        gt.set.positions.push_back({radius * dir.x, radius * dir.y, radius * dir.z});
        double ls = std::log(0.07);
        gt.set.log_scales.push_back({ls, ls, ls});
        gt.set.rotations.push_back(Quat{});
        gt.set.opacity_logits.push_back(logit(0.95));
        gt.set.features.push_back({});
        gt.normal.push_back(dir);
        gt.base_color.push_back({0.2 + 0.25 * (dir.x + 1), 0.15 + 0.2 * (dir.y + 1),
                                 0.2 + 0.15 * (dir.z + 1)});
        (void)rng;
    }
    return gt;
}

Vec3 lobe_color(const GroundTruth& gt, std::size_t k, const Vec3& cam_center) {
    if (gt.lobe_gain <= 0) return gt.base_color[k];
    Vec3 d = (cam_center - gt.set.positions[k]).normalized();
    return specular_lobe(gt.base_color[k], gt.normal[k], gt.lobe_gain, gt.lobe_power, d);
}

}  // namespace

Vec3 specular_lobe(const Vec3& base, const Vec3& normal, double gain, double power,
                   const Vec3& to_camera) {
    double s = std::max(0.0, to_camera.dot(normal));
    double boost = gain * std::pow(s, power);
    return {std::min(1.0, base.x + boost), std::min(1.0, base.y + boost),
            std::min(1.0, base.z + boost)};
}

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed, const std::string& out_dir) {
    if (spec.scene != "texture" && spec.scene != "specular")
        fail("synth_dataset: unknown scene \"" + spec.scene + "\" (choose texture or specular)");
    Rng rng(seed);
    GroundTruth gt = spec.scene == "texture" ? texture_scene(rng) : specular_scene(rng);

    fs::create_directories(fs::path(out_dir) / "images");
    json cams = json::array();
    std::vector<View> views;
    RasterConfig rcfg;
    rcfg.background = {0.04, 0.04, 0.06};
    for (int i = 0; i < spec.n_views; ++i) {
        double t = spec.n_views > 1 ? double(i) / (spec.n_views - 1) : 0.5;
        Vec3 eye;
        if (spec.scene == "texture") {
            double theta = -0.55 + 1.1 * t;
            eye = {2.4 * std::sin(theta), 0.5 * std::sin(2.3 * theta), -2.4 * std::cos(theta)};
        } else {
            double theta = 2.0 * M_PI * double(i) / spec.n_views;
            eye = {2.4 * std::sin(theta), 0.55 * std::sin(2 * theta), -2.4 * std::cos(theta)};
        }
        Camera cam = look_at(eye, {0, 0, 0}, spec.width, spec.height,
                             0.9 * std::min(spec.width, spec.height));
        std::vector<Vec3> colors(gt.set.size());
        for (std::size_t k = 0; k < gt.set.size(); ++k)
            colors[k] = lobe_color(gt, k, cam.center());
        RenderContext ctx;
        Image img = render(gt.set, cam, colors, rcfg, ctx);

        char name[64];
        std::snprintf(name, sizeof(name), "images/view_%03d.png", i);
        write_png((fs::path(out_dir) / name).string(), img);
        cams.push_back(camera_to_json(cam, name));
        // The stored view uses the quantized PNG as ground truth.
        views.push_back({cam, read_png((fs::path(out_dir) / name).string())});
    }
    {
        std::ofstream out(fs::path(out_dir) / "cameras.json");
        out << cams.dump(2) << "\n";
    }

    // Sparse init: a seeded 10% subsample of the ground-truth positions.
    std::size_t n_init = gt.set.size() / 10;
    std::vector<std::size_t> perm(gt.set.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[std::size_t(rng.uniform() * double(i))]);
    Dataset ds;
    json pts, cols;
    for (std::size_t i = 0; i < n_init; ++i) {
        const Vec3& p = gt.set.positions[perm[i]];
        const Vec3& c = gt.base_color[perm[i]];
        ds.points.push_back(p);
        ds.point_colors.push_back(c);
        pts.push_back({p.x, p.y, p.z});
        cols.push_back({c.x, c.y, c.z});
    }
    {
        json pj;
        pj["points"] = pts;
        pj["colors"] = cols;
        std::ofstream out(fs::path(out_dir) / "points.json");
        out << pj.dump(2) << "\n";
    }
    split_views(std::move(views), ds);
    return ds;
}

}  // namespace splat
