#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "splat/core.hpp"
#include "splat/engine.hpp"

namespace splat {

// Views plus the sparse initialization points. Every eighth view (index
// mod 8 == 0 in load order) is held out as a test view.
struct Dataset {
    std::vector<View> train_views;
    std::vector<View> test_views;
    std::vector<Vec3> points;
    std::vector<Vec3> point_colors;  // [0,1]

    Scene to_scene(int feature_dim, std::uint64_t seed) const;
};

// COLMAP text export: cameras.txt (PINHOLE / SIMPLE_PINHOLE), images.txt
// (world-to-camera quaternion + translation), points3D.txt, plus an images/
// folder. Throws with file and line context on malformed input.
Dataset load_colmap_text(const std::string& dir);

// Generic loader: cameras.json datasets (synth output) or COLMAP text.
Dataset load_dataset(const std::string& dir);

// Single camera object in the cameras.json schema (the "image" key optional).
Camera load_camera_json(const std::string& path);

// 8-bit RGB PNG; values map by v -> round(v*255) on write and /255 on read.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& image);

// Binary little-endian PLY with double-precision properties
// (x,y,z, log_scale_0..2, rot_0..3, opacity_logit, f_0..f_{F-1}).
void save_ply(const std::string& path, const GaussianSet& set);
GaussianSet load_ply(const std::string& path);

// Single versioned little-endian binary with a magic header.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Flat JSON key-value form of TrainConfig; unknown keys are errors.
TrainConfig train_config_from_json(const std::string& json_text);
std::string train_config_to_json(const TrainConfig& cfg);

struct SynthSpec {
    std::string scene;  // "texture" or "specular"
    int n_views = 24;
    int width = 64;
    int height = 64;
};

// Writes images/, cameras.json and points.json under out_dir and returns the
// dataset. Ground truth is rendered with this project's own forward renderer.
Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed, const std::string& out_dir);

// Ground-truth color rule of the specular scene:
// base + gain * max(0, dot(to_camera, normal))^power, clamped to 1.
Vec3 specular_lobe(const Vec3& base, const Vec3& normal, double gain, double power,
                   const Vec3& to_camera);

}  // namespace splat
