#pragma once
#include <array>
#include <cstdint>
#include <vector>

#include "splat/math.hpp"
#include "splat/rng.hpp"

namespace splat {

// Multi-level hash table of trainable features over the unit sphere of view
// directions, bounding box [-1,1]^3. Level resolutions grow geometrically from
// base_res to max_res.
struct DirHashGridConfig {
    int levels = 8;
    int base_res = 8;
    int max_res = 64;
    int log2_table = 19;
    int feats = 2;
};

class DirHashGrid {
  public:
    DirHashGrid() = default;
    DirHashGrid(const DirHashGridConfig& cfg, uint64_t seed);

    const DirHashGridConfig& config() const { return cfg_; }
    int output_dim() const { return cfg_.levels * cfg_.feats; }
    std::size_t table_size() const { return std::size_t(1) << cfg_.log2_table; }
    int resolution(int level) const { return resolutions_[level]; }

    double& table(int level, std::size_t slot, int f) {
        return tables_[(std::size_t(level) * table_size() + slot) * cfg_.feats + f];
    }
    double table(int level, std::size_t slot, int f) const {
        return tables_[(std::size_t(level) * table_size() + slot) * cfg_.feats + f];
    }
    std::vector<double>& raw_tables() { return tables_; }
    const std::vector<double>& raw_tables() const { return tables_; }

    // Integer cell tuple -> slot via the prime-multiply-xor spatial hash.
    std::size_t hash_index(std::int64_t x, std::int64_t y, std::int64_t z) const;

    struct EncodeContext {
        // Per level: 8 corner slots and trilinear weights.
        std::vector<std::array<std::size_t, 8>> slots;
        std::vector<std::array<double, 8>> weights;
    };

    // Trilinear interpolation of the per-level features at a unit direction.
    std::vector<double> encode(const Vec3& dir, EncodeContext* ctx = nullptr) const;

    // Interpolation at an arbitrary point of the bounding box, no unit check.
    std::vector<double> encode_at(const Vec3& point, EncodeContext* ctx = nullptr) const;

    // Scatters dL/dfeatures back onto the touched table slots.
    // Gradient list entries: (level, slot, per-feature gradient).
    struct TableGrad {
        int level;
        std::size_t slot;
        std::vector<double> grad;
    };
    std::vector<TableGrad> encode_backward(const EncodeContext& ctx,
                                           const std::vector<double>& dL_dfeatures) const;

  private:
    DirHashGridConfig cfg_;
    std::vector<int> resolutions_;
    std::vector<double> tables_;
};

// [feature embedding || direction encoding] -> rgb in (0,1). Two ReLU hidden
// layers of 64, sigmoid output.
class ColorMlp {
  public:
    ColorMlp() = default;
    ColorMlp(int input_dim, uint64_t seed, int hidden = 64);

    int input_dim() const { return dims_.front(); }
    const std::vector<int>& dims() const { return dims_; }
    std::vector<double>& weights(int layer) { return weights_[layer]; }
    const std::vector<double>& weights(int layer) const { return weights_[layer]; }
    std::vector<double>& biases(int layer) { return biases_[layer]; }
    const std::vector<double>& biases(int layer) const { return biases_[layer]; }

    struct Context {
        std::vector<std::vector<double>> activations;  // input + post-activation per layer
        std::vector<std::vector<double>> preacts;
    };

    Vec3 forward(const std::vector<double>& input, Context* ctx = nullptr) const;

    struct Grads {
        std::vector<std::vector<double>> weights;
        std::vector<std::vector<double>> biases;

        void resize_like(const ColorMlp& mlp);
        void accumulate(const Grads& other);
    };

    // Backward from dL/drgb; accumulates weight/bias grads, returns dL/dinput.
    std::vector<double> backward(const Context& ctx, const Vec3& dL_drgb, Grads& grads) const;

  private:
    std::vector<int> dims_;  // [in, hidden, hidden, 3]
    std::vector<std::vector<double>> weights_;  // row-major out x in
    std::vector<std::vector<double>> biases_;
};

// (position - camera_center) normalized. Throws on coincident points.
Vec3 view_direction(const Vec3& gaussian_position, const Vec3& camera_center);

// dir + isotropic Gaussian noise, renormalized. noise_std = 0 is the identity.
Vec3 perturb_direction(const Vec3& dir, double noise_std, Rng& rng);

}  // namespace splat
