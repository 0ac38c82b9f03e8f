#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lsa/autodiff.hpp"
#include "lsa/rng.hpp"
#include "lsa/tensor.hpp"

namespace lsa {

// Per-layer style vectors in the extended latent space: one D-dim row per
// synthesis layer.
struct LatentCode {
    Tensor rows;  // [L, D]
    std::size_t layer_count() const { return rows.rank() == 2 ? rows.shape[0] : 0; }
    std::size_t style_dim() const { return rows.rank() == 2 ? rows.shape[1] : 0; }
};

// Per-layer stochastic inputs, one spatial tensor per synthesis layer.
struct NoiseStack {
    std::vector<Tensor> tensors;  // each [h, w]
};

enum class LayerGroupKind { coarse, middle, fine, all };

LayerGroupKind layer_group_from_string(const std::string& s);
std::string to_string(LayerGroupKind kind);

// 1-based inclusive row range of the latent matrix.
struct LayerRows {
    std::size_t lo = 1;
    std::size_t hi = 1;
    bool contains(std::size_t row1) const { return row1 >= lo && row1 <= hi; }
    std::size_t count() const { return hi - lo + 1; }
};

// For the 18-layer config: coarse 1-4, middle 5-8, fine 9-18. Other layer
// counts use a proportional split with the same 4/4/10 ratio. Throws
// std::invalid_argument when the requested group would be empty.
LayerRows layer_rows(LayerGroupKind kind, std::size_t layer_count);

struct GeneratorConfig {
    std::size_t layer_count = 8;
    std::size_t style_dim = 64;
    std::size_t image_size = 32;  // output is image_size x image_size x 3
};

// Desk-scale style-based generator: a mapping MLP z -> style vector, and a
// synthesis stack of style-modulated 1x1 channel-mixing layers on spatial
// feature maps with nearest-neighbor upsampling and per-layer noise
// injection. Deterministic and differentiable with respect to the latent
// matrix and the noise stack. Immutable after construction.
class Generator {
  public:
    struct Layer {
        Tensor style_w;      // [c_in, D]
        Tensor style_b;      // [c_in]
        Tensor conv_w;       // [c_out, c_in]
        Tensor conv_b;       // [c_out]
        Tensor noise_scale;  // [c_out]
        std::size_t height = 0, width = 0;  // resolution at this layer
        bool upsample = false;              // 2x nearest upsample before modulation
    };
    struct Weights {
        Tensor map_w1, map_b1, map_w2, map_b2;  // mapping MLP D->D->D
        Tensor const_input;                     // [c0, 4*4]
        std::vector<Layer> layers;
        Tensor rgb_w, rgb_b;                    // [3, c_last], per-pixel bias [3, H*W]
        double rgb_gain = 1.0;
    };

    // output_prior, when given, is an [H,W,3] image whose logit becomes the
    // per-pixel output bias, anchoring the generator's range around it.
    static Generator random(const GeneratorConfig& cfg, std::uint64_t seed,
                            const Tensor* output_prior = nullptr);
    static Generator load(const std::string& path);
    void save(const std::string& path) const;

    std::size_t layer_count() const { return cfg_.layer_count; }
    std::size_t style_dim() const { return cfg_.style_dim; }
    std::array<std::size_t, 3> image_shape() const { return {cfg_.image_size, cfg_.image_size, 3}; }
    const GeneratorConfig& config() const { return cfg_; }
    std::vector<std::array<std::size_t, 2>> noise_shapes() const;

    Tensor map_latent(const Tensor& z) const;
    Var map_latent(Tape& tape, Var z) const;

    Tensor synthesize(const LatentCode& w, const NoiseStack& noise) const;
    Var synthesize(Tape& tape, Var w, const std::vector<Var>& noise) const;

    // z ~ N(0, I), broadcast-mapped latent plus standard-normal noise stack.
    std::pair<LatentCode, NoiseStack> sample_initial(std::uint64_t seed) const;
    NoiseStack sample_noise(Rng& rng) const;

    const Weights& weights() const { return w_; }

  private:
    Generator(GeneratorConfig cfg, Weights w);
    void build_index();
    void validate_latent(const LatentCode& w) const;
    void validate_noise(const NoiseStack& noise) const;

    GeneratorConfig cfg_;
    Weights w_;
    std::shared_ptr<std::vector<std::size_t>> hwc_index_;  // [3,HW] -> [H,W,3]
};

LatentCode broadcast_to_wplus(const Tensor& w_m, std::size_t layer_count);

}  // namespace lsa
