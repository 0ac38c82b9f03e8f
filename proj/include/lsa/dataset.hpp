#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lsa/forensics.hpp"
#include "lsa/generator.hpp"
#include "lsa/losses.hpp"
#include "lsa/tensor.hpp"

namespace lsa {

// Parameters of the procedural face renderer. Everything is smooth in pixel
// space so the rendered set has stable, learnable statistics.
struct FaceParams {
    double bg_shade = 0.7;
    double skin_r = 0.85, skin_g = 0.65, skin_b = 0.5;
    double face_rx = 0.32, face_ry = 0.38;
    double eye_size = 0.045;
    double eye_sep = 0.16;
    double mouth_curve = 0.2;  // positive = smile
    double hair_shade = 0.4;   // 0 = none, 1 = black
};

// spread < 1 narrows every parameter range toward its midpoint; attack
// campaigns draw reference faces from the central region (spread 0.6).
FaceParams sample_face_params(Rng& rng, double spread = 1.0);
Tensor render_face(const FaceParams& p, std::size_t size = 32);

// Desk generator anchored on the mean rendered face, so random samples are
// face-like with latent-driven deviations (the analog of a generator trained
// on a face dataset).
Generator make_desk_generator(const GeneratorConfig& cfg, std::uint64_t seed);

// "Real" images come from the renderer, "synthetic" ones from the generator.
LabeledDataset make_desk_dataset(const Generator& gen, std::size_t n_real, std::size_t n_fake,
                                 std::uint64_t seed);

// Directory I/O: <dir>/real/*.png and <dir>/fake/*.png.
void save_dataset(const std::string& dir, const LabeledDataset& data);
LabeledDataset load_dataset(const std::string& dir);

// Fixed linear probe over pixels scoring interpretable attributes
// (brightness, red/blue tint, hair darkness, contrast, lighting side). The
// embedding carries one extra constant coordinate that bounds the normalized
// embedding's gradient; prompt targets are zero there.
class AttributeProbe {
  public:
    static AttributeProbe standard(std::size_t size = 32, double bias = 4.0);

    std::size_t dim() const { return probe_.shape[0]; }          // attribute count
    std::size_t embedding_dim() const { return dim() + 1; }      // with bias coordinate
    const std::vector<std::string>& names() const { return names_; }

    Var embed_raw(Tape& tape, Var img) const;      // un-normalized scores + bias
    Var embed_unit(Tape& tape, Var img) const;     // L2-normalized
    Tensor embed_unit(const Tensor& img) const;

  private:
    Tensor probe_;  // [E, size*size*3]
    std::vector<std::string> names_;
    std::size_t size_ = 0;
    double bias_ = 1.0;
};

// Prompt keys resolved to unit-norm attribute target vectors. This is the
// desk-scale text side of the joint embedder; a full-scale text encoder plugs
// in through the same JointEmbedder interface.
class PromptBook {
  public:
    static PromptBook builtin(const AttributeProbe& probe);
    static PromptBook load(const std::string& path, const AttributeProbe& probe);
    void save(const std::string& path) const;

    bool contains(const std::string& key) const { return targets_.count(key) > 0; }
    Tensor target(const std::string& key) const;  // unit-norm; throws on unknown key
    std::vector<std::string> keys() const;

  private:
    std::map<std::string, Tensor> targets_;
};

// Assembles the desk-scale joint embedder from a probe and a prompt book.
JointEmbedder attribute_embedder(const AttributeProbe& probe, const PromptBook& prompts);

}  // namespace lsa
