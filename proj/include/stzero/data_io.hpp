#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stzero/embedder.hpp"
#include "stzero/tensor.hpp"

namespace stzero {

enum class SplitSel { Seen, Unseen, All };

SplitSel split_from_string(const std::string& name);

// One slide: window positions (N x 2), extracted window features (N x D_e),
// and ground-truth expression (N x G) with one column per dataset gene.
struct SlideWindows {
  std::string slide_id;
  Tensor positions;
  Tensor features;
  Tensor expression;

  std::size_t n() const { return positions.rows(); }
};

// In-memory dataset. Gene order defines the expression-matrix columns; the
// seen/unseen lists partition the gene set.
struct Dataset {
  std::vector<SlideWindows> slides;
  std::vector<GeneDescription> genes;
  std::size_t d_e = 0;
  std::size_t d_t = 0;
  std::size_t l_max = 0;
  std::vector<std::string> seen;
  std::vector<std::string> unseen;

  std::vector<std::size_t> gene_indices(SplitSel sel) const;
  std::size_t gene_index(const std::string& name) const;       // LookupError if absent
  const SlideWindows& slide(const std::string& slide_id) const;  // LookupError if absent
};

// Directory layout:
//   meta.json
//   slides/<id>/positions.f32 features.f32 expression.f32
//   genes/<name>/desc.f32
// Payloads are headerless little-endian float32, row-major; meta.json declares
// every shape. Loading validates everything before returning.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

// Planted-model synthetic generator. Latent gene vectors u_c and smooth
// latent window states s_i produce expression y = s.u + noise, observed
// features h = s*A + noise, and description tokens that repeat u_c*B with
// per-token noise, so descriptions genuinely determine the gene identity and
// zero-shot recovery is possible. Fully determined by the seed.
struct SynthConfig {
  int n_slides = 2;
  int windows_per_slide = 100;
  int n_genes = 20;
  int n_seen = 15;
  int d_e = 16;
  int d_t = 8;
  int desc_len = 6;
  int d_latent = 4;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Generator internals, exposed for verification.
struct SynthLatents {
  Tensor gene_latents;                 // G x D_latent (u)
  std::vector<Tensor> window_latents;  // per slide, N x D_latent (s)
  Tensor feature_map;                  // D_latent x D_e (A)
  Tensor token_map;                    // D_latent x D_T (B)
};

Dataset synth_dataset(const SynthConfig& cfg, SynthLatents* latents_out = nullptr);

// Checkpoint: ordered named tensors + config + seed in one file. Tensor
// payloads are float32; save-load-save is byte-identical.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> tensors;
  nlohmann::json config;
  std::uint64_t seed = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stzero
