#pragma once

#include <map>
#include <string>
#include <vector>

#include "stzero/rng.hpp"
#include "stzero/tensor.hpp"

namespace stzero {

enum class GeneSplit { Seen, Unseen };

// One gene's description as a token-embedding matrix of shape L x D_T, plus
// its train/test split tag.
struct GeneDescription {
  std::string gene;
  Tensor tokens;
  GeneSplit split = GeneSplit::Seen;

  std::size_t length() const { return tokens.rows(); }
};

// Pre-norm residual transformer block: x + attn(norm1(x)) followed by
// x + ffn(norm2(x)), with ReLU inside the feedforward.
struct TransformerBlockParams {
  Tensor norm1_gain, norm1_bias;
  Tensor w_query, w_key, w_value, w_out;
  Tensor norm2_gain, norm2_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

// Description encoder: token projection into D_E, a learned classification
// token prepended at row 0, learned positional embeddings, M transformer
// blocks, and a final projection of the classification row into the shared
// D-dimensional space. in/out projections carry no bias.
struct EmbedderParams {
  Tensor in_proj;   // D_T x D_E
  Tensor cls;       // 1 x D_E
  Tensor pos_emb;   // (L_max + 1) x D_E
  std::vector<TransformerBlockParams> blocks;
  Tensor out_proj;  // D_E x D
  int heads = 4;

  std::size_t d_t() const { return in_proj.rows(); }
  std::size_t d_e() const { return in_proj.cols(); }
  std::size_t d() const { return out_proj.cols(); }
  std::size_t l_max() const { return pos_emb.rows() - 1; }
};

// Weight matrices uniform in +-sqrt(1/fan_in); norm gains 1, biases and
// positional embeddings 0.
EmbedderParams make_embedder_params(std::size_t d_t, std::size_t d_e, std::size_t d_out,
                                    std::size_t n_blocks, int heads, std::size_t l_max,
                                    Rng& rng);

Tensor attention_block(Tape& tape, const Tensor& x, const TransformerBlockParams& block,
                       int heads);

// Maps one description to its 1 x D projection vector; differentiable with
// respect to every parameter.
Tensor embed_gene(Tape& tape, const GeneDescription& desc, const EmbedderParams& p);

// Per-gene embedding on private tapes; order-independent result.
std::map<std::string, Tensor> embed_all(const std::vector<GeneDescription>& descs,
                                        const EmbedderParams& p);

}  // namespace stzero
