#include "stzero/embedder.hpp"

#include <cmath>

namespace stzero {

namespace {

Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(rows, cols, true);
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

EmbedderParams make_embedder_params(std::size_t d_t, std::size_t d_e, std::size_t d_out,
                                    std::size_t n_blocks, int heads, std::size_t l_max,
                                    Rng& rng) {
  if (d_t == 0 || d_e == 0 || d_out == 0 || l_max == 0)
    throw ConfigError("make_embedder_params: dimensions must be positive");
  if (heads <= 0 || d_e % static_cast<std::size_t>(heads) != 0)
    throw ConfigError("make_embedder_params: heads must divide the embedding width");
  EmbedderParams p;
  p.heads = heads;
  p.in_proj = uniform_init(d_t, d_e, d_t, rng);
  p.cls = uniform_init(1, d_e, d_e, rng);
  p.pos_emb = Tensor::zeros(l_max + 1, d_e, true);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    TransformerBlockParams blk;
    blk.norm1_gain = Tensor::full(1, d_e, 1.0, true);
    blk.norm1_bias = Tensor::zeros(1, d_e, true);
    blk.w_query = uniform_init(d_e, d_e, d_e, rng);
    blk.w_key = uniform_init(d_e, d_e, d_e, rng);
    blk.w_value = uniform_init(d_e, d_e, d_e, rng);
    blk.w_out = uniform_init(d_e, d_e, d_e, rng);
    blk.norm2_gain = Tensor::full(1, d_e, 1.0, true);
    blk.norm2_bias = Tensor::zeros(1, d_e, true);
    blk.ffn_w1 = uniform_init(d_e, 4 * d_e, d_e, rng);
    blk.ffn_b1 = Tensor::zeros(1, 4 * d_e, true);
    blk.ffn_w2 = uniform_init(4 * d_e, d_e, 4 * d_e, rng);
    blk.ffn_b2 = Tensor::zeros(1, d_e, true);
    p.blocks.push_back(std::move(blk));
  }
  p.out_proj = uniform_init(d_e, d_out, d_e, rng);
  return p;
}

Tensor attention_block(Tape& tape, const Tensor& x, const TransformerBlockParams& block,
                       int heads) {
  const std::size_t d_e = x.cols();
  if (heads <= 0 || d_e % static_cast<std::size_t>(heads) != 0)
    throw ConfigError("attention_block: heads must divide the embedding width");
  const std::size_t d_head = d_e / static_cast<std::size_t>(heads);

  // Self-attention sub-block.
  Tensor normed = tape.layer_norm(x, block.norm1_gain, block.norm1_bias);
  Tensor q = tape.matmul(normed, block.w_query);
  Tensor k = tape.matmul(normed, block.w_key);
  Tensor v = tape.matmul(normed, block.w_value);
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(heads));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * d_head;
    Tensor qh = tape.slice_cols(q, c0, c0 + d_head);
    Tensor kh = tape.slice_cols(k, c0, c0 + d_head);
    Tensor vh = tape.slice_cols(v, c0, c0 + d_head);
    Tensor scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
    Tensor attn = tape.softmax_rows(scores);
    head_outputs.push_back(tape.matmul(attn, vh));
  }
  Tensor mixed = heads == 1 ? head_outputs.front() : tape.concat_cols(head_outputs);
  Tensor attended = tape.add(x, tape.matmul(mixed, block.w_out));

  // Feedforward sub-block.
  Tensor normed2 = tape.layer_norm(attended, block.norm2_gain, block.norm2_bias);
  Tensor hidden = tape.relu(tape.add_rowvec(tape.matmul(normed2, block.ffn_w1), block.ffn_b1));
  Tensor projected = tape.add_rowvec(tape.matmul(hidden, block.ffn_w2), block.ffn_b2);
  return tape.add(attended, projected);
}

Tensor embed_gene(Tape& tape, const GeneDescription& desc, const EmbedderParams& p) {
  const std::size_t len = desc.length();
  if (len < 1) throw DataError("embed_gene: empty description for gene '" + desc.gene + "'");
  if (len > p.l_max())
    throw CapacityError("embed_gene: description length " + std::to_string(len) +
                        " exceeds capacity " + std::to_string(p.l_max()) + " for gene '" +
                        desc.gene + "'");
  if (desc.tokens.cols() != p.d_t())
    throw DimensionError("embed_gene: tokens " + shape_str(desc.tokens) +
                         " do not match projection " + shape_str(p.in_proj));
  if (!all_finite(desc.tokens))
    throw DataError("embed_gene: non-finite token values for gene '" + desc.gene + "'");

  Tensor projected = tape.matmul(desc.tokens, p.in_proj);
  Tensor sequence = tape.concat_rows({p.cls, projected});
  sequence = tape.add(sequence, tape.slice_rows(p.pos_emb, 0, len + 1));
  for (const TransformerBlockParams& block : p.blocks)
    sequence = attention_block(tape, sequence, block, p.heads);
  Tensor cls_state = tape.slice_rows(sequence, 0, 1);
  return tape.matmul(cls_state, p.out_proj);
}

std::map<std::string, Tensor> embed_all(const std::vector<GeneDescription>& descs,
                                        const EmbedderParams& p) {
  std::map<std::string, Tensor> result;
  for (const GeneDescription& desc : descs) {
    if (result.count(desc.gene))
      throw DataError("embed_all: duplicate gene name '" + desc.gene + "'");
    Tape tape;
    result.emplace(desc.gene, embed_gene(tape, desc, p));
  }
  return result;
}

}  // namespace stzero
