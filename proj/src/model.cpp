#include "stzero/model.hpp"

namespace stzero {

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < sage.layers.size(); ++l)
    out.emplace_back("sage.layer" + std::to_string(l) + ".weight", sage.layers[l].weight);
  out.emplace_back("embed.in_proj", embedder.in_proj);
  out.emplace_back("embed.cls", embedder.cls);
  out.emplace_back("embed.pos_emb", embedder.pos_emb);
  for (std::size_t b = 0; b < embedder.blocks.size(); ++b) {
    const std::string prefix = "embed.block" + std::to_string(b) + ".";
    const TransformerBlockParams& blk = embedder.blocks[b];
    out.emplace_back(prefix + "norm1.gain", blk.norm1_gain);
    out.emplace_back(prefix + "norm1.bias", blk.norm1_bias);
    out.emplace_back(prefix + "w_query", blk.w_query);
    out.emplace_back(prefix + "w_key", blk.w_key);
    out.emplace_back(prefix + "w_value", blk.w_value);
    out.emplace_back(prefix + "w_out", blk.w_out);
    out.emplace_back(prefix + "norm2.gain", blk.norm2_gain);
    out.emplace_back(prefix + "norm2.bias", blk.norm2_bias);
    out.emplace_back(prefix + "ffn.w1", blk.ffn_w1);
    out.emplace_back(prefix + "ffn.b1", blk.ffn_b1);
    out.emplace_back(prefix + "ffn.w2", blk.ffn_w2);
    out.emplace_back(prefix + "ffn.b2", blk.ffn_b2);
  }
  out.emplace_back("embed.out_proj", embedder.out_proj);
  return out;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : named()) const_cast<Tensor&>(t).zero_grad();
}

DatasetDims dims_of(const Dataset& ds) { return {ds.d_e, ds.d_t, ds.l_max}; }

ModelParams init_model(const TrainConfig& cfg, const DatasetDims& dims, std::uint64_t seed) {
  cfg.validate();
  if (dims.d_e == 0 || dims.d_t == 0 || dims.l_max == 0)
    throw ConfigError("init_model: dataset dimensions must be positive");
  Rng rng(Rng::derive(seed, 0));
  ModelParams params;
  params.sage = make_sage_stack(dims.d_e, static_cast<std::size_t>(cfg.hidden),
                                static_cast<std::size_t>(cfg.proj_dim),
                                static_cast<std::size_t>(cfg.sage_layers), rng);
  params.embedder = make_embedder_params(
      dims.d_t, static_cast<std::size_t>(cfg.emb_dim),
      static_cast<std::size_t>(cfg.proj_dim), static_cast<std::size_t>(cfg.emb_blocks),
      cfg.heads, dims.l_max, rng);
  for (auto& [name, t] : params.named()) quantize_to_float32(const_cast<Tensor&>(t));
  return params;
}

ModelParams model_from_checkpoint(const Checkpoint& ckpt, const DatasetDims& dims) {
  const TrainConfig cfg = train_config_from_json(ckpt.config);
  ModelParams params = init_model(cfg, dims, ckpt.seed);
  const auto named = params.named();
  if (named.size() != ckpt.tensors.size())
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                      " tensors but the config implies " + std::to_string(named.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [want_name, dst] = named[i];
    const auto& [got_name, src] = ckpt.tensors[i];
    if (want_name != got_name)
      throw ConfigError("checkpoint tensor '" + got_name + "' where '" + want_name +
                        "' was expected");
    if (src.rows() != dst.rows() || src.cols() != dst.cols())
      throw ConfigError("checkpoint tensor '" + got_name + "' has shape " + shape_str(src) +
                        ", expected " + shape_str(dst));
    const_cast<Tensor&>(dst).values() = src.values();
  }
  return params;
}

Checkpoint make_checkpoint(const ModelParams& params, const TrainConfig& cfg,
                           std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.seed = seed;
  ckpt.config = train_config_to_json(cfg);
  for (const auto& [name, t] : params.named()) {
    Tensor copy = Tensor::from_data(t.rows(), t.cols(), t.values());
    ckpt.tensors.emplace_back(name, std::move(copy));
  }
  return ckpt;
}

}  // namespace stzero
