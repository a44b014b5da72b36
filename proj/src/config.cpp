#include "stzero/config.hpp"

#include <cstdlib>

#include "stzero/graph.hpp"

namespace stzero {

void TrainConfig::validate() const {
  if (k_pos < 0 || k_fea < 0) throw ConfigError("config: neighbor counts must be non-negative");
  if (sage_layers < 1 || hidden < 1 || proj_dim < 1 || emb_dim < 1)
    throw ConfigError("config: layer counts and widths must be positive");
  if (emb_blocks < 0) throw ConfigError("config: emb_blocks must be non-negative");
  if (heads < 1 || emb_dim % heads != 0)
    throw ConfigError("config: heads must be positive and divide emb_dim");
  if (lr <= 0.0) throw ConfigError("config: lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be non-negative");
  if (epochs < 0) throw ConfigError("config: epochs must be non-negative");
  if (genes_per_step < 1) throw ConfigError("config: genes_per_step must be positive");
  metric_from_string(fea_metric);
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"k_pos", cfg.k_pos},
                        {"k_fea", cfg.k_fea},
                        {"fea_metric", cfg.fea_metric},
                        {"sage_layers", cfg.sage_layers},
                        {"hidden", cfg.hidden},
                        {"proj_dim", cfg.proj_dim},
                        {"emb_blocks", cfg.emb_blocks},
                        {"emb_dim", cfg.emb_dim},
                        {"heads", cfg.heads},
                        {"lr", cfg.lr},
                        {"weight_decay", cfg.weight_decay},
                        {"epochs", cfg.epochs},
                        {"genes_per_step", cfg.genes_per_step},
                        {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  try {
    cfg.k_pos = j.at("k_pos").get<int>();
    cfg.k_fea = j.at("k_fea").get<int>();
    cfg.fea_metric = j.at("fea_metric").get<std::string>();
    cfg.sage_layers = j.at("sage_layers").get<int>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.proj_dim = j.at("proj_dim").get<int>();
    cfg.emb_blocks = j.at("emb_blocks").get<int>();
    cfg.emb_dim = j.at("emb_dim").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.lr = j.at("lr").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.genes_per_step = j.at("genes_per_step").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::uint64_t resolve_seed(std::uint64_t cli_seed) {
  const char* env = std::getenv("STZERO_SEED");
  if (env == nullptr || *env == '\0') return cli_seed;
  char* end = nullptr;
  const unsigned long long parsed = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0')
    throw ConfigError(std::string("STZERO_SEED is not an unsigned integer: ") + env);
  return static_cast<std::uint64_t>(parsed);
}

}  // namespace stzero
