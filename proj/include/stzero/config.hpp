#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "stzero/errors.hpp"

namespace stzero {

// Training hyperparameters. CLI flags mirror the field names in kebab-case.
struct TrainConfig {
  int k_pos = 5;
  int k_fea = 5;
  std::string fea_metric = "cosine";
  int sage_layers = 4;
  int hidden = 512;
  int proj_dim = 256;
  int emb_blocks = 2;
  int emb_dim = 256;
  int heads = 4;
  double lr = 5e-4;
  double weight_decay = 1e-4;
  int epochs = 100;
  int genes_per_step = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// STZERO_SEED, when set, takes precedence over the command-line seed.
std::uint64_t resolve_seed(std::uint64_t cli_seed);

}  // namespace stzero
