#pragma once

#include <utility>
#include <vector>

#include "stzero/config.hpp"
#include "stzero/data_io.hpp"
#include "stzero/embedder.hpp"
#include "stzero/sage.hpp"

namespace stzero {

// All trainable tensors: the feature-refiner stack plus the description
// encoder. The named() manifest order is fixed and defines both checkpoint
// layout and initialization order.
struct ModelParams {
  SageStack sage;
  EmbedderParams embedder;

  std::vector<std::pair<std::string, Tensor>> named() const;
  void zero_grad();
};

struct DatasetDims {
  std::size_t d_e = 0;
  std::size_t d_t = 0;
  std::size_t l_max = 0;
};

DatasetDims dims_of(const Dataset& ds);

// Seeded initialization; every parameter value is float32-representable.
ModelParams init_model(const TrainConfig& cfg, const DatasetDims& dims, std::uint64_t seed);

// Reassembles params from a checkpoint tensor list; the manifest must match
// the config-implied shapes exactly.
ModelParams model_from_checkpoint(const Checkpoint& ckpt, const DatasetDims& dims);

Checkpoint make_checkpoint(const ModelParams& params, const TrainConfig& cfg,
                           std::uint64_t seed);

}  // namespace stzero
