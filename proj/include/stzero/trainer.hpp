#pragma once

#include <optional>
#include <ostream>

#include "stzero/metrics.hpp"
#include "stzero/model.hpp"
#include "stzero/predictor.hpp"

namespace stzero {

// Adam with decoupled weight decay. Moments are kept in double precision;
// updated parameters are clamped to float32-representable values so that
// checkpoints round-trip losslessly.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);

  void step(const std::vector<std::pair<std::string, Tensor>>& params);

 private:
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double seen_mse = 0.0;
  std::optional<double> seen_pcc_m;
};

struct TrainOutcome {
  ModelParams params;
  std::vector<EpochLog> log;
};

// One slide per step; per step a fresh sample of seen genes (without
// replacement) scores the slide's windows against those genes under the
// combined squared-error and correlation loss. Deterministic given
// (dataset, config, seed); never reads expression columns of unseen genes.
TrainOutcome train_model(const Dataset& ds, const TrainConfig& cfg,
                         std::ostream* log_stream = nullptr);

// Predictions for all windows of every slide over the selected gene split,
// scored per slide and pooled. Optional neighbor-count overrides rebuild the
// graphs without touching the trained weights.
EvalReport evaluate_split(const Dataset& ds, const ModelParams& params,
                          const TrainConfig& cfg, SplitSel split, int k_pos_override = -1,
                          int k_fea_override = -1);

struct PredictionRow {
  std::size_t window_index;
  double x;
  double y;
  double predicted;
};

std::vector<PredictionRow> predict_gene(const Dataset& ds, const ModelParams& params,
                                        const TrainConfig& cfg, const std::string& slide_id,
                                        const std::string& gene);

// Small synthetic end-to-end model whose every parameter gradient is checked
// against central finite differences.
struct MicroCheckConfig {
  int windows = 6;
  int d_e = 8;
  int hidden = 16;
  int proj_dim = 8;
  int emb_blocks = 1;
  int emb_dim = 8;
  int d_t = 8;
  int desc_len = 3;
  int heads = 4;
  int sage_layers = 4;
  int k_pos = 2;
  int k_fea = 2;
  int genes = 3;
  double step = 1e-6;
  double tol = 1e-4;
  std::uint64_t seed = 11;
};

GradCheckReport micro_grad_check(const MicroCheckConfig& cfg);

}  // namespace stzero
