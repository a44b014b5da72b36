#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stzero/tensor.hpp"

namespace stzero {

// Published zero-shot reference scores on the STNet benchmark, kept for
// orientation when reading desk-scale results.
inline constexpr double kStnetZeroShotMse = 11.86e-2;
inline constexpr double kStnetZeroShotMae = 2.88e-1;
inline constexpr double kStnetZeroShotPccM = 2.69e-1;

// Evaluation summary. Per-gene Pearson correlations cover the genes whose
// ground-truth column has nonzero variance; the rest are listed in
// degenerate_genes and excluded from the aggregates. Aggregates are absent
// when every gene is degenerate.
struct EvalReport {
  double mse = 0.0;
  double mae = 0.0;
  std::map<std::string, double> pcc_per_gene;
  std::optional<double> pcc_f;  // first quartile
  std::optional<double> pcc_s;  // median
  std::optional<double> pcc_m;  // mean
  std::size_t n_windows = 0;
  std::size_t n_genes = 0;
  std::vector<std::string> degenerate_genes;
};

// Scores predictions against ground truth over one slide's windows.
// Quartile and median use linear interpolation between order statistics at
// position q*(n-1).
EvalReport evaluate(const Tensor& y_hat, const Tensor& y,
                    const std::vector<std::string>& gene_names);

// Pools per-slide reports: squared/absolute errors weighted by entry count,
// per-gene correlations averaged across the slides where the gene is
// non-degenerate, aggregates recomputed from the averaged values.
EvalReport aggregate_reports(const std::vector<EvalReport>& per_slide);

// JSON with fixed key names (mse, mae, pcc_f, pcc_s, pcc_m, degenerate_genes,
// n_windows, n_genes, pcc_per_gene); absent aggregates serialize as null.
std::string report_to_json(const EvalReport& report, int indent = -1);

}  // namespace stzero
