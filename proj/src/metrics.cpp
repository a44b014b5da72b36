#include "stzero/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace stzero {

namespace {

// Linear interpolation between order statistics at position q*(n-1);
// `sorted` must be ascending and nonempty.
double quantile_linear(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted.front();
  const double pos = q * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= n) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

void fill_aggregates(EvalReport& report) {
  if (report.pcc_per_gene.empty()) {
    report.pcc_f.reset();
    report.pcc_s.reset();
    report.pcc_m.reset();
    return;
  }
  std::vector<double> values;
  values.reserve(report.pcc_per_gene.size());
  double sum = 0.0;
  for (const auto& [gene, r] : report.pcc_per_gene) {
    values.push_back(r);
    sum += r;
  }
  std::sort(values.begin(), values.end());
  report.pcc_f = quantile_linear(values, 0.25);
  report.pcc_s = quantile_linear(values, 0.5);
  report.pcc_m = sum / static_cast<double>(values.size());
}

}  // namespace

EvalReport evaluate(const Tensor& y_hat, const Tensor& y,
                    const std::vector<std::string>& gene_names) {
  if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols())
    throw DimensionError("evaluate: shape mismatch " + shape_str(y_hat) + " vs " +
                         shape_str(y));
  if (y.cols() != gene_names.size())
    throw DimensionError("evaluate: " + std::to_string(gene_names.size()) +
                         " gene names for " + std::to_string(y.cols()) + " columns");
  const std::size_t n = y.rows(), g = y.cols();
  if (n < 2) throw ContractError("evaluate: need at least two windows, got " + shape_str(y));

  EvalReport report;
  report.n_windows = n;
  report.n_genes = g;

  double sq_sum = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y_hat.values()[i] - y.values()[i];
    sq_sum += d * d;
    abs_sum += std::abs(d);
  }
  report.mse = sq_sum / static_cast<double>(y.size());
  report.mae = abs_sum / static_cast<double>(y.size());

  for (std::size_t c = 0; c < g; ++c) {
    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean_x += y_hat.values()[i * g + c];
      mean_y += y.values()[i * g + c];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = y_hat.values()[i * g + c] - mean_x;
      const double dy = y.values()[i * g + c] - mean_y;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
    if (syy == 0.0) {
      report.degenerate_genes.push_back(gene_names[c]);
      continue;
    }
    double r = sxx == 0.0 ? 0.0 : sxy / (std::sqrt(sxx) * std::sqrt(syy));
    r = std::clamp(r, -1.0, 1.0);
    report.pcc_per_gene.emplace(gene_names[c], r);
  }
  fill_aggregates(report);
  return report;
}

EvalReport aggregate_reports(const std::vector<EvalReport>& per_slide) {
  if (per_slide.empty()) throw ContractError("aggregate_reports: empty input");
  if (per_slide.size() == 1) return per_slide.front();

  // All reports must describe the same gene set.
  auto gene_set = [](const EvalReport& r) {
    std::vector<std::string> names;
    for (const auto& [gene, v] : r.pcc_per_gene) names.push_back(gene);
    names.insert(names.end(), r.degenerate_genes.begin(), r.degenerate_genes.end());
    std::sort(names.begin(), names.end());
    return names;
  };
  const std::vector<std::string> reference = gene_set(per_slide.front());
  for (const EvalReport& r : per_slide) {
    if (gene_set(r) != reference)
      throw DataError("aggregate_reports: inconsistent gene sets across slides");
  }

  EvalReport out;
  out.n_genes = per_slide.front().n_genes;
  double weight_sum = 0.0, mse_acc = 0.0, mae_acc = 0.0;
  std::map<std::string, std::pair<double, std::size_t>> pcc_acc;
  for (const EvalReport& r : per_slide) {
    const double w = static_cast<double>(r.n_windows * r.n_genes);
    weight_sum += w;
    mse_acc += w * r.mse;
    mae_acc += w * r.mae;
    out.n_windows += r.n_windows;
    for (const auto& [gene, v] : r.pcc_per_gene) {
      auto& acc = pcc_acc[gene];
      acc.first += v;
      acc.second += 1;
    }
  }
  out.mse = mse_acc / weight_sum;
  out.mae = mae_acc / weight_sum;
  for (const std::string& gene : reference) {
    auto it = pcc_acc.find(gene);
    if (it == pcc_acc.end()) {
      out.degenerate_genes.push_back(gene);
    } else {
      out.pcc_per_gene.emplace(gene, it->second.first /
                                         static_cast<double>(it->second.second));
    }
  }
  fill_aggregates(out);
  return out;
}

std::string report_to_json(const EvalReport& report, int indent) {
  nlohmann::json j;
  j["mse"] = report.mse;
  j["mae"] = report.mae;
  j["pcc_f"] = report.pcc_f ? nlohmann::json(*report.pcc_f) : nlohmann::json(nullptr);
  j["pcc_s"] = report.pcc_s ? nlohmann::json(*report.pcc_s) : nlohmann::json(nullptr);
  j["pcc_m"] = report.pcc_m ? nlohmann::json(*report.pcc_m) : nlohmann::json(nullptr);
  j["n_windows"] = report.n_windows;
  j["n_genes"] = report.n_genes;
  j["degenerate_genes"] = report.degenerate_genes;
  j["pcc_per_gene"] = report.pcc_per_gene;
  return j.dump(indent);
}

}  // namespace stzero
