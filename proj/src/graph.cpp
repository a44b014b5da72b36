#include "stzero/graph.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace stzero {

Metric metric_from_string(const std::string& name) {
  if (name == "euclidean") return Metric::Euclidean;
  if (name == "cosine") return Metric::Cosine;
  throw ConfigError("unknown metric '" + name + "' (expected euclidean or cosine)");
}

std::string metric_name(Metric m) {
  return m == Metric::Euclidean ? "euclidean" : "cosine";
}

namespace {

// Squared euclidean distance; monotone in the true distance, so ordering and
// exact ties are preserved without the square root.
double sq_euclidean(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

// 1 - cosine similarity; a zero-norm vector is treated as dissimilar to
// everything (similarity 0).
double cosine_distance(const double* a, const double* b, std::size_t d) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::vector<std::vector<int>> knn_brute(const Tensor& points, int k, Metric metric) {
  if (points.rows() < 1 || points.cols() < 1)
    throw ContractError("knn_brute: need at least one point with one coordinate");
  if (k < 0) throw ContractError("knn_brute: k must be non-negative");
  if (!all_finite(points)) throw DataError("knn_brute: non-finite coordinates");

  const std::size_t n = points.rows(), d = points.cols();
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n - 1);
  std::vector<std::vector<int>> result(n);
  if (kk == 0) return result;

  std::vector<std::pair<double, int>> cand;
  cand.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    const double* pi = points.values().data() + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* pj = points.values().data() + j * d;
      const double dist = metric == Metric::Euclidean ? sq_euclidean(pi, pj, d)
                                                      : cosine_distance(pi, pj, d);
      cand.emplace_back(dist, static_cast<int>(j));
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk),
                      cand.end());
    auto& list = result[i];
    list.reserve(kk);
    for (std::size_t t = 0; t < kk; ++t) list.push_back(cand[t].second);
  }
  return result;
}

SlideGraph build_slide_graph(const Tensor& positions, const Tensor& features, int k_pos,
                             int k_fea, Metric fea_metric) {
  if (positions.rows() == 0) throw DataError("build_slide_graph: empty slide");
  if (positions.cols() != 2)
    throw DimensionError("build_slide_graph: positions must be Nx2, got " +
                         shape_str(positions));
  if (positions.rows() != features.rows())
    throw DimensionError("build_slide_graph: positions " + shape_str(positions) +
                         " and features " + shape_str(features) + " disagree on N");
  if (k_pos < 0 || k_fea < 0) throw ConfigError("build_slide_graph: k must be non-negative");

  SlideGraph g;
  g.n_nodes = positions.rows();
  g.k_pos = k_pos;
  g.k_fea = k_fea;
  if (g.n_nodes == 1) {
    g.pos_neighbors.assign(1, {});
    g.fea_neighbors.assign(1, {});
    return g;
  }
  g.pos_neighbors = knn_brute(positions, k_pos, Metric::Euclidean);
  g.fea_neighbors = knn_brute(features, k_fea, fea_metric);
  return g;
}

GraphStats graph_stats(const SlideGraph& g) {
  GraphStats s;
  s.n_nodes = g.n_nodes;
  s.k_pos = g.k_pos;
  s.k_fea = g.k_fea;
  std::vector<std::size_t> pos_in(g.n_nodes, 0), fea_in(g.n_nodes, 0);
  for (const auto& list : g.pos_neighbors) {
    s.pos_edges += list.size();
    for (int j : list) pos_in[static_cast<std::size_t>(j)]++;
  }
  for (const auto& list : g.fea_neighbors) {
    s.fea_edges += list.size();
    for (int j : list) fea_in[static_cast<std::size_t>(j)]++;
  }
  for (std::size_t i = 0; i < g.n_nodes; ++i) {
    const auto& pl = g.pos_neighbors[i];
    for (int j : g.fea_neighbors[i]) {
      if (std::find(pl.begin(), pl.end(), j) != pl.end()) s.overlap++;
    }
  }
  auto histogram = [](const std::vector<std::size_t>& degrees) {
    std::size_t max_deg = 0;
    for (std::size_t d : degrees) max_deg = std::max(max_deg, d);
    std::vector<std::size_t> hist(max_deg + 1, 0);
    for (std::size_t d : degrees) hist[d]++;
    return hist;
  };
  s.pos_in_degree_hist = histogram(pos_in);
  s.fea_in_degree_hist = histogram(fea_in);
  return s;
}

std::string graph_stats_json(const GraphStats& s) {
  nlohmann::json j;
  j["n_nodes"] = s.n_nodes;
  j["k_pos"] = s.k_pos;
  j["k_fea"] = s.k_fea;
  j["pos_edges"] = s.pos_edges;
  j["fea_edges"] = s.fea_edges;
  j["overlap"] = s.overlap;
  j["pos_in_degree_hist"] = s.pos_in_degree_hist;
  j["fea_in_degree_hist"] = s.fea_in_degree_hist;
  return j.dump();
}

}  // namespace stzero
