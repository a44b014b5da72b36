#pragma once

#include <string>
#include <vector>

#include "stzero/tensor.hpp"

namespace stzero {

enum class Metric { Euclidean, Cosine };

Metric metric_from_string(const std::string& name);
std::string metric_name(Metric m);

// Directed neighbor lists over one slide's windows: for each node, its
// k nearest other nodes by spatial position and by feature similarity.
// Lists never contain the node itself and hold exactly min(k, n_nodes - 1)
// entries, sorted by (distance, index).
struct SlideGraph {
  std::size_t n_nodes = 0;
  int k_pos = 0;
  int k_fea = 0;
  std::vector<std::vector<int>> pos_neighbors;
  std::vector<std::vector<int>> fea_neighbors;
};

// Brute-force k-nearest-neighbor lists for each row of `points` (excluding
// the row itself), ties broken by lower index. Deterministic.
std::vector<std::vector<int>> knn_brute(const Tensor& points, int k, Metric metric);

SlideGraph build_slide_graph(const Tensor& positions, const Tensor& features, int k_pos,
                             int k_fea, Metric fea_metric);

struct GraphStats {
  std::size_t n_nodes = 0;
  int k_pos = 0;
  int k_fea = 0;
  std::size_t pos_edges = 0;
  std::size_t fea_edges = 0;
  std::size_t overlap = 0;  // directed edges present in both edge sets
  std::vector<std::size_t> pos_in_degree_hist;
  std::vector<std::size_t> fea_in_degree_hist;
};

GraphStats graph_stats(const SlideGraph& g);

// Flat JSON object (scalars and arrays only) with fixed key names.
std::string graph_stats_json(const GraphStats& s);

}  // namespace stzero
