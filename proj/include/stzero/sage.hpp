#pragma once

#include <vector>

#include "stzero/graph.hpp"
#include "stzero/rng.hpp"
#include "stzero/tensor.hpp"

namespace stzero {

enum class Activation { Relu, None };

// One refinement layer: each node's own feature is concatenated with the
// mean over its positional neighbors and the mean over its feature-similarity
// neighbors, then mapped by a single weight matrix of shape (3*d_in) x d_out.
// No bias term.
struct SageLayer {
  Tensor weight;
  Activation activation = Activation::None;

  std::size_t d_in() const { return weight.rows() / 3; }
  std::size_t d_out() const { return weight.cols(); }
};

// Stack of refinement layers: d_e -> hidden -> ... -> d (ReLU between layers,
// none after the last).
struct SageStack {
  std::vector<SageLayer> layers;
  std::size_t d_e = 0;
  std::size_t d = 0;
};

// Uniform init in +-sqrt(1/fan_in) with fan_in = 3*d_in, seeded by `rng`.
SageStack make_sage_stack(std::size_t d_e, std::size_t hidden, std::size_t d_out,
                          std::size_t n_layers, Rng& rng);

Tensor sage_layer_forward(Tape& tape, const Tensor& h, const SlideGraph& g,
                          const SageLayer& layer);

Tensor sage_forward(Tape& tape, const Tensor& h, const SlideGraph& g, const SageStack& stack);

}  // namespace stzero
