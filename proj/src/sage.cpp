#include "stzero/sage.hpp"

#include <cmath>

namespace stzero {

SageStack make_sage_stack(std::size_t d_e, std::size_t hidden, std::size_t d_out,
                          std::size_t n_layers, Rng& rng) {
  if (n_layers == 0) throw ConfigError("make_sage_stack: need at least one layer");
  if (d_e == 0 || hidden == 0 || d_out == 0)
    throw ConfigError("make_sage_stack: widths must be positive");
  SageStack stack;
  stack.d_e = d_e;
  stack.d = d_out;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t in = l == 0 ? d_e : hidden;
    const std::size_t out = l + 1 == n_layers ? d_out : hidden;
    SageLayer layer;
    layer.weight = Tensor::zeros(3 * in, out, true);
    const double bound = std::sqrt(1.0 / static_cast<double>(3 * in));
    for (double& w : layer.weight.values()) w = rng.uniform(-bound, bound);
    layer.activation = l + 1 == n_layers ? Activation::None : Activation::Relu;
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

Tensor sage_layer_forward(Tape& tape, const Tensor& h, const SlideGraph& g,
                          const SageLayer& layer) {
  if (g.n_nodes != h.rows())
    throw DimensionError("sage_layer_forward: graph has " + std::to_string(g.n_nodes) +
                         " nodes but features are " + shape_str(h));
  if (3 * h.cols() != layer.weight.rows())
    throw DimensionError("sage_layer_forward: features " + shape_str(h) +
                         " do not match weight " + shape_str(layer.weight));
  Tensor pos_mean = tape.neighbor_mean(h, g.pos_neighbors);
  Tensor fea_mean = tape.neighbor_mean(h, g.fea_neighbors);
  Tensor cat = tape.concat_cols({h, pos_mean, fea_mean});
  Tensor out = tape.matmul(cat, layer.weight);
  if (layer.activation == Activation::Relu) out = tape.relu(out);
  return out;
}

Tensor sage_forward(Tape& tape, const Tensor& h, const SlideGraph& g, const SageStack& stack) {
  if (stack.layers.empty()) throw ContractError("sage_forward: empty stack");
  Tensor x = h;
  for (const SageLayer& layer : stack.layers) x = sage_layer_forward(tape, x, g, layer);
  return x;
}

}  // namespace stzero
