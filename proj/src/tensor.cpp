#include "stzero/tensor.hpp"

#include <atomic>
#include <cmath>
#include <limits>

namespace stzero {

namespace {

std::atomic<std::uint64_t> g_tape_counter{0};

std::shared_ptr<detail::TensorNode> make_node(std::size_t rows, std::size_t cols,
                                              bool requires_grad) {
  auto node = std::make_shared<detail::TensorNode>();
  node->rows = rows;
  node->cols = cols;
  node->value.assign(rows * cols, 0.0);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(rows * cols, 0.0);
  return node;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor(make_node(rows, cols, requires_grad));
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double fill, bool requires_grad) {
  Tensor t(make_node(rows, cols, requires_grad));
  for (double& v : t.node_->value) v = fill;
  return t;
}

Tensor Tensor::from_data(std::size_t rows, std::size_t cols, std::vector<double> data,
                         bool requires_grad) {
  if (data.size() != rows * cols) {
    throw DimensionError("from_data: " + std::to_string(data.size()) +
                         " values do not fill shape " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  Tensor t(make_node(rows, cols, requires_grad));
  t.node_->value = std::move(data);
  return t;
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows, bool requires_grad) {
  std::size_t r = rows.size();
  std::size_t c = r == 0 ? 0 : rows.front().size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return from_data(r, c, std::move(data), requires_grad);
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (i >= rows() || j >= cols()) throw ContractError("Tensor::at: index out of range");
  return node_->value[i * cols() + j];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  if (i >= rows() || j >= cols()) throw ContractError("Tensor::at: index out of range");
  return node_->value[i * cols() + j];
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on) {
    node_->grad.assign(node_->value.size(), 0.0);
  } else {
    node_->grad.clear();
  }
}

const std::vector<double>& Tensor::grad() const {
  if (!node_->requires_grad) throw ContractError("Tensor::grad: tensor has no gradient buffer");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
}

std::string shape_str(const Tensor& t) {
  if (!t.defined()) return "<undefined>";
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

bool all_finite(const Tensor& t) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void quantize_to_float32(Tensor& t) {
  for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : id_(++g_tape_counter) {}

Tensor Tape::make_output(std::size_t rows, std::size_t cols, bool requires_grad) {
  if (replayed_) throw ContractError("tape was already replayed; build a fresh tape");
  Tensor t(make_node(rows, cols, requires_grad));
  t.node_->producer = id_;
  return t;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a) + " * " +
                         shape_str(b));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor out = make_output(m, n, rg);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = pb + kk * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (rg) {
    record([an = a.node_, bn = b.node_, on = out.node_, m, k, n] {
      const double* g = on->grad.data();
      if (an->requires_grad) {
        // a.grad += g * b^T
        double* ga = an->grad.data();
        const double* pb2 = bn->value.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            const double* grow = g + i * n;
            const double* brow = pb2 + kk * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + kk] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        // b.grad += a^T * g
        double* gb = bn->grad.data();
        const double* pa2 = an->value.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = pa2[i * k + kk];
            if (av == 0.0) continue;
            double* gbrow = gb + kk * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  bool rg = a.requires_grad();
  Tensor out = make_output(n, m, rg);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values()[j * m + i] = a.values()[i * n + j];
  if (rg) {
    record([an = a.node_, on = out.node_, m, n] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += on->grad[j * m + i];
    });
  }
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor out = make_output(a.rows(), a.cols(), rg);
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
  if (rg) {
    record([an = a.node_, bn = b.node_, on = out.node_] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor out = make_output(a.rows(), a.cols(), rg);
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
  if (rg) {
    record([an = a.node_, bn = b.node_, on = out.node_] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor out = make_output(a.rows(), a.cols(), rg);
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
  if (rg) {
    record([an = a.node_, bn = b.node_, on = out.node_] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i] * bn->value[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] += on->grad[i] * an->value[i];
    });
  }
  return out;
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
  check_same_shape("div", a, b);
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor out = make_output(a.rows(), a.cols(), rg);
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] / b.values()[i];
  if (rg) {
    record([an = a.node_, bn = b.node_, on = out.node_] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i] / bn->value[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] -= on->grad[i] * on->value[i] / bn->value[i];
    });
  }
  return out;
}

Tensor Tape::sqrt_elem(const Tensor& a) {
  bool rg = a.requires_grad();
  Tensor out = make_output(a.rows(), a.cols(), rg);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.values()[i] < 0.0) throw NumericError("sqrt_elem: negative input");
    out.values()[i] = std::sqrt(a.values()[i]);
  }
  if (rg) {
    record([an = a.node_, on = out.node_] {
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i] * 0.5 / on->value[i];
    });
  }
  return out;
}

Tensor Tape::relu(const Tensor& a) {
  bool rg = a.requires_grad();
  Tensor out = make_output(a.rows(), a.cols(), rg);
  for (std::size_t i = 0; i < a.size(); ++i)
    out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  if (rg) {
    record([an = a.node_, on = out.node_] {
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        if (an->value[i] > 0.0) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double factor) {
  bool rg = a.requires_grad();
  Tensor out = make_output(a.rows(), a.cols(), rg);
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * factor;
  if (rg) {
    record([an = a.node_, on = out.node_, factor] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * factor;
    });
  }
  return out;
}

Tensor Tape::add_const(const Tensor& a, double c) {
  bool rg = a.requires_grad();
  Tensor out = make_output(a.rows(), a.cols(), rg);
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] + c;
  if (rg) {
    record([an = a.node_, on = out.node_] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor Tape::add_rowvec(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_rowvec: row " + shape_str(row) + " does not match " +
                         shape_str(a));
  }
  const std::size_t m = a.rows(), n = a.cols();
  bool rg = a.requires_grad() || row.requires_grad();
  Tensor out = make_output(m, n, rg);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.values()[i * n + j] = a.values()[i * n + j] + row.values()[j];
  if (rg) {
    record([an = a.node_, rn = row.node_, on = out.node_, m, n] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < m * n; ++i) an->grad[i] += on->grad[i];
      if (rn->requires_grad)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) rn->grad[j] += on->grad[i * n + j];
    });
  }
  return out;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front()) + " vs " +
                           shape_str(p));
    }
    total += p.cols();
    rg = rg || p.requires_grad();
  }
  Tensor out = make_output(m, total, rg);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out.values()[i * total + offset + j] = p.values()[i * c + j];
    offset += c;
  }
  if (rg) {
    std::vector<std::shared_ptr<detail::TensorNode>> nodes;
    nodes.reserve(parts.size());
    for (const Tensor& p : parts) nodes.push_back(p.node_);
    record([nodes = std::move(nodes), on = out.node_, m, total] {
      std::size_t offset = 0;
      for (const auto& pn : nodes) {
        const std::size_t c = pn->cols;
        if (pn->requires_grad) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j)
              pn->grad[i * c + j] += on->grad[i * total + offset + j];
        }
        offset += c;
      }
    });
  }
  return out;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const std::size_t n = parts.front().cols();
  std::size_t total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front()) +
                           " vs " + shape_str(p));
    }
    total += p.rows();
    rg = rg || p.requires_grad();
  }
  Tensor out = make_output(total, n, rg);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < p.size(); ++i) out.values()[offset * n + i] = p.values()[i];
    offset += p.rows();
  }
  if (rg) {
    std::vector<std::shared_ptr<detail::TensorNode>> nodes;
    nodes.reserve(parts.size());
    for (const Tensor& p : parts) nodes.push_back(p.node_);
    record([nodes = std::move(nodes), on = out.node_, n] {
      std::size_t offset = 0;
      for (const auto& pn : nodes) {
        if (pn->requires_grad) {
          for (std::size_t i = 0; i < pn->grad.size(); ++i)
            pn->grad[i] += on->grad[offset * n + i];
        }
        offset += pn->rows;
      }
    });
  }
  return out;
}

Tensor Tape::slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows()) throw ContractError("slice_rows: range out of bounds");
  const std::size_t n = a.cols(), m = end - begin;
  bool rg = a.requires_grad();
  Tensor out = make_output(m, n, rg);
  for (std::size_t i = 0; i < m * n; ++i) out.values()[i] = a.values()[begin * n + i];
  if (rg) {
    record([an = a.node_, on = out.node_, begin, n, m] {
      for (std::size_t i = 0; i < m * n; ++i) an->grad[begin * n + i] += on->grad[i];
    });
  }
  return out;
}

Tensor Tape::slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) throw ContractError("slice_cols: range out of bounds");
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  bool rg = a.requires_grad();
  Tensor out = make_output(m, w, rg);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out.values()[i * w + j] = a.values()[i * n + begin + j];
  if (rg) {
    record([an = a.node_, on = out.node_, begin, m, n, w] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) an->grad[i * n + begin + j] += on->grad[i * w + j];
    });
  }
  return out;
}

Tensor Tape::mean_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0) return make_output(1, n, false);  // zero row, no gradient contribution
  bool rg = a.requires_grad();
  Tensor out = make_output(1, n, rg);
  // first_row + mean(deltas): exact when all rows coincide, and accumulates
  // centered values otherwise. Same derivative as the plain mean.
  for (std::size_t i = 1; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.values()[j] += a.values()[i * n + j] - a.values()[j];
  for (std::size_t j = 0; j < n; ++j)
    out.values()[j] = a.values()[j] + out.values()[j] / static_cast<double>(m);
  if (rg) {
    record([an = a.node_, on = out.node_, m, n] {
      const double inv = 1.0 / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += on->grad[j] * inv;
    });
  }
  return out;
}

Tensor Tape::sum_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  bool rg = a.requires_grad();
  Tensor out = make_output(1, n, rg);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values()[j] += a.values()[i * n + j];
  if (rg) {
    record([an = a.node_, on = out.node_, m, n] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += on->grad[j];
    });
  }
  return out;
}

Tensor Tape::sum_all(const Tensor& a) {
  bool rg = a.requires_grad();
  Tensor out = make_output(1, 1, rg);
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  out.values()[0] = acc;
  if (rg) {
    record([an = a.node_, on = out.node_] {
      const double g = on->grad[0];
      for (double& gv : an->grad) gv += g;
    });
  }
  return out;
}

Tensor Tape::neighbor_mean(const Tensor& a,
                           const std::vector<std::vector<int>>& neighbors) {
  const std::size_t n = a.cols(), rows_in = a.rows();
  for (const auto& list : neighbors)
    for (int idx : list)
      if (idx < 0 || static_cast<std::size_t>(idx) >= rows_in)
        throw ContractError("neighbor_mean: index out of range");
  bool rg = a.requires_grad();
  Tensor out = make_output(neighbors.size(), n, rg);
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    const auto& list = neighbors[i];
    if (list.empty()) continue;
    double* orow = out.values().data() + i * n;
    const double* first = a.values().data() + static_cast<std::size_t>(list.front()) * n;
    for (std::size_t t = 1; t < list.size(); ++t) {
      const double* arow = a.values().data() + static_cast<std::size_t>(list[t]) * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += arow[j] - first[j];
    }
    const double inv = 1.0 / static_cast<double>(list.size());
    for (std::size_t j = 0; j < n; ++j) orow[j] = first[j] + orow[j] * inv;
  }
  if (rg) {
    record([an = a.node_, on = out.node_, neighbors, n] {
      for (std::size_t i = 0; i < neighbors.size(); ++i) {
        const auto& list = neighbors[i];
        if (list.empty()) continue;
        const double inv = 1.0 / static_cast<double>(list.size());
        const double* grow = on->grad.data() + i * n;
        for (int idx : list) {
          double* garow = an->grad.data() + static_cast<std::size_t>(idx) * n;
          for (std::size_t j = 0; j < n; ++j) garow[j] += grow[j] * inv;
        }
      }
    });
  }
  return out;
}

Tensor Tape::softmax_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  bool rg = a.requires_grad();
  Tensor out = make_output(m, n, rg);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.values().data() + i * n;
    double* y = out.values().data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
  }
  if (rg) {
    record([an = a.node_, on = out.node_, m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = on->value.data() + i * n;
        const double* g = on->grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        double* ga = an->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) ga[j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

Tensor Tape::layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias) {
  const std::size_t m = a.rows(), n = a.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw DimensionError("layer_norm: gain/bias must be 1x" + std::to_string(n) + ", got " +
                         shape_str(gain) + " and " + shape_str(bias));
  }
  bool rg = a.requires_grad() || gain.requires_grad() || bias.requires_grad();
  Tensor out = make_output(m, n, rg);
  std::vector<double> xhat(m * n), inv_std(m), centered(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.values().data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      centered[i * n + j] = x[j] - mean;
      var += centered[i * n + j] * centered[i * n + j];
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEps);
    double* y = out.values().data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = centered[i * n + j] * inv_std[i];
      y[j] = xhat[i * n + j] * gain.values()[j] + bias.values()[j];
    }
  }
  if (rg) {
    record([an = a.node_, gn = gain.node_, bn = bias.node_, on = out.node_,
            xhat = std::move(xhat), inv_std = std::move(inv_std),
            centered = std::move(centered), m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        const double* go = on->grad.data() + i * n;
        const double* xh = xhat.data() + i * n;
        const double* ce = centered.data() + i * n;
        if (gn->requires_grad)
          for (std::size_t j = 0; j < n; ++j) gn->grad[j] += go[j] * xh[j];
        if (bn->requires_grad)
          for (std::size_t j = 0; j < n; ++j) bn->grad[j] += go[j];
        if (an->requires_grad) {
          const double inv = inv_std[i];
          const double invn = 1.0 / static_cast<double>(n);
          double dvar = 0.0, dmu_a = 0.0, sum_c = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dxhat = go[j] * gn->value[j];
            dvar += dxhat * ce[j];
            dmu_a += dxhat;
            sum_c += ce[j];
          }
          dvar *= -0.5 * inv * inv * inv;
          const double dmu = -inv * dmu_a + dvar * (-2.0 * invn) * sum_c;
          double* ga = an->grad.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) {
            const double dxhat = go[j] * gn->value[j];
            ga[j] += dxhat * inv + dvar * 2.0 * ce[j] * invn + dmu * invn;
          }
        }
      }
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (replayed_) throw ContractError("backward already ran on this tape");
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward: loss must be a 1x1 tensor, got " + shape_str(loss));
  }
  if (loss.node_->producer != id_) {
    throw ContractError("backward: loss was not produced by this tape");
  }
  replayed_ = true;
  if (!loss.requires_grad()) return;  // loss depends on no trainable input
  loss.node_->grad[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

namespace {
constexpr double kRelErrFloor = 1e-3;  // denominator floor for near-zero gradients
}

GradCheckReport grad_check(const std::function<Tensor(Tape&)>& build_loss,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double step, double tol) {
  if (step <= 0.0 || tol <= 0.0) throw ContractError("grad_check: step and tol must be positive");
  GradCheckReport report;
  report.step = step;
  report.tol = tol;

  for (const auto& [name, p] : params) {
    if (!p.requires_grad())
      throw ContractError("grad_check: parameter '" + name + "' does not require gradients");
    const_cast<Tensor&>(p).zero_grad();
  }

  // Analytic pass.
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = build_loss(tape);
    if (loss.rows() != 1 || loss.cols() != 1)
      throw ContractError("grad_check: loss must be scalar");
    if (!std::isfinite(loss.values()[0]))
      throw NumericError("grad_check: non-finite loss value");
    tape.backward(loss);
    for (const auto& [name, p] : params) {
      for (double g : p.grad()) {
        if (!std::isfinite(g))
          throw NumericError("grad_check: non-finite gradient for parameter '" + name + "'");
      }
      analytic.push_back(p.grad());
    }
  }

  auto eval = [&]() {
    Tape tape;
    Tensor loss = build_loss(tape);
    return loss.values()[0];
  };

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& [name, p] = params[pi];
    auto& values = const_cast<Tensor&>(p).values();
    GradCheckItem item;
    item.name = name;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double f_plus = 0.0, f_minus = 0.0;
      try {
        values[i] = saved + step;
        f_plus = eval();
        values[i] = saved - step;
        f_minus = eval();
      } catch (const NumericError& e) {
        values[i] = saved;
        throw NumericError("grad_check: while perturbing parameter '" + name +
                           "': " + e.what());
      }
      values[i] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw NumericError("grad_check: non-finite evaluation while perturbing parameter '" +
                           name + "'");
      }
      const double fd = (f_plus - f_minus) / (2.0 * step);
      const double ref = analytic[pi][i];
      const double denom = std::max({std::abs(ref), std::abs(fd), kRelErrFloor});
      const double rel = std::abs(ref - fd) / denom;
      item.max_rel_err = std::max(item.max_rel_err, rel);
    }
    item.pass = item.max_rel_err <= tol;
    report.all_pass = report.all_pass && item.pass;
    report.items.push_back(std::move(item));
  }
  return report;
}

}  // namespace stzero
