#include "stzero/predictor.hpp"

namespace stzero {

Tensor predict(Tape& tape, const Tensor& z, const Tensor& v) {
  if (z.cols() != v.cols())
    throw DimensionError("predict: features " + shape_str(z) + " and projections " +
                         shape_str(v) + " disagree on width");
  return tape.matmul(z, tape.transpose(v));
}

Tensor loss_mse(Tape& tape, const Tensor& y_hat, const Tensor& y) {
  if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols())
    throw DimensionError("loss_mse: shape mismatch " + shape_str(y_hat) + " vs " +
                         shape_str(y));
  Tensor diff = tape.sub(y_hat, y);
  Tensor total = tape.sum_all(tape.mul(diff, diff));
  return tape.scale(total, 1.0 / static_cast<double>(y.size()));
}

Tensor loss_pcc(Tape& tape, const Tensor& y_hat, const Tensor& y) {
  if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols())
    throw DimensionError("loss_pcc: shape mismatch " + shape_str(y_hat) + " vs " +
                         shape_str(y));
  const std::size_t n = y.rows(), g = y.cols();
  if (n < 2) throw ContractError("loss_pcc: need at least two rows, got " + shape_str(y));

  // Constant side: centered targets and their per-column sums of squares.
  Tensor centered_y = Tensor::zeros(n, g);
  std::vector<double> syy(g, 0.0);
  for (std::size_t c = 0; c < g; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += y.values()[i * g + c];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = y.values()[i * g + c] - mean;
      centered_y.values()[i * g + c] = d;
      syy[c] += d * d;
    }
  }

  // Degenerate columns (zero variance on either side) are masked out of the
  // correlation term; they contribute (1 - 0) with no gradient path.
  Tensor mask = Tensor::zeros(1, g);
  for (std::size_t c = 0; c < g; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += y_hat.values()[i * g + c];
    mean /= static_cast<double>(n);
    double sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = y_hat.values()[i * g + c] - mean;
      sxx += d * d;
    }
    mask.values()[c] = (sxx > 0.0 && syy[c] > 0.0) ? 1.0 : 0.0;
  }

  Tensor syy_row = Tensor::from_data(1, g, syy);
  Tensor mean_hat = tape.mean_rows(y_hat);
  Tensor centered_hat = tape.add_rowvec(y_hat, tape.scale(mean_hat, -1.0));
  Tensor sxx_row = tape.sum_rows(tape.mul(centered_hat, centered_hat));
  Tensor sxy_row = tape.sum_rows(tape.mul(centered_hat, centered_y));
  Tensor denom = tape.sqrt_elem(tape.add_const(tape.mul(sxx_row, syy_row), kPccEps));
  Tensor r = tape.mul(tape.div(sxy_row, denom), mask);
  return tape.add_const(tape.scale(tape.sum_all(r), -1.0 / static_cast<double>(g)), 1.0);
}

Tensor loss_total(Tape& tape, const Tensor& y_hat, const Tensor& y) {
  return tape.add(loss_mse(tape, y_hat, y), loss_pcc(tape, y_hat, y));
}

}  // namespace stzero
