#pragma once

#include "stzero/tensor.hpp"

namespace stzero {

// Guard inside the square root of the correlation-loss denominator; keeps
// near-constant columns from producing non-finite values.
inline constexpr double kPccEps = 1e-8;

// Expression prediction: y_hat[i][c] = z_i . v_c for refined window features
// z [N x D] and gene projection vectors v [G x D].
Tensor predict(Tape& tape, const Tensor& z, const Tensor& v);

// Mean of squared deviations over all N*G entries.
Tensor loss_mse(Tape& tape, const Tensor& y_hat, const Tensor& y);

// Mean over genes of (1 - r_c), with r_c the Pearson correlation between the
// predicted and true columns across the N windows (N >= 2). A column whose
// prediction or target has exactly zero variance contributes the constant 1
// and no gradient.
Tensor loss_pcc(Tape& tape, const Tensor& y_hat, const Tensor& y);

// loss_mse + loss_pcc, unweighted.
Tensor loss_total(Tape& tape, const Tensor& y_hat, const Tensor& y);

}  // namespace stzero
