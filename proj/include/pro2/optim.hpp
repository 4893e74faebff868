#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <utility>

#include "pro2/error.hpp"

namespace pro2 {

using Matrix = Eigen::MatrixXd;

/// Scalar loss and its gradient with respect to the logits.
struct LossValue {
  double value = 0.0;
  Matrix gradient;
};

namespace detail {

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) noexcept { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double sigmoid(double z) noexcept {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

/// Mean binary cross-entropy over every entry of an N x d logit matrix.
/// Each column is scored against the same label vector.
inline LossValue binary_logistic_loss(const Matrix& logits, std::span<const int> labels) {
  detail::require(static_cast<Eigen::Index>(labels.size()) == logits.rows(),
                  "binary_logistic_loss: label count does not match logit rows");
  detail::require(logits.size() > 0, "binary_logistic_loss: empty logits");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0 && labels[i] != 1)
      throw ValidationError("binary_logistic_loss: label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " is not binary");
  const double scale = 1.0 / static_cast<double>(logits.size());
  LossValue out;
  out.gradient.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double z = logits(i, j);
      const double y = labels[static_cast<std::size_t>(i)];
      // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
      total += detail::softplus(z) - y * z;
      out.gradient(i, j) = (detail::sigmoid(z) - y) * scale;
    }
  }
  out.value = total * scale;
  return out;
}

/// Mean softmax cross-entropy over N rows of C logits.
inline LossValue softmax_xent_loss(const Matrix& logits, std::span<const int> labels) {
  detail::require(logits.cols() >= 2, "softmax_xent_loss: need at least two classes");
  detail::require(static_cast<Eigen::Index>(labels.size()) == logits.rows(),
                  "softmax_xent_loss: label count does not match logit rows");
  detail::require(logits.rows() > 0, "softmax_xent_loss: empty logits");
  const auto C = logits.cols();
  const double scale = 1.0 / static_cast<double>(logits.rows());
  LossValue out;
  out.gradient.resize(logits.rows(), C);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= C)
      throw ValidationError("softmax_xent_loss: label " + std::to_string(y) + " at row " + std::to_string(i) +
                            " outside [0, " + std::to_string(C) + ")");
    const double peak = logits.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < C; ++c) sum += std::exp(logits(i, c) - peak);
    const double log_norm = peak + std::log(sum);
    total += log_norm - logits(i, y);
    for (Eigen::Index c = 0; c < C; ++c) {
      const double p = std::exp(logits(i, c) - log_norm);
      out.gradient(i, c) = (p - (c == y ? 1.0 : 0.0)) * scale;
    }
  }
  out.value = total * scale;
  return out;
}

struct AdamHyper {
  double lr = 0.01;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  Matrix first_moment;
  Matrix second_moment;
  long step_count = 0;
  AdamHyper hyper;

  static OptimState zeros(Eigen::Index rows, Eigen::Index cols, const AdamHyper& hyper) {
    return {Matrix::Zero(rows, cols), Matrix::Zero(rows, cols), 0, hyper};
  }
};

/// In-place AdamW step with decoupled weight decay and full bias correction.
inline void adamw_update(Matrix& params, const Matrix& grads, OptimState& state) {
  detail::require(params.rows() == grads.rows() && params.cols() == grads.cols(),
                  "adamw_step: parameter and gradient shapes differ");
  detail::require(state.first_moment.rows() == params.rows() && state.first_moment.cols() == params.cols() &&
                      state.second_moment.rows() == params.rows() && state.second_moment.cols() == params.cols(),
                  "adamw_step: optimizer state shape does not match parameters");
  const AdamHyper& h = state.hyper;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correct1 = 1.0 - std::pow(h.beta1, t);
  const double correct2 = 1.0 - std::pow(h.beta2, t);

  state.first_moment = h.beta1 * state.first_moment + (1.0 - h.beta1) * grads;
  state.second_moment = h.beta2 * state.second_moment + (1.0 - h.beta2) * grads.cwiseProduct(grads);
  const auto m_hat = state.first_moment.array() / correct1;
  const auto v_hat = state.second_moment.array() / correct2;
  params.array() -= h.lr * (m_hat / (v_hat.sqrt() + h.eps) + h.weight_decay * params.array());
}

/// Pure form of `adamw_update`.
inline std::pair<Matrix, OptimState> adamw_step(const Matrix& params, const Matrix& grads, const OptimState& state) {
  std::pair<Matrix, OptimState> out{params, state};
  adamw_update(out.first, grads, out.second);
  return out;
}

}  // namespace pro2
