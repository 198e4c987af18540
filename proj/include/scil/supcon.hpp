#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "scil/action_labeling.hpp"

namespace scil {

/// Temperature and base temperature of the supervised contrastive loss. The
/// final loss is scaled by temperature / base_temperature.
struct LossParams {
  double temperature = 0.07;
  double base_temperature = 0.07;

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw std::invalid_argument("temperature must be a positive finite number");
    }
    if (!(base_temperature > 0.0) || !std::isfinite(base_temperature)) {
      throw std::invalid_argument("base_temperature must be a positive finite number");
    }
  }
};

/// Added to the softmax denominator inside the log.
inline constexpr double kSupConEps = 1e-12;

/// Symmetric N x N matrix with mask(i, j) = 1 iff labels i and j agree and
/// i != j.
template <typename Scalar = double>
Eigen::MatrixX<Scalar> positive_mask(std::span<const ClassLabel> labels) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (n < 2) throw std::invalid_argument("positive_mask: need at least 2 samples");
  Eigen::MatrixX<Scalar> mask(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      mask(i, j) = (i != j && labels[i] == labels[j]) ? Scalar(1) : Scalar(0);
    }
  }
  return mask;
}

namespace detail {

template <typename Derived>
void check_embeddings(const Eigen::MatrixBase<Derived>& embeddings, std::size_t n_labels) {
  if (embeddings.rows() < 2) throw std::invalid_argument("supcon: batch needs at least 2 rows");
  if (embeddings.cols() < 1) throw std::invalid_argument("supcon: embedding width must be >= 1");
  if (static_cast<std::size_t>(embeddings.rows()) != n_labels) {
    throw std::invalid_argument("supcon: " + std::to_string(n_labels) + " labels for " +
                                std::to_string(embeddings.rows()) + " embeddings");
  }
  if (!embeddings.allFinite()) throw std::invalid_argument("supcon: non-finite embedding entry");
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    if (embeddings.row(i).squaredNorm() == 0) {
      throw std::invalid_argument("supcon: embedding row " + std::to_string(i) + " has zero norm");
    }
  }
}

/// Shared forward state reused by the backward pass.
template <typename Scalar>
struct SupConState {
  Eigen::VectorX<Scalar> norms;
  Eigen::MatrixX<Scalar> unit;       // row-normalized embeddings
  Eigen::MatrixX<Scalar> mask;       // positives, zero diagonal
  Eigen::VectorX<Scalar> pos_count;  // clamped to 1 when an anchor has no positive
  Eigen::MatrixX<Scalar> prob;       // softmax over j != i, eps in the denominator
  Eigen::MatrixX<Scalar> log_prob;
  Scalar loss{0};
};

template <typename Derived>
SupConState<typename Derived::Scalar> supcon_state(const Eigen::MatrixBase<Derived>& embeddings,
                                                   std::span<const ClassLabel> labels,
                                                   const LossParams& params) {
  using Scalar = typename Derived::Scalar;
  params.validate();
  check_embeddings(embeddings, labels.size());
  const Eigen::Index n = embeddings.rows();
  const Scalar tau = static_cast<Scalar>(params.temperature);

  SupConState<Scalar> s;
  s.norms = embeddings.rowwise().norm();
  s.unit = s.norms.cwiseInverse().asDiagonal() * embeddings;
  s.mask = positive_mask<Scalar>(labels);

  Eigen::MatrixX<Scalar> logits = (s.unit * s.unit.transpose()) / tau;
  // Row max includes the self-similarity; it only shifts the exponent.
  logits.colwise() -= logits.rowwise().maxCoeff();
  Eigen::MatrixX<Scalar> exp_logits = logits.array().exp().matrix();
  exp_logits.diagonal().setZero();
  const Eigen::VectorX<Scalar> denom =
      (exp_logits.rowwise().sum().array() + static_cast<Scalar>(kSupConEps)).matrix();
  s.log_prob = logits.colwise() - denom.array().log().matrix();
  s.prob = denom.cwiseInverse().asDiagonal() * exp_logits;

  s.pos_count = s.mask.rowwise().sum();
  s.pos_count = s.pos_count.unaryExpr([](Scalar c) { return c < Scalar(1e-6) ? Scalar(1) : c; });
  const Eigen::VectorX<Scalar> mean_log_prob_pos =
      s.mask.cwiseProduct(s.log_prob).rowwise().sum().cwiseQuotient(s.pos_count);

  const Scalar scale = static_cast<Scalar>(params.temperature / params.base_temperature);
  s.loss = Scalar(0) - scale * mean_log_prob_pos.sum() / static_cast<Scalar>(n);  // +0 rather than -0 when empty
  return s;
}

}  // namespace detail

/// Supervised contrastive loss over an N x E batch of raw (un-normalized)
/// embeddings. Rows are L2-normalized internally; anchors without positives
/// contribute zero.
template <typename Derived>
typename Derived::Scalar supcon_forward(const Eigen::MatrixBase<Derived>& embeddings,
                                        std::span<const ClassLabel> labels,
                                        const LossParams& params = {}) {
  return detail::supcon_state(embeddings, labels, params).loss;
}

/// Loss value and gradient with respect to the raw embeddings.
template <typename Scalar>
struct SupConResult {
  Scalar loss{0};
  Eigen::MatrixX<Scalar> grad;
};

/// Gradient of supcon_forward with respect to its raw input rows, chained
/// through the internal L2 normalization. The per-row max shift is treated as
/// a constant.
template <typename Derived>
SupConResult<typename Derived::Scalar> supcon_backward(const Eigen::MatrixBase<Derived>& embeddings,
                                                       std::span<const ClassLabel> labels,
                                                       const LossParams& params = {}) {
  using Scalar = typename Derived::Scalar;
  const auto s = detail::supcon_state(embeddings, labels, params);
  const Eigen::Index n = embeddings.rows();
  const Scalar tau = static_cast<Scalar>(params.temperature);
  const Scalar scale = static_cast<Scalar>(params.temperature / params.base_temperature) /
                       static_cast<Scalar>(n);

  // dL/dlogit(i, j) = scale * (has_pos_i * p_ij - mask_ij / |P(i)|)
  const Eigen::VectorX<Scalar> weight = s.pos_count.cwiseInverse();
  const Eigen::VectorX<Scalar> has_pos = s.mask.rowwise().sum().cwiseProduct(weight);
  Eigen::MatrixX<Scalar> dlogits =
      scale * (has_pos.asDiagonal() * s.prob - weight.asDiagonal() * s.mask);
  dlogits.diagonal().setZero();

  const Eigen::MatrixX<Scalar> dunit = ((dlogits + dlogits.transpose()) * s.unit) / tau;
  // Project out the radial component, then divide by the row norm.
  const Eigen::VectorX<Scalar> radial = s.unit.cwiseProduct(dunit).rowwise().sum();
  SupConResult<Scalar> out;
  out.loss = s.loss;
  out.grad = s.norms.cwiseInverse().asDiagonal() * (dunit - radial.asDiagonal() * s.unit);
  return out;
}

}  // namespace scil
