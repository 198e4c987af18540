#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scil/action_labeling.hpp"
#include "scil/supcon.hpp"

namespace scil {

/// Layer sizes of the feature extractor. Hidden layers use the rectifier; the
/// embedding layer is linear.
struct NetworkLayout {
  int obs_dim = 0;
  std::vector<int> hidden;
  int embedding_dim = 32;

  bool operator==(const NetworkLayout&) const = default;
};

/// Fully connected layer acting on row-major batches: out = in * weight + bias.
template <typename Scalar>
struct DenseLayer {
  Eigen::MatrixX<Scalar> weight;  // in x out
  Eigen::RowVectorX<Scalar> bias;

  Eigen::Index in() const { return weight.rows(); }
  Eigen::Index out() const { return weight.cols(); }
};

/// Width of the policy head for one action dimension: one logit per value for
/// discrete dims, a single regression output for continuous dims.
inline Eigen::Index head_width(const DimensionSpec& dim) {
  if (const auto* d = std::get_if<DiscreteDim>(&dim)) return static_cast<Eigen::Index>(d->cardinality);
  return 1;
}

/// Feature extractor layers followed by one linear head per action dimension.
template <typename Scalar>
struct NetworkParams {
  NetworkLayout layout;
  ActionSpec spec;
  std::vector<DenseLayer<Scalar>> extractor;
  std::vector<DenseLayer<Scalar>> heads;

  NetworkParams() = default;

  NetworkParams(NetworkLayout layout_, ActionSpec spec_) : layout(std::move(layout_)), spec(std::move(spec_)) {
    if (layout.obs_dim < 1) throw std::invalid_argument("network: obs_dim must be >= 1");
    if (layout.embedding_dim < 1) throw std::invalid_argument("network: embedding_dim must be >= 1");
    std::vector<int> sizes{layout.obs_dim};
    for (int h : layout.hidden) {
      if (h < 1) throw std::invalid_argument("network: hidden sizes must be >= 1");
      sizes.push_back(h);
    }
    sizes.push_back(layout.embedding_dim);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      extractor.push_back({Eigen::MatrixX<Scalar>::Zero(sizes[l], sizes[l + 1]),
                           Eigen::RowVectorX<Scalar>::Zero(sizes[l + 1])});
    }
    for (const auto& dim : spec.dims()) {
      const Eigen::Index w = head_width(dim);
      heads.push_back({Eigen::MatrixX<Scalar>::Zero(layout.embedding_dim, w), Eigen::RowVectorX<Scalar>::Zero(w)});
    }
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto fill = [&rng](DenseLayer<Scalar>& layer) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = static_cast<Scalar>(dist(rng));
      }
      for (Eigen::Index c = 0; c < layer.bias.size(); ++c) layer.bias(c) = static_cast<Scalar>(dist(rng));
    };
    for (auto& layer : extractor) fill(layer);
    for (auto& layer : heads) fill(layer);
  }

  template <typename Fn>
  void for_each_layer(Fn&& fn) {
    for (auto& layer : extractor) fn(layer);
    for (auto& layer : heads) fn(layer);
  }
  template <typename Fn>
  void for_each_layer(Fn&& fn) const {
    for (const auto& layer : extractor) fn(layer);
    for (const auto& layer : heads) fn(layer);
  }

  Eigen::Index num_parameters() const {
    Eigen::Index count = 0;
    for_each_layer([&](const DenseLayer<Scalar>& l) { count += l.weight.size() + l.bias.size(); });
    return count;
  }

  /// All parameters in layer order, each layer as weight (column-major) then bias.
  Eigen::VectorX<Scalar> flatten() const {
    Eigen::VectorX<Scalar> flat(num_parameters());
    Eigen::Index at = 0;
    for_each_layer([&](const DenseLayer<Scalar>& l) {
      flat.segment(at, l.weight.size()) = l.weight.reshaped();
      at += l.weight.size();
      flat.segment(at, l.bias.size()) = l.bias.transpose();
      at += l.bias.size();
    });
    return flat;
  }

  void assign(const Eigen::Ref<const Eigen::VectorX<Scalar>>& flat) {
    if (flat.size() != num_parameters()) throw std::invalid_argument("network: parameter vector size mismatch");
    Eigen::Index at = 0;
    for_each_layer([&](DenseLayer<Scalar>& l) {
      l.weight.reshaped() = flat.segment(at, l.weight.size());
      at += l.weight.size();
      l.bias = flat.segment(at, l.bias.size()).transpose();
      at += l.bias.size();
    });
  }

  /// Zero-valued parameters of identical shape.
  NetworkParams zeros_like() const {
    NetworkParams out = *this;
    out.for_each_layer([](DenseLayer<Scalar>& l) {
      l.weight.setZero();
      l.bias.setZero();
    });
    return out;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_layer([&](const DenseLayer<Scalar>& l) { ok = ok && l.weight.allFinite() && l.bias.allFinite(); });
    return ok;
  }
};

/// Intermediate values of one forward pass, kept for backpropagation.
template <typename Scalar>
struct ForwardTrace {
  std::vector<Eigen::MatrixX<Scalar>> pre_activations;  // one per extractor layer
  std::vector<Eigen::MatrixX<Scalar>> activations;      // input, then one per extractor layer
  std::vector<Eigen::MatrixX<Scalar>> head_outputs;     // N x head_width

  const Eigen::MatrixX<Scalar>& embedding() const { return activations.back(); }
  Eigen::Index batch_size() const { return activations.front().rows(); }
};

template <typename Scalar>
ForwardTrace<Scalar> forward(const Eigen::Ref<const Eigen::MatrixX<Scalar>>& obs, const NetworkParams<Scalar>& params) {
  if (obs.cols() != params.layout.obs_dim) {
    throw std::invalid_argument("forward: observation width " + std::to_string(obs.cols()) + ", network expects " +
                                std::to_string(params.layout.obs_dim));
  }
  ForwardTrace<Scalar> trace;
  trace.activations.push_back(obs);
  const std::size_t depth = params.extractor.size();
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = params.extractor[l];
    Eigen::MatrixX<Scalar> z = trace.activations.back() * layer.weight;
    z.rowwise() += layer.bias;
    if (!z.allFinite()) throw std::runtime_error("forward: non-finite activation in extractor layer " + std::to_string(l));
    trace.pre_activations.push_back(z);
    if (l + 1 < depth) {
      trace.activations.push_back(z.cwiseMax(Scalar(0)));
    } else {
      trace.activations.push_back(std::move(z));
    }
  }
  for (std::size_t h = 0; h < params.heads.size(); ++h) {
    Eigen::MatrixX<Scalar> out = trace.embedding() * params.heads[h].weight;
    out.rowwise() += params.heads[h].bias;
    if (!out.allFinite()) throw std::runtime_error("forward: non-finite output in policy head " + std::to_string(h));
    trace.head_outputs.push_back(std::move(out));
  }
  return trace;
}

/// Summed predictive loss over heads with per-head values and output gradients.
template <typename Scalar>
struct PredictiveLoss {
  Scalar total{0};
  std::vector<Scalar> per_head;                     // cross-entropy or MSE per head
  std::vector<Eigen::MatrixX<Scalar>> head_grads;  // d total / d head output
};

/// Row-wise log-softmax.
template <typename Scalar>
Eigen::MatrixX<Scalar> log_softmax(const Eigen::Ref<const Eigen::MatrixX<Scalar>>& logits) {
  Eigen::MatrixX<Scalar> shifted = logits.colwise() - logits.rowwise().maxCoeff();
  const Eigen::VectorX<Scalar> lse = shifted.array().exp().rowwise().sum().log().matrix();
  shifted.colwise() -= lse;
  return shifted;
}

/// Cross-entropy (batch mean) for discrete heads, mean squared error for
/// continuous heads.
template <typename Scalar>
PredictiveLoss<Scalar> predictive_loss(const ForwardTrace<Scalar>& trace, const Eigen::Ref<const Eigen::MatrixXd>& actions,
                                       const ActionSpec& spec) {
  const Eigen::Index n = trace.batch_size();
  if (actions.rows() != n || static_cast<std::size_t>(actions.cols()) != spec.size() ||
      trace.head_outputs.size() != spec.size()) {
    throw std::invalid_argument("predictive_loss: action batch does not match network heads");
  }
  PredictiveLoss<Scalar> out;
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  for (std::size_t d = 0; d < spec.size(); ++d) {
    const auto& output = trace.head_outputs[d];
    const auto col = static_cast<Eigen::Index>(d);
    if (const auto* disc = std::get_if<DiscreteDim>(&spec[d])) {
      const Eigen::MatrixX<Scalar> logp = log_softmax<Scalar>(output);
      Eigen::MatrixX<Scalar> grad = logp.array().exp().matrix();
      Scalar loss{0};
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = actions(i, col);
        if (!(a >= 0.0) || a != std::floor(a) || a >= static_cast<double>(disc->cardinality)) {
          throw std::invalid_argument("predictive_loss: label " + std::to_string(a) + " outside head " +
                                      std::to_string(d) + " range");
        }
        const auto y = static_cast<Eigen::Index>(a);
        loss -= logp(i, y);
        grad(i, y) -= Scalar(1);
      }
      out.per_head.push_back(loss * inv_n);
      out.head_grads.push_back(grad * inv_n);
    } else {
      const Eigen::VectorX<Scalar> residual = output.col(0) - actions.col(col).template cast<Scalar>();
      out.per_head.push_back(residual.squaredNorm() * inv_n);
      out.head_grads.push_back(Scalar(2) * inv_n * residual);
    }
    out.total += out.per_head.back();
  }
  return out;
}

struct CombinedLossReport {
  double pred_loss = 0.0;
  double supcon_loss = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

template <typename Scalar>
struct CombinedGradients {
  NetworkParams<Scalar> grads;
  CombinedLossReport report;
  std::vector<double> pred_per_head;
};

/// Gradients of pred_loss + lambda * supcon_loss with respect to every
/// parameter. The contrastive term reaches the extractor only, through the
/// embedding.
template <typename Scalar>
CombinedGradients<Scalar> combined_backward(const ForwardTrace<Scalar>& trace, const NetworkParams<Scalar>& params,
                                            const Eigen::Ref<const Eigen::MatrixXd>& actions,
                                            std::span<const ClassLabel> labels, double lambda,
                                            const LossParams& loss_params) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("combined_backward: lambda must be >= 0");
  const auto pred = predictive_loss(trace, actions, params.spec);
  const auto contrastive = supcon_backward(trace.embedding(), labels, loss_params);

  CombinedGradients<Scalar> out{params.zeros_like(), {}, {}};
  out.report.pred_loss = static_cast<double>(pred.total);
  out.report.supcon_loss = static_cast<double>(contrastive.loss);
  out.report.lambda = lambda;
  out.report.total = out.report.pred_loss + lambda * out.report.supcon_loss;
  for (auto v : pred.per_head) out.pred_per_head.push_back(static_cast<double>(v));

  const auto& embedding = trace.embedding();
  Eigen::MatrixX<Scalar> upstream = Eigen::MatrixX<Scalar>::Zero(embedding.rows(), embedding.cols());
  for (std::size_t h = 0; h < params.heads.size(); ++h) {
    out.grads.heads[h].weight.noalias() = embedding.transpose() * pred.head_grads[h];
    out.grads.heads[h].bias = pred.head_grads[h].colwise().sum();
    upstream.noalias() += pred.head_grads[h] * params.heads[h].weight.transpose();
  }
  if (lambda != 0.0) upstream += static_cast<Scalar>(lambda) * contrastive.grad;

  for (std::size_t l = params.extractor.size(); l-- > 0;) {
    Eigen::MatrixX<Scalar> dz = upstream;
    if (l + 1 < params.extractor.size()) {
      dz.array() *= (trace.pre_activations[l].array() > Scalar(0)).template cast<Scalar>();
    }
    out.grads.extractor[l].weight.noalias() = trace.activations[l].transpose() * dz;
    out.grads.extractor[l].bias = dz.colwise().sum();
    if (l > 0) upstream.noalias() = dz * params.extractor[l].weight.transpose();
  }
  return out;
}

/// Total objective value without gradients.
template <typename Scalar>
double combined_loss(const Eigen::Ref<const Eigen::MatrixX<Scalar>>& obs, const NetworkParams<Scalar>& params,
                     const Eigen::Ref<const Eigen::MatrixXd>& actions, std::span<const ClassLabel> labels,
                     double lambda, const LossParams& loss_params) {
  const auto trace = forward<Scalar>(obs, params);
  double total = static_cast<double>(predictive_loss(trace, actions, params.spec).total);
  if (lambda != 0.0) total += lambda * static_cast<double>(supcon_forward(trace.embedding(), labels, loss_params));
  return total;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  Eigen::Index num_checked = 0;
  // Coordinates whose probe flipped a ReLU; excluded from the error statistics.
  Eigen::Index num_kinks = 0;
  Eigen::Index worst_index = -1;
  double tolerance = 0.0;
  bool passed = false;
};

/// A small batch for gradient checking.
struct GradCheckBatch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  std::vector<ClassLabel> labels;
  double lambda = 1.0;
  LossParams loss_params;
};

namespace detail {

inline bool same_relu_pattern(const ForwardTrace<double>& a, const ForwardTrace<double>& b) {
  for (std::size_t l = 0; l + 1 < a.pre_activations.size(); ++l) {
    if (((a.pre_activations[l].array() > 0) != (b.pre_activations[l].array() > 0)).any()) return false;
  }
  return true;
}

inline double traced_loss(const ForwardTrace<double>& trace, const NetworkParams<double>& params,
                          const GradCheckBatch& batch) {
  double total = predictive_loss(trace, batch.actions, params.spec).total;
  if (batch.lambda != 0.0) total += batch.lambda * supcon_forward(trace.embedding(), batch.labels, batch.loss_params);
  return total;
}

}  // namespace detail

/// Central finite differences over every parameter. Relative error is
/// |analytic - numeric| / max(1, |analytic|); passes iff the maximum is
/// strictly below `tolerance`. A coordinate whose +/- step changes any ReLU
/// on/off state is counted in `num_kinks` and left out of the statistics,
/// since the difference quotient straddles a non-differentiable point there.
inline GradCheckReport grad_check(const NetworkParams<double>& params, const GradCheckBatch& batch, double tolerance,
                                  double step = 1e-5) {
  const auto trace = forward<double>(batch.obs, params);
  const auto analytic =
      combined_backward(trace, params, batch.actions, batch.labels, batch.lambda, batch.loss_params).grads.flatten();
  const Eigen::VectorXd base = params.flatten();
  NetworkParams<double> probe = params;
  Eigen::VectorXd theta = base;

  GradCheckReport report;
  report.tolerance = tolerance;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < base.size(); ++k) {
    theta(k) = base(k) + step;
    probe.assign(theta);
    const auto plus_trace = forward<double>(batch.obs, probe);
    theta(k) = base(k) - step;
    probe.assign(theta);
    const auto minus_trace = forward<double>(batch.obs, probe);
    theta(k) = base(k);
    if (!detail::same_relu_pattern(trace, plus_trace) || !detail::same_relu_pattern(trace, minus_trace)) {
      ++report.num_kinks;
      continue;
    }
    const double plus = detail::traced_loss(plus_trace, params, batch);
    const double minus = detail::traced_loss(minus_trace, params, batch);
    const double numeric = (plus - minus) / (2.0 * step);
    const double rel = std::abs(analytic(k) - numeric) / std::max(1.0, std::abs(analytic(k)));
    sum += rel;
    ++report.num_checked;
    if (rel > report.max_rel_error || report.worst_index < 0) {
      report.max_rel_error = rel;
      report.worst_index = k;
    }
  }
  report.mean_rel_error = report.num_checked > 0 ? sum / static_cast<double>(report.num_checked) : 0.0;
  report.passed = report.num_checked > 0 && report.max_rel_error < tolerance;
  return report;
}

}  // namespace scil
