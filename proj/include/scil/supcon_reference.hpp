#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scil/supcon.hpp"

namespace scil {

/// Loop-by-loop reference evaluation of the supervised contrastive loss, used
/// to cross-check supcon_forward. Every anchor i walks its positive set P(i)
/// and its contrast set A(i) = {a != i} explicitly. Limited to small batches.
inline double supcon_oracle(const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                            std::span<const ClassLabel> labels, const LossParams& params = {}) {
  params.validate();
  const std::size_t n = static_cast<std::size_t>(embeddings.rows());
  const std::size_t width = static_cast<std::size_t>(embeddings.cols());
  if (n < 2) throw std::invalid_argument("supcon_oracle: batch needs at least 2 rows");
  if (n > 128) throw std::invalid_argument("supcon_oracle: batch limited to 128 rows");
  if (width < 1) throw std::invalid_argument("supcon_oracle: embedding width must be >= 1");
  if (labels.size() != n) throw std::invalid_argument("supcon_oracle: label count mismatch");

  std::vector<std::vector<double>> unit(n, std::vector<double>(width));
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < width; ++k) {
      const double x = embeddings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      if (!std::isfinite(x)) throw std::invalid_argument("supcon_oracle: non-finite embedding entry");
      sq += x * x;
    }
    if (sq == 0.0) {
      throw std::invalid_argument("supcon_oracle: embedding row " + std::to_string(i) + " has zero norm");
    }
    const double norm = std::sqrt(sq);
    for (std::size_t k = 0; k < width; ++k) {
      unit[i][k] = embeddings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) / norm;
    }
  }
  auto similarity = [&](std::size_t a, std::size_t b) {
    double dot = 0.0;
    for (std::size_t k = 0; k < width; ++k) dot += unit[a][k] * unit[b][k];
    return dot / params.temperature;
  };

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double shift = similarity(i, i);
    for (std::size_t a = 0; a < n; ++a) shift = std::max(shift, similarity(i, a));

    double denominator = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a != i) denominator += std::exp(similarity(i, a) - shift);
    }
    denominator += kSupConEps;

    double sum_log_prob = 0.0;
    std::size_t positives = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == i || labels[p] != labels[i]) continue;
      sum_log_prob += std::log(std::exp(similarity(i, p) - shift) / denominator);
      ++positives;
    }
    if (positives > 0) total += -sum_log_prob / static_cast<double>(positives);
  }
  return (params.temperature / params.base_temperature) * total / static_cast<double>(n);
}

}  // namespace scil
