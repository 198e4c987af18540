#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "scil/action_labeling.hpp"

namespace scil {

namespace detail {

template <typename Derived>
Eigen::MatrixX<typename Derived::Scalar> unit_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Eigen::MatrixX<Scalar> out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Scalar norm = out.row(i).norm();
    if (norm > Scalar(0)) out.row(i) /= norm;
  }
  return out;
}

}  // namespace detail

/// Mean silhouette coefficient under cosine distance (1 - cosine similarity).
/// Points alone in their cluster score 0, as do points with a = b = 0.
template <typename Derived>
double silhouette(const Eigen::MatrixBase<Derived>& embeddings, std::span<const ClassLabel> labels) {
  const Eigen::Index n = embeddings.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw std::invalid_argument("silhouette: label count mismatch");
  if (n < 3) throw std::invalid_argument("silhouette: need at least 3 samples");

  std::map<ClassLabel, int> index_of;
  for (auto l : labels) index_of.emplace(l, 0);
  if (index_of.size() < 2) throw std::invalid_argument("silhouette undefined for one cluster");
  int k = 0;
  for (auto& [label, idx] : index_of) idx = k++;

  std::vector<int> cluster(static_cast<std::size_t>(n));
  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    cluster[i] = index_of.at(labels[i]);
    counts[cluster[i]] += 1.0;
  }

  const Eigen::MatrixXd unit = detail::unit_rows(embeddings.template cast<double>());
  const Eigen::MatrixXd distance = (1.0 - (unit * unit.transpose()).array()).cwiseMax(0.0).matrix();

  // Per-point summed distance to each cluster.
  Eigen::MatrixXd membership = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) membership(i, cluster[i]) = 1.0;
  const Eigen::MatrixXd sums = distance * membership;

  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int own = cluster[i];
    if (counts[own] < 2.0) continue;
    const double a = sums(i, own) / (counts[own] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c != own) b = std::min(b, sums(i, c) / counts[c]);
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

/// Projection onto the top-k principal components, ordered by descending
/// variance. Each component's largest-magnitude loading is made positive.
/// Directions with negligible variance project to zero.
template <typename Derived>
Eigen::MatrixX<typename Derived::Scalar> pca_project(const Eigen::MatrixBase<Derived>& x, Eigen::Index k = 2) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = x.rows();
  if (k < 1) throw std::invalid_argument("pca_project: k must be >= 1");
  if (n < k) throw std::invalid_argument("pca_project: need at least k rows");

  const Eigen::MatrixXd data = x.template cast<double>();
  const Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca_project: eigendecomposition failed");

  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd values = solver.eigenvalues();
  const Eigen::MatrixXd vectors = solver.eigenvectors();
  const Eigen::Index dims = values.size();
  const double top = dims > 0 ? std::max(values(dims - 1), 0.0) : 0.0;
  const double cutoff = std::max(top * 1e-12, 1e-300);

  Eigen::MatrixXd components = Eigen::MatrixXd::Zero(data.cols(), k);
  for (Eigen::Index c = 0; c < k && c < dims; ++c) {
    const Eigen::Index src = dims - 1 - c;
    if (!(values(src) > cutoff)) break;
    Eigen::VectorXd v = vectors.col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    components.col(c) = v;
  }
  return (centered * components).template cast<Scalar>();
}

struct CosineStats {
  std::optional<double> intra;  // absent when no same-label pair exists
  std::optional<double> inter;  // absent when no different-label pair exists
};

/// Mean cosine similarity over same-label pairs and over different-label pairs (i < j).
template <typename Derived>
CosineStats class_cosine_stats(const Eigen::MatrixBase<Derived>& embeddings, std::span<const ClassLabel> labels) {
  const Eigen::Index n = embeddings.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw std::invalid_argument("class_cosine_stats: label count mismatch");
  if (n < 2) throw std::invalid_argument("class_cosine_stats: need at least 2 samples");
  const Eigen::MatrixXd unit = detail::unit_rows(embeddings.template cast<double>());
  const Eigen::MatrixXd sim = unit * unit.transpose();
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (labels[i] == labels[j]) {
        intra += sim(i, j);
        ++n_intra;
      } else {
        inter += sim(i, j);
        ++n_inter;
      }
    }
  }
  CosineStats out;
  if (n_intra > 0) out.intra = intra / static_cast<double>(n_intra);
  if (n_inter > 0) out.inter = inter / static_cast<double>(n_inter);
  return out;
}

struct EmbeddingReport {
  std::optional<double> silhouette;  // absent with fewer than 2 classes
  CosineStats cosine;
  std::map<ClassLabel, std::size_t> class_counts;
  Eigen::MatrixXd projection;  // N x 2
  std::vector<ClassLabel> labels;
};

template <typename Derived>
EmbeddingReport embedding_report(const Eigen::MatrixBase<Derived>& embeddings, std::span<const ClassLabel> labels) {
  EmbeddingReport report;
  report.labels.assign(labels.begin(), labels.end());
  for (auto l : labels) ++report.class_counts[l];
  if (report.class_counts.size() >= 2 && embeddings.rows() >= 3) report.silhouette = silhouette(embeddings, labels);
  report.cosine = class_cosine_stats(embeddings, labels);
  report.projection = pca_project(embeddings.template cast<double>(), std::min<Eigen::Index>(2, embeddings.rows()));
  return report;
}

}  // namespace scil
