#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "scil/action_labeling.hpp"

namespace scil::testing {

struct RandomBatch {
  Eigen::MatrixXd embeddings;
  std::vector<ClassLabel> labels;
};

/// Gaussian embeddings with labels drawn uniformly from `classes` classes.
inline RandomBatch random_batch(std::mt19937_64& rng, Eigen::Index n, Eigen::Index width, int classes) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> c(0, classes - 1);
  RandomBatch b{Eigen::MatrixXd(n, width), std::vector<ClassLabel>(static_cast<std::size_t>(n))};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < width; ++k) b.embeddings(i, k) = g(rng);
    b.labels[static_cast<std::size_t>(i)] = static_cast<ClassLabel>(c(rng));
  }
  return b;
}

/// Central finite-difference gradient of a scalar function of a matrix.
inline Eigen::MatrixXd numeric_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                                        const Eigen::MatrixXd& x, double h = 1e-5) {
  Eigen::MatrixXd grad(x.rows(), x.cols());
  Eigen::MatrixXd probe = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      probe(i, k) = x(i, k) + h;
      const double plus = f(probe);
      probe(i, k) = x(i, k) - h;
      const double minus = f(probe);
      probe(i, k) = x(i, k);
      grad(i, k) = (plus - minus) / (2.0 * h);
    }
  }
  return grad;
}

/// max |analytic - numeric| / max(1, |analytic|)
inline double max_relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  return ((analytic - numeric).array().abs() / analytic.array().abs().max(1.0)).maxCoeff();
}

}  // namespace scil::testing
