#include "scil/action_labeling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace scil {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw std::overflow_error("action label space exceeds 64-bit range");
  }
  return out;
}

std::uint64_t base_of(const DimensionSpec& dim) {
  return std::visit(
      [](const auto& d) -> std::uint64_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(d)>, DiscreteDim>) {
          return d.cardinality;
        } else {
          return d.bins;
        }
      },
      dim);
}

}  // namespace

bool is_discrete(const DimensionSpec& dim) { return std::holds_alternative<DiscreteDim>(dim); }

ActionSpec::ActionSpec(std::vector<DimensionSpec> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw std::invalid_argument("action spec needs at least one dimension");
  for (std::size_t d = 0; d < dims_.size(); ++d) {
    const std::string where = "action dim " + std::to_string(d) + ": ";
    if (const auto* disc = std::get_if<DiscreteDim>(&dims_[d])) {
      if (disc->cardinality < 1) throw std::invalid_argument(where + "cardinality must be >= 1");
    } else {
      const auto& cont = std::get<ContinuousDim>(dims_[d]);
      if (!std::isfinite(cont.lo) || !std::isfinite(cont.hi) || !(cont.lo < cont.hi)) {
        throw std::invalid_argument(where + "continuous range requires finite lo < hi");
      }
      if (cont.bins < 2) throw std::invalid_argument(where + "continuous dims need bins >= 2");
    }
    label_space_size_ = checked_mul(label_space_size_, base_of(dims_[d]));
  }
}

std::vector<std::uint64_t> ActionSpec::bases() const {
  std::vector<std::uint64_t> out;
  out.reserve(dims_.size());
  for (const auto& dim : dims_) out.push_back(base_of(dim));
  return out;
}

ActionSpec ActionSpec::with_bins(std::uint64_t bins) const {
  auto dims = dims_;
  for (auto& dim : dims) {
    if (auto* cont = std::get_if<ContinuousDim>(&dim)) cont->bins = bins;
  }
  return ActionSpec(std::move(dims));
}

double normalize_continuous(double value, double lo, double hi) {
  if (!std::isfinite(value)) throw std::invalid_argument("normalize_continuous: non-finite value");
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw std::invalid_argument("normalize_continuous: requires finite lo < hi");
  }
  const double u = (value - lo) / (hi - lo);
  return std::clamp(u, 0.0, 1.0);
}

std::uint64_t discretize_dimension(double u, std::uint64_t bins) {
  if (bins < 2) throw std::invalid_argument("discretize_dimension: bins must be >= 2");
  if (!(u >= 0.0 && u <= 1.0)) {
    throw std::invalid_argument("discretize_dimension: value outside [0, 1]; normalize first");
  }
  // std::round rounds halves away from zero.
  const double scaled = std::round(u * static_cast<double>(bins - 1));
  return std::min(static_cast<std::uint64_t>(scaled), bins - 1);
}

ClassLabel encode_label(const DiscretizedAction& action) {
  if (action.v.size() != action.bases.size()) {
    throw std::invalid_argument("encode_label: digit and base counts differ");
  }
  ClassLabel label = 0;
  std::uint64_t multiplier = 1;
  for (std::size_t d = 0; d < action.v.size(); ++d) {
    if (action.bases[d] < 1) throw std::invalid_argument("encode_label: bases must be positive");
    if (action.v[d] >= action.bases[d]) {
      throw std::invalid_argument("encode_label: digit " + std::to_string(d) + " out of range");
    }
    label += action.v[d] * multiplier;  // < multiplier * bases[d], checked below
    multiplier = checked_mul(multiplier, action.bases[d]);
  }
  return label;
}

DiscretizedAction decode_label(ClassLabel label, const std::vector<std::uint64_t>& bases) {
  std::uint64_t size = 1;
  for (auto b : bases) {
    if (b < 1) throw std::invalid_argument("decode_label: bases must be positive");
    size = checked_mul(size, b);
  }
  if (label >= size) throw std::out_of_range("decode_label: label outside label space");
  DiscretizedAction out{std::vector<std::uint64_t>(bases.size()), bases};
  for (std::size_t d = 0; d < bases.size(); ++d) {
    out.v[d] = label % bases[d];
    label /= bases[d];
  }
  return out;
}

DiscretizedAction discretize_action(const Eigen::Ref<const Eigen::VectorXd>& action,
                                    const ActionSpec& spec) {
  if (static_cast<std::size_t>(action.size()) != spec.size()) {
    throw std::invalid_argument("action has " + std::to_string(action.size()) +
                                " dims, spec expects " + std::to_string(spec.size()));
  }
  DiscretizedAction out{std::vector<std::uint64_t>(spec.size()), spec.bases()};
  for (std::size_t d = 0; d < spec.size(); ++d) {
    const double value = action(static_cast<Eigen::Index>(d));
    if (const auto* disc = std::get_if<DiscreteDim>(&spec[d])) {
      if (!std::isfinite(value) || value < 0.0 || value != std::floor(value) ||
          value >= static_cast<double>(disc->cardinality)) {
        throw std::invalid_argument("discrete action dim " + std::to_string(d) +
                                    " holds invalid value " + std::to_string(value));
      }
      out.v[d] = static_cast<std::uint64_t>(value);
    } else {
      const auto& cont = std::get<ContinuousDim>(spec[d]);
      out.v[d] = discretize_dimension(normalize_continuous(value, cont.lo, cont.hi), cont.bins);
    }
  }
  return out;
}

std::vector<ClassLabel> batch_labels(const Eigen::Ref<const Eigen::MatrixXd>& actions,
                                     const ActionSpec& spec) {
  if (static_cast<std::size_t>(actions.cols()) != spec.size()) {
    throw std::invalid_argument("action batch has " + std::to_string(actions.cols()) +
                                " columns, spec expects " + std::to_string(spec.size()));
  }
  std::vector<ClassLabel> labels(static_cast<std::size_t>(actions.rows()));
  for (Eigen::Index i = 0; i < actions.rows(); ++i) {
    labels[static_cast<std::size_t>(i)] = encode_label(discretize_action(actions.row(i).transpose(), spec));
  }
  return labels;
}

}  // namespace scil
