#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace scil {

/// A discrete action dimension holding integer values in [0, cardinality).
struct DiscreteDim {
  std::uint64_t cardinality = 1;
  bool operator==(const DiscreteDim&) const = default;
};

/// A continuous action dimension on [lo, hi], discretized into `bins` bins
/// when building contrastive labels.
struct ContinuousDim {
  double lo = 0.0;
  double hi = 1.0;
  std::uint64_t bins = 5;
  bool operator==(const ContinuousDim&) const = default;
};

using DimensionSpec = std::variant<DiscreteDim, ContinuousDim>;

/// Per-dimension layout of an action space. Construction validates every
/// dimension and the size of the resulting label space.
class ActionSpec {
 public:
  ActionSpec() = default;
  explicit ActionSpec(std::vector<DimensionSpec> dims);

  const std::vector<DimensionSpec>& dims() const { return dims_; }
  std::size_t size() const { return dims_.size(); }
  const DimensionSpec& operator[](std::size_t d) const { return dims_[d]; }

  /// Radix of each dimension: cardinality for discrete dims, bins for
  /// continuous ones.
  std::vector<std::uint64_t> bases() const;
  std::uint64_t label_space_size() const { return label_space_size_; }

  /// Copy of this spec with every continuous dimension set to `bins` bins.
  ActionSpec with_bins(std::uint64_t bins) const;

  bool operator==(const ActionSpec& other) const { return dims_ == other.dims_; }

 private:
  std::vector<DimensionSpec> dims_;
  std::uint64_t label_space_size_ = 1;
};

bool is_discrete(const DimensionSpec& dim);

/// Discretized action digits with their per-position bases.
struct DiscretizedAction {
  std::vector<std::uint64_t> v;
  std::vector<std::uint64_t> bases;
};

using ClassLabel = std::uint64_t;

/// Maps value from [lo, hi] onto [0, 1], clamping out-of-range values.
double normalize_continuous(double value, double lo, double hi);

/// round(u * (bins - 1)) with halves rounded away from zero.
std::uint64_t discretize_dimension(double u, std::uint64_t bins);

/// Mixed-radix encoding: L = sum_d v_d * prod_{k<d} bases_k.
ClassLabel encode_label(const DiscretizedAction& action);

/// Inverse of encode_label.
DiscretizedAction decode_label(ClassLabel label, const std::vector<std::uint64_t>& bases);

/// Discretize one raw action row (length D) under `spec`.
DiscretizedAction discretize_action(const Eigen::Ref<const Eigen::VectorXd>& action,
                                    const ActionSpec& spec);

/// One label per row of an N x D raw action batch. The actions themselves are
/// never modified.
std::vector<ClassLabel> batch_labels(const Eigen::Ref<const Eigen::MatrixXd>& actions,
                                     const ActionSpec& spec);

}  // namespace scil
