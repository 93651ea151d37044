#pragma once

#include "tranclr/random.hpp"
#include "tranclr/skeleton.hpp"

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace tranclr {

/// Mixing coefficient in [0, 1]; throws std::invalid_argument otherwise.
class MixCoefficient {
 public:
  MixCoefficient() = default;
  explicit MixCoefficient(double value);
  double value() const { return value_; }
  bool operator==(const MixCoefficient&) const = default;

 private:
  double value_ = 0.0;
};

struct SubstitutionParams {
  int s_min = 2;
  int s_max = 3;
  int t_min = 16;
  int t_max = 24;
  double kappa_l = 0.5;
  double kappa_r = 2.0;
};

struct AtacParams {
  SubstitutionParams local;
  double global_prob = 0.5;
  bool enable_global = true;
  bool enable_local = true;
};

/// Parts x frames substitution grid plus the source window it is filled from.
struct SubstitutionMask {
  Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> grid;  // |P| x T
  std::vector<int> parts;  // sorted part indices
  int window_start = 0;
  int window_length = 0;
  int source_start = 0;
  int source_length = 0;

  /// Fraction of ones in the grid.
  double mean() const;
};

enum class AnchorMode { global, local };

struct TransitionalAnchor {
  SkeletonSequence seq;
  MixCoefficient lam;
  AnchorMode mode = AnchorMode::global;
  std::pair<int, int> parents{-1, -1};
};

/// lam * Xi + (1 - lam) * Xj over the common valid range.
TransitionalAnchor global_interpolate(const SkeletonSequence& xi, const SkeletonSequence& xj, MixCoefficient lam);

/// Draws part count, part subset, target window and source window. `total_frames`
/// bounds both windows; the grid has `grid_frames` columns (defaults to total_frames).
/// Throws ConfigError when a range is empty or exceeds its bound.
SubstitutionMask sample_substitution(Rng& rng, const SubstitutionParams& params, int total_frames, int n_parts,
                                     int grid_frames = -1);

/// Xj with the masked (part, frame) cells replaced by Xi's source window resized
/// to the target window length. lam is the grid mean.
TransitionalAnchor local_substitute(const SkeletonSequence& xi, const SkeletonSequence& xj,
                                    const SubstitutionMask& mask, const BodyPartition& partition);

/// Branch selection with an explicit draw p in [0,1): p < global_prob takes the
/// global branch (subject to the enable switches).
TransitionalAnchor atac_with_draw(const SkeletonSequence& xi, const SkeletonSequence& xj, double p, Rng& rng,
                                  const AtacParams& params, const BodyPartition& partition);

/// Equal-probability dynamic anchor selection (with default params).
TransitionalAnchor atac(const SkeletonSequence& xi, const SkeletonSequence& xj, Rng& rng, const AtacParams& params,
                        const BodyPartition& partition);

}  // namespace tranclr
