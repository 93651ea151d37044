#pragma once

#include "tranclr/config.hpp"
#include "tranclr/random.hpp"
#include "tranclr/skeleton.hpp"

#include <Eigen/Dense>

namespace tranclr {

/// Rotation about x, then y, then z, angles in radians.
Eigen::Matrix3d rotation_xyz(double ax, double ay, double az);

/// Applies a 3x3 linear map to every joint coordinate; padding stays zero.
SkeletonSequence apply_linear(const SkeletonSequence& seq, const Eigen::Matrix3d& map);

/// Keeps frames [start, start + length) and resizes them to the full frame count.
SkeletonSequence crop_resize(const SkeletonSequence& seq, int start, int length);

/// One augmented view. Each transform fires with its own probability and draws
/// its parameters from `rng`; every person receives the same draw.
SkeletonSequence augment_view(const SkeletonSequence& seq, const AugmentationPolicy& policy, Rng& rng);

}  // namespace tranclr
