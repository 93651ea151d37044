#include "tranclr/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace tranclr {

Eigen::Matrix3d rotation_xyz(double ax, double ay, double az) {
  const Eigen::Matrix3d rx = Eigen::AngleAxisd(ax, Eigen::Vector3d::UnitX()).toRotationMatrix();
  const Eigen::Matrix3d ry = Eigen::AngleAxisd(ay, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(az, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return rz * ry * rx;
}

SkeletonSequence apply_linear(const SkeletonSequence& seq, const Eigen::Matrix3d& map) {
  if (seq.channels() != 3) throw std::invalid_argument("spatial transforms need 3 coordinate channels");
  Eigen::MatrixXd out = map * seq.data();
  return SkeletonSequence(std::move(out), seq.frames(), seq.joints(), seq.persons(), seq.valid_frames(),
                          seq.graph());
}

SkeletonSequence crop_resize(const SkeletonSequence& seq, int start, int length) {
  return resize_window(seq, start, length, seq.frames());
}

namespace {

double symmetric(Rng& rng, double bound) { return (2.0 * uniform01(rng) - 1.0) * bound; }

}  // namespace

SkeletonSequence augment_view(const SkeletonSequence& seq, const AugmentationPolicy& policy, Rng& rng) {
  SkeletonSequence view = seq;
  for (const ViewTransform& tf : policy.transforms) {
    // The gate is always drawn so the stream layout does not depend on outcomes.
    const bool fire = uniform01(rng) < tf.probability;
    switch (tf.kind) {
      case TransformKind::rotate: {
        const double bound = tf.magnitude * std::numbers::pi / 180.0;
        const double ax = symmetric(rng, bound), ay = symmetric(rng, bound), az = symmetric(rng, bound);
        if (fire) view = apply_linear(view, rotation_xyz(ax, ay, az));
        break;
      }
      case TransformKind::shear: {
        Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c)
            if (r != c) s(r, c) = symmetric(rng, tf.magnitude);
        if (fire) view = apply_linear(view, s);
        break;
      }
      case TransformKind::crop_resize: {
        const double ratio = tf.range_lo + (tf.range_hi - tf.range_lo) * uniform01(rng);
        const double offset = uniform01(rng);
        const int valid = view.valid_frames();
        if (!fire || valid < 2) break;
        const int length = std::clamp(static_cast<int>(std::lround(ratio * valid)), 2, valid);
        const int start = std::min(valid - length, static_cast<int>(offset * (valid - length + 1)));
        view = crop_resize(view, start, length);
        break;
      }
      case TransformKind::jitter: {
        if (!fire || tf.magnitude == 0.0) break;
        std::normal_distribution<double> noise(0.0, tf.magnitude);
        Eigen::MatrixXd data = view.data();
        for (int p = 0; p < view.persons(); ++p)
          for (int t = 0; t < view.valid_frames(); ++t)
            for (int v = 0; v < view.joints(); ++v)
              for (int c = 0; c < view.channels(); ++c) data(c, view.column(t, v, p)) += noise(rng);
        view = SkeletonSequence(std::move(data), view.frames(), view.joints(), view.persons(), view.valid_frames(),
                                view.graph());
        break;
      }
    }
  }
  return view;
}

}  // namespace tranclr
