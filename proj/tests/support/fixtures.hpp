#pragma once

#include "tranclr/random.hpp"
#include "tranclr/skeleton.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <random>
#include <string>

namespace tranclr::testing {

// Gaussian sequence on the synthetic layout; frames past `valid` are zero.
inline SkeletonSequence random_sequence(Rng& rng, int frames, int joints = 10, int persons = 1, int valid = -1) {
  if (valid < 0) valid = frames;
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd data = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(persons) * frames * joints);
  for (int p = 0; p < persons; ++p)
    for (int t = 0; t < valid; ++t)
      for (int v = 0; v < joints; ++v)
        for (int c = 0; c < 3; ++c) data(c, (static_cast<Eigen::Index>(p) * frames + t) * joints + v) = gauss(rng);
  return SkeletonSequence(std::move(data), frames, joints, persons, valid, layout_graph(kLayoutSynthetic, joints));
}

inline SkeletonSequence constant_sequence(double value, int frames, int joints = 10, int persons = 1) {
  Eigen::MatrixXd data = Eigen::MatrixXd::Constant(3, static_cast<Eigen::Index>(persons) * frames * joints, value);
  return SkeletonSequence(std::move(data), frames, joints, persons, frames, layout_graph(kLayoutSynthetic, joints));
}

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tranclr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace tranclr::testing
