#include "tranclr/synth.hpp"

#include "tranclr/random.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tranclr {

namespace {

struct PartMotion {
  double frequency;
  double amplitude;
  double phase;
  Eigen::Vector3d direction;
};

Eigen::Vector3d random_direction(Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Vector3d d;
  do {
    d << gauss(rng), gauss(rng), gauss(rng);
  } while (d.norm() < 1e-6);
  return d.normalized();
}

std::vector<std::array<PartMotion, BodyPartition::kParts>> class_templates(int n_classes, const SynthOptions& opt) {
  Rng rng = make_stream(opt.family_seed, {0xfa1});
  std::vector<std::array<PartMotion, BodyPartition::kParts>> out(n_classes);
  for (auto& cls : out) {
    for (auto& part : cls) {
      part.frequency = 1.0 + uniform_int(rng, 0, 2) + opt.frequency_shift;
      part.amplitude = opt.amplitude_scale * (0.05 + 0.3 * uniform01(rng));
      part.phase = 2.0 * std::numbers::pi * uniform01(rng);
      part.direction = random_direction(rng);
    }
  }
  return out;
}

}  // namespace

SyntheticCorpus synth_generate(int n_classes, int n_per_class, int joints, int frames, std::uint64_t seed,
                               const SynthOptions& options) {
  if (n_classes <= 0 || n_per_class <= 0 || joints <= 0 || frames <= 0)
    throw std::invalid_argument("synthetic generator counts must be positive");
  const JointGraph graph = layout_graph(kLayoutSynthetic, joints);
  const BodyPartition partition = default_partition(joints, kLayoutSynthetic);
  const Eigen::MatrixXd rest = synthetic_rest_pose(joints);
  const auto templates = class_templates(n_classes, options);

  // Position of each joint along its part chain, 1..m, scales the displacement.
  std::vector<int> part_of(joints), depth(joints);
  for (int p = 0; p < BodyPartition::kParts; ++p)
    for (std::size_t k = 0; k < partition.part(p).size(); ++k) {
      part_of[partition.part(p)[k]] = p;
      depth[partition.part(p)[k]] = static_cast<int>(k) + 1;
    }
  const double m = static_cast<double>(joints / 5);

  SyntheticCorpus corpus;
  corpus.sequences.reserve(static_cast<std::size_t>(n_classes) * n_per_class);
  const int total = n_classes * n_per_class;
  for (int k = 0; k < total; ++k) {
    const int label = k % n_classes;
    Rng rng = make_stream(seed, {static_cast<std::uint64_t>(k)});
    std::normal_distribution<double> noise(0.0, options.noise);
    const double phase_shift = 2.0 * std::numbers::pi * uniform01(rng);
    const double speed = 0.85 + 0.3 * uniform01(rng);
    const double body_scale = 0.9 + 0.2 * uniform01(rng);
    std::array<double, BodyPartition::kParts> gain;
    for (auto& g : gain) g = 0.8 + 0.4 * uniform01(rng);
    const double yaw = (2.0 * uniform01(rng) - 1.0) * options.view_deg * std::numbers::pi / 180.0;
    const Eigen::Matrix3d view = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()).toRotationMatrix();
    Eigen::Vector3d offset;
    for (int c = 0; c < 3; ++c) offset(c) = (2.0 * uniform01(rng) - 1.0) * options.translation;
    const Eigen::Vector3d sway_dir = random_direction(rng);
    const double sway_freq = 0.5 + 2.5 * uniform01(rng);
    const double sway_phase = 2.0 * std::numbers::pi * uniform01(rng);
    const double sway_amp = options.sway_amplitude * uniform01(rng);

    Eigen::MatrixXd data(3, static_cast<Eigen::Index>(frames) * joints);
    for (int t = 0; t < frames; ++t) {
      const double time = static_cast<double>(t) / frames;
      for (int v = 0; v < joints; ++v) {
        const PartMotion& motion = templates[label][part_of[v]];
        const double swing = gain[part_of[v]] * motion.amplitude * (depth[v] / m) *
                             std::sin(2.0 * std::numbers::pi * motion.frequency * speed * time + motion.phase +
                                      phase_shift);
        const double sway = sway_amp * std::sin(2.0 * std::numbers::pi * sway_freq * time + sway_phase);
        Eigen::Vector3d pos =
            view * (body_scale * rest.col(v) + swing * motion.direction + sway * sway_dir) + offset;
        for (int c = 0; c < 3; ++c) data(c, static_cast<Eigen::Index>(t) * joints + v) = pos(c) + noise(rng);
      }
    }
    corpus.sequences.emplace_back(std::move(data), frames, joints, 1, frames, graph);
    corpus.labels.push_back(label);
  }
  return corpus;
}

}  // namespace tranclr
