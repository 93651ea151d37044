#pragma once

#include "tranclr/skeleton.hpp"

#include <cstdint>
#include <vector>

namespace tranclr {

/// Parameters of the motion-family prior. Class templates depend only on
/// `family_seed` and the shift/scale knobs, so train and test corpora drawn
/// with different sample seeds share the same classes.
struct SynthOptions {
  std::uint64_t family_seed = 20240611;
  double frequency_shift = 0.0;  // added to every class frequency (cycles per sequence)
  double amplitude_scale = 1.0;
  double noise = 0.01;
  // Per-sample nuisance factors shared by all classes.
  double view_deg = 0.0;         // rotation about the vertical axis, uniform in +-view_deg
  double translation = 0.0;      // root offset, uniform in +-translation per axis
  double sway_amplitude = 0.0;   // whole-body oscillation with random direction and frequency
};

struct SyntheticCorpus {
  std::vector<SkeletonSequence> sequences;
  std::vector<int> labels;
};

/// Parametric per-part sinusoidal action families on the synthetic layout.
/// Sample k has label k % n_classes. Deterministic in all arguments.
SyntheticCorpus synth_generate(int n_classes, int n_per_class, int joints, int frames, std::uint64_t seed,
                               const SynthOptions& options = {});

}  // namespace tranclr
