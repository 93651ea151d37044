#pragma once

#include "tranclr/atac.hpp"
#include "tranclr/encoder.hpp"
#include "tranclr/mgmc.hpp"
#include "tranclr/skeleton.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace tranclr {

enum class Profile { paper, desk };
Profile parse_profile(const std::string& name);
std::string to_string(Profile profile);

enum class Objective { tranclr, infonce };

struct TrainConfig {
  int epochs = 300;
  double lr = 0.1;
  int lr_drop_epoch = 250;
  double lr_drop_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 128;
  std::uint64_t seed = 1;
  Profile profile = Profile::paper;
  int checkpoint_every = 10;  // epochs; the final epoch is always written
  Objective objective = Objective::tranclr;
  bool enable_intra = true;
  bool enable_inter = true;
  bool enable_cross = true;
  InterPairing inter_pairing = InterPairing::derangement;

  /// Learning rate in effect during `epoch` (0-based).
  double lr_at(int epoch) const { return epoch >= lr_drop_epoch ? lr * lr_drop_factor : lr; }
};

enum class TransformKind { rotate, shear, crop_resize, jitter };
std::string to_string(TransformKind kind);

/// One view transform. `magnitude` is the maximum rotation in degrees, the
/// maximum shear coefficient, or the jitter standard deviation; crop_resize uses
/// [range_lo, range_hi] as the kept fraction of valid frames.
struct ViewTransform {
  TransformKind kind = TransformKind::rotate;
  double probability = 1.0;
  double magnitude = 0.0;
  double range_lo = 0.0;
  double range_hi = 0.0;
};

struct AugmentationPolicy {
  std::vector<ViewTransform> transforms;  // applied in order
};

enum class RetrievalSpace { backbone, projection };

struct ProbeConfig {
  int epochs = 100;
  double lr = 0.1;
  int lr_drop_epoch = 80;
  double lr_drop_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 128;
  std::uint64_t seed = 1;
};

struct EvalConfig {
  int n_bins = 15;
  RetrievalSpace retrieval_space = RetrievalSpace::backbone;
  ProbeConfig probe;
};

/// Fully resolved run configuration.
struct RunConfig {
  TrainConfig train;
  EncoderConfig encoder;
  double ema = 0.999;
  AtacParams atac;
  int queue_capacity = 65536;
  int softalign_k = 8192;
  double tau_q = 0.1;
  double tau_k = 0.05;
  double infonce_tau = 0.07;
  AugmentationPolicy augment;
  EvalConfig eval;
  StreamKind stream = StreamKind::joint;
  bool deterministic_log = false;

  /// Canonical JSON text the struct was built from (sorted keys).
  std::string json;
  /// FNV-1a 64 of `json`, lowercase hex.
  std::string hash;
};

/// Default configuration tree for a profile, as JSON text.
std::string default_config_json(Profile profile);

/// Layers: profile defaults, then the config file (if any), then dotted
/// key=value overrides. Unknown keys, type mismatches and invariant violations
/// are collected and reported together in one ConfigError.
RunConfig resolve_config(Profile profile, const std::filesystem::path& config_file,
                         const std::vector<std::pair<std::string, std::string>>& overrides);

/// Rebuilds a config from its canonical JSON (e.g. read back from a checkpoint),
/// optionally applying dotted overrides on top.
RunConfig config_from_json(const std::string& json,
                           const std::vector<std::pair<std::string, std::string>>& overrides = {});

std::string fnv1a_hex(const std::string& bytes);

}  // namespace tranclr
