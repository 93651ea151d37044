#pragma once

#include "tranclr/config.hpp"
#include "tranclr/trainer.hpp"

#include <filesystem>
#include <string>

namespace tranclr {

// "TRCK", u16 version, u64 meta length, UTF-8 JSON meta, then f64 online,
// momentum and optimizer-velocity parameters, then the queue (u32 capacity,
// dim, head, fill, f64 storage), all little-endian.
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::string layout;
  int joints = 0;
  std::string rng_state;  // shuffle stream for the next epoch
  TrainState state;
};

void save_checkpoint(const std::filesystem::path& file, const RunConfig& config, const std::string& layout,
                     const JointGraph& graph, const TrainState& state, const std::string& rng_state);

/// Throws ParseError on a malformed file and IngestionError if it cannot be opened.
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace tranclr
