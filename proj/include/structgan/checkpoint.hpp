#ifndef STRUCTGAN_CHECKPOINT_HPP
#define STRUCTGAN_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>

#include "structgan/config.hpp"
#include "structgan/networks.hpp"

namespace structgan {

struct TrainState;

inline constexpr std::int64_t kCheckpointFormat = 1;

// Self-describing torch archive: format version, serialized config and its
// hash, counters, RNG/sampler/pool state, all four networks and both optimizers.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

// Restores a state built from the same config. Throws when the stored config
// hash differs from state.config.
void load_checkpoint(TrainState& state, const std::filesystem::path& path);

struct CheckpointInfo {
  std::int64_t format = 0;
  ExperimentConfig config;
  std::uint64_t config_hash = 0;
  int epoch = 0;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
};

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

enum class Direction { a2b, b2a };

// Rebuilds one generator from a checkpoint, in eval mode with frozen parameters.
Transformer load_generator(const std::filesystem::path& path, Direction direction = Direction::a2b);

}  // namespace structgan

#endif
