#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "cflow/flow/model.hpp"
#include "cflow/numerics/adam.hpp"
#include "cflow/numerics/rng.hpp"
#include "cflow/training/config_text.hpp"

namespace cflow {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything besides the model needed to resume a run.
struct TrainingState {
  AdamState adam;
  std::uint64_t step = 0;
  Pcg32::State rng;
};

struct Checkpoint {
  ConfigMap config;  // model.* keys plus whatever the run recorded
  std::unique_ptr<FlowModel> model;
  TrainingState state;
};

// Layout: "CFLW", u32 version, then u64-length-prefixed sections (config
// text, parameters, batch-norm running stats, optimizer state, RNG state),
// then a CRC32 of every preceding byte. Integers and reals are little-endian.
std::vector<std::uint8_t> encode_checkpoint(const FlowModel& model, const TrainingState& state,
                                            const ConfigMap& extra_config = {});
/// Verifies the checksum before anything else, then the format version.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Atomic: writes a temporary sibling, then renames it over `path`.
void save_checkpoint(const std::filesystem::path& path, const FlowModel& model, const TrainingState& state,
                     const ConfigMap& extra_config = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cflow
