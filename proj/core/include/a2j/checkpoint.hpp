#pragma once

// Versioned binary checkpoints: "A2JC", version, value width, step, the
// resolved config text, then every named parameter with its shape.

#include <cstdint>
#include <filesystem>
#include <string>

#include "a2j/nn.hpp"

namespace a2j {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint32_t value_bytes = 0;  // 4 = float, 8 = double
  std::uint64_t step = 0;
  std::string config_text;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamList<T>& params,
                     const std::string& config_text, std::uint64_t step);

// Reads the header only.
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

// Loads values into `params` matched by name. Throws IoError on a missing
// name, a shape mismatch, extra entries or a different value width.
template <typename T>
CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParamList<T>& params);

}  // namespace a2j
