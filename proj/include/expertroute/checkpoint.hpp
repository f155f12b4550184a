#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "expertroute/router.hpp"

namespace expertroute {

/// "ERCK", the first four bytes of every checkpoint.
inline constexpr std::uint8_t kCheckpointMagic[4] = {'E', 'R', 'C', 'K'};

/// Encodes a router into the checkpoint container (layout in docs/formats.md).
std::vector<std::uint8_t> encode_checkpoint(const RouterModel& model);

/// Inverse of encode_checkpoint. Throws CheckpointError on bad magic, version
/// mismatch, truncation or checksum failure.
RouterModel decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const RouterModel& model, const std::filesystem::path& path);
RouterModel load_checkpoint(const std::filesystem::path& path);

}  // namespace expertroute
