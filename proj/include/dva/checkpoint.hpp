#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "dva/adam.hpp"
#include "dva/network.hpp"
#include "dva/tensor.hpp"

namespace dva {

// Binary layout, all integers little-endian:
//   "DVA3" | u32 version | u32 tensor count |
//   per tensor: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
//               row-major f32 values.
// Optimizer moments are stored as "adam.m.<param>" / "adam.v.<param>".
// "meta.config" is a rank-1 tensor holding one byte of key=value text per
// element.
inline constexpr char kCheckpointMagic[4] = {'D', 'V', 'A', '3'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kMetaRecord = "meta.config";

using Metadata = std::map<std::string, std::string>;

struct Checkpoint {
  ParamSet<float> params;
  std::optional<AdamState<float>> adam;
  Metadata meta;

  /// Architecture recorded in the metadata (view, n_actions and sizes).
  ArchSpec arch() const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Serializes the architecture into metadata keys.
void store_arch(const ArchSpec& arch, Metadata& meta);

std::string metadata_text(const Metadata& meta);
Metadata parse_metadata(const std::string& text);

}  // namespace dva
