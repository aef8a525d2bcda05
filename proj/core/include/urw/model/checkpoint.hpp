#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "urw/model/rewriter.hpp"

namespace urw::model {

struct NamedBlob {
  std::string name;
  std::vector<double> values;
};

struct CheckpointInfo {
  std::uint64_t vocab_hash = 0;
  std::size_t step = 0;
  std::size_t epoch = 0;
  double valid_loss = std::numeric_limits<double>::infinity();
  // Auxiliary state stored next to the parameters (optimizer moments).
  std::vector<NamedBlob> extra;
};

// Layout: "UTRWCKPT", u32 version, u64 header size, JSON header (config,
// vocabulary hash, counters, blob index), then every blob as little-endian
// float64 in index order.
void save_checkpoint(const std::filesystem::path& path, const RewriterModel& model,
                     const CheckpointInfo& info);

struct LoadedCheckpoint {
  RewriterModel model;
  CheckpointInfo info;
};

// Throws IoError on unreadable or malformed files and DataError when the
// vocabulary hash differs from `vocab_hash`.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t vocab_hash);

// As above and additionally rejects a stored config that differs from
// `expected` in anything but the dropout rate (ConfigError).
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t vocab_hash,
                                 const ModelConfig& expected);

// Config stored in a checkpoint, without loading parameters.
ModelConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace urw::model
