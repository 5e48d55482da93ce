#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scan/config.hpp"
#include "scan/memory.hpp"
#include "scan/model.hpp"

namespace scan {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  int format_version = kCheckpointFormatVersion;
  int epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::string method = "scan";  // scan | baseline | no_purity
  Shape sample_shape;
  int n_classes = 0;
  int n_clusters = 0;
};

std::string serialize_meta(const CheckpointMeta& meta);
CheckpointMeta parse_meta(const std::string& text);

/// Rebuilds a freshly initialized network for the given config and data
/// geometry. Initialization draws from SeededRng(cfg.seed).substream("init").
ScanNet<double> build_network(const RunConfig& cfg, const Shape& sample_shape, int n_classes, int n_clusters);

/// Everything persisted in a checkpoint directory. Log and occupancy rows
/// are stored verbatim so a resumed run re-emits them unchanged.
struct CheckpointState {
  CheckpointMeta meta;
  RunConfig config;
  std::optional<MemoryBank> memory;
  std::vector<std::string> log_rows;
  std::vector<std::string> occupancy_rows;
};

/// Writes dir/{meta.txt, config.txt, params/*.sct, memory/*.sct, log.csv,
/// occupancy.csv}. Tensors are stored as f64 so a reload is bit-exact.
/// The directory is written under a temporary name and swapped in.
void save_checkpoint(const std::filesystem::path& dir, const CheckpointState& state, ScanNet<double>& net);

struct LoadedCheckpoint {
  CheckpointState state;
  ScanNet<double> net;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// Exclusive `.lock` file in a run directory; removed on destruction.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace scan
