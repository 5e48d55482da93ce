#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "scan/config.hpp"

namespace scan {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

struct GlobalOptions {
  std::optional<std::filesystem::path> config_path;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

/// Defaults, then the config file, then --seed.
RunConfig resolve_config(const GlobalOptions& g);

void cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir, bool force, std::ostream& out);

struct PretrainOptions {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  bool baseline = false;
  bool no_purity = false;
  bool resume = false;
  std::optional<int> stop_after;  // simulate an interruption after this epoch
};

/// Method tag and the config actually trained with.
std::string method_tag(const PretrainOptions& opts);
RunConfig effective_config(RunConfig cfg, const PretrainOptions& opts);

void cmd_pretrain(const RunConfig& cfg, const PretrainOptions& opts, bool force, std::ostream& out);

struct EvalOptions {
  std::filesystem::path ckpt_dir;
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> out_dir;  // default ckpt_dir/eval
};

void cmd_eval(const RunConfig& cfg, const EvalOptions& opts, std::ostream& out);

struct AnalyzeOptions {
  std::filesystem::path ckpt_dir;
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> out_dir;  // default ckpt_dir/analysis
};

void cmd_analyze(const RunConfig& cfg, const AnalyzeOptions& opts, std::ostream& out);

/// Parses argv and dispatches; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// UTC time as 2026-01-31T12:00:00Z.
std::string iso_timestamp();

}  // namespace scan
