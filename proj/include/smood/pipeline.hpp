#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>

#include "smood/config.hpp"
#include "smood/error.hpp"

namespace smood {

inline constexpr std::string_view kToolVersion = "smood 1.0.0";

/// A stage input is absent or was changed after the stage that produced it.
class MissingPrerequisite : public Error {
 public:
  using Error::Error;
};

/// Another process holds the run directory.
class RunLocked : public Error {
 public:
  using Error::Error;
};

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Exclusive ownership of a run directory via an O_EXCL lockfile.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct ArtifactRecord {
  std::string sha256;
  std::string stage;
  bool deterministic = true;  ///< false for files holding wall-clock measurements
};

struct RunManifest {
  std::string tool_version{kToolVersion};
  std::string config_hash;
  std::map<std::string, ArtifactRecord> artifacts;  ///< keyed by file name inside the run dir
  std::map<std::string, double> stage_seconds;

  /// Digests of deterministic artifacts only.
  std::map<std::string, std::string> deterministic_digests() const;

  static RunManifest load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;
};

/// Stage commands. Each owns the run directory for its duration, checks its
/// prerequisites, writes its artifacts and records them in manifest.json.
void cmd_doe(const PipelineConfig& config, const std::filesystem::path& out);
void cmd_train(const PipelineConfig& config, const std::filesystem::path& out);
void cmd_profile(const PipelineConfig& config, const std::filesystem::path& out);
void cmd_label(const PipelineConfig& config, const std::filesystem::path& out);
void cmd_detector(const PipelineConfig& config, const std::filesystem::path& out);
void cmd_hybrid(const PipelineConfig& config, const std::filesystem::path& out);
void cmd_report(const PipelineConfig& config, const std::filesystem::path& out);
/// Every stage in order.
void cmd_run(const PipelineConfig& config, const std::filesystem::path& out);

}  // namespace smood
