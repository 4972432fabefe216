#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hymad/datagen.hpp"
#include "hymad/model.hpp"
#include "hymad/train.hpp"

namespace hymad::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitCompat = 4,
  kExitNumeric = 5,
};

struct AppConfig {
  datagen::DatasetConfig dataset;
  model::ModelConfig model;  // model.threshold is set from [eval] threshold
  train::TrainConfig train;
  datagen::Split eval_split = datagen::Split::kTest;

  void validate() const;
  /// INI text listing every key; loading it back gives the same config.
  std::string to_ini() const;
  std::uint64_t digest() const;
};

/// One applied key, in the order it was applied.
struct Setting {
  std::string source;  // "file", "env" or "flag"
  std::string key;     // "section.key"
  std::string value;
};

/// Every accepted "section.key", sorted.
std::vector<std::string> config_keys();

/// Parses `value` into cfg. ValidationError naming "section.key" on an
/// unknown key or a malformed value.
void set_value(AppConfig& cfg, const std::string& key, const std::string& value);

using Environment = std::map<std::string, std::string>;

struct LoadedConfig {
  AppConfig config;
  std::vector<Setting> settings;
  std::set<std::string> sections;  // sections touched by the file or env
};

/// Defaults, then the INI file (when given), then HYMAD_<SECTION>_<KEY>
/// variables from `env`. Validation is left to the caller so that flags
/// can still be applied on top.
LoadedConfig load_config(const std::optional<std::filesystem::path>& file,
                         const Environment& env);

Environment process_environment();

struct RunManifest {
  std::string command;
  std::string config_digest;
  std::string dataset_digest;
  std::string tool_version = kToolVersion;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;  // relative to the output directory
  std::vector<Setting> overrides;    // env and flag settings
  std::vector<double> epoch_seconds;  // train only

  std::string to_json() const;
};

/// Runs the command line; never throws. Errors are reported on `err`
/// and mapped to an ExitCode.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
        const Environment& env);

}  // namespace hymad::cli
