#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ftpg/experiment.hpp"
#include "ftpg/parameter_set.hpp"

namespace ftpg {

/// One documented configuration key. `set` throws ConfigError on a value it
/// cannot parse; `get` prints a value that `set` reads back exactly.
struct ConfigKey {
  std::string_view name;
  std::string_view doc;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

/// All keys, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Flat `key = value` text; blank lines and lines starting with '#' are
/// ignored. Overrides are `key=value` strings applied after the text. The
/// result is finalized. Errors are ConfigError naming the key and the line
/// ("<source>:<line>" or "--set #<n>").
ExperimentConfig parse_config(std::string_view text, std::span<const std::string> overrides = {},
                              std::string_view source = "<config>");

/// Reads the file (IoError if missing), then parses it.
ExperimentConfig parse_config_file(const std::filesystem::path& path, std::span<const std::string> overrides = {});

/// Every key as `key=value`, one per line, in key order. Parsing the echo
/// reproduces the config.
std::string config_echo(const ExperimentConfig& config);

struct Checkpoint {
  ParameterSet params;
  std::string config_text;
  std::uint32_t round = 0;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const ExperimentConfig& config,
                     std::uint32_t round);

/// Throws FormatError (with byte offset) on any damage. Nothing is returned
/// on failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// As above, and additionally requires the translator schema of `config`;
/// a mismatch is a FormatError at the offset of the offending tensor.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ExperimentConfig& config);

}  // namespace ftpg
