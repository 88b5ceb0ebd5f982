#pragma once

#include "hfda/harness.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace hfda {

/// Experiment configuration files: `[section]` headers followed by
/// `key = value` lines; `#` starts a comment. Lists are comma-separated.
/// Unknown keys and malformed values raise UsageError citing the line.
ExperimentConfig parse_config(const std::filesystem::path& path,
                              const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides = {},
                                   const std::string& source = "<config>");

/// Applies one `section.key = value` setting (also the `--set` syntax).
void apply_setting(ExperimentConfig& config, const std::string& dotted_key,
                   const std::string& value);

struct ConfigKey {
  std::string name;  // section.key
  std::string type;
  std::string description;
};

/// Every accepted key, in file order.
const std::vector<ConfigKey>& config_schema();
/// Human-readable listing of config_schema().
std::string config_help();

/// Writes a config that reproduces `config` through parse_config.
std::string format_config(const ExperimentConfig& config);

}  // namespace hfda
