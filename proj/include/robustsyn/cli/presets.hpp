#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace robustsyn::cli {

// A named set of flag defaults for one command. Keys are flag names without
// the leading dashes.
//
// origin "reference-table": hyperparameters copied from the published
// experiment tables for full-size datasets.
// origin "desk-calibrated": values chosen for the small synthetic datasets that
// ship with the tool, measured by the acceptance harness.
struct Preset {
  std::string name;
  std::string command;
  std::string origin;
  std::string description;
  nlohmann::json values;
};

const std::vector<Preset>& all_presets();
// Throws InvalidArgument for unknown names or a command mismatch.
const Preset& find_preset(const std::string& name, const std::string& command);
// The preset a command uses when --preset is not given.
const Preset& default_preset(const std::string& command);

}  // namespace robustsyn::cli
