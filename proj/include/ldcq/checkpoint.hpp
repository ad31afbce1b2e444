#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "ldcq/params.hpp"

namespace ldcq::nn {

// Versioned JSON container of named parameter bundles plus free-form
// metadata. Doubles are serialized with shortest round-trip formatting, so a
// save/load cycle is bit-exact.
struct Checkpoint {
  std::map<std::string, ParameterBundle> bundles;
  nlohmann::json meta;
};

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

nlohmann::json bundle_to_json(const ParameterBundle& b);
ParameterBundle bundle_from_json(const nlohmann::json& j);

}  // namespace ldcq::nn
