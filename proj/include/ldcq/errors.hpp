#pragma once

#include <stdexcept>
#include <string>

namespace ldcq {

// Bad configuration values (unknown env/layout/key, invalid ranges).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A pipeline stage was asked to run before its upstream artifact exists.
struct MissingArtifact : std::runtime_error {
  MissingArtifact(const std::string& stage, const std::string& needs,
                  const std::string& path)
      : std::runtime_error(stage + " requires the " + needs + " artifact (missing: " +
                           path + "); run " + needs + " first"),
        stage_name(stage),
        missing_stage(needs) {}
  std::string stage_name;
  std::string missing_stage;
};

// Slicing produced no usable windows (horizon exceeds every episode).
struct EmptySlice : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ldcq
