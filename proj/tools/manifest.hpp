// Run manifests: enough information next to every output to re-run the
// command that produced it.
#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace anpmn::tools {

inline constexpr const char* kToolVersion = "1.0.0";

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

struct Manifest {
  std::string command;
  std::string config_path;  ///< empty when defaults were used
  nlohmann::json config;    ///< effective configuration (flat keys)
  std::uint64_t seed = 0;
  std::vector<std::string> argv;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  nlohmann::json extra = nlohmann::json::object();
};

/// Writes `dir`/manifest.json with hashes of every input and output file.
std::string write_manifest(const Manifest& m, const std::string& dir);

}  // namespace anpmn::tools
