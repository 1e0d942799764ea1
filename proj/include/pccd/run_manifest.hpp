#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pccd {

inline constexpr const char* kVersion = "1.0.0";

// Record of one CLI run: enough to rerun it and get the same outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;  // argv after the program name
  std::map<std::string, std::string> inputs;  // role -> path (config, data, checkpoint)
  std::map<std::string, std::uint64_t> seeds;
  std::string effective_config;  // key = value text after all overrides
  std::string output_directory;
  std::vector<std::string> outputs;  // file names under output_directory
  std::string version = kVersion;

  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

std::string run_manifest_to_json(const RunManifest& manifest);
RunManifest run_manifest_from_json(const std::string& text);
void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_run_manifest(const std::filesystem::path& path);

}  // namespace pccd
