#include "pccd/run_manifest.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace pccd {

std::string run_manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json doc;
  doc["tool"] = "pccd";
  doc["version"] = m.version;
  doc["command"] = m.command;
  doc["arguments"] = m.arguments;
  doc["inputs"] = m.inputs;
  doc["seeds"] = m.seeds;
  doc["effective_config"] = m.effective_config;
  doc["output_directory"] = m.output_directory;
  doc["outputs"] = m.outputs;
  return doc.dump(2) + "\n";
}

RunManifest run_manifest_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    RunManifest m;
    m.version = doc.at("version").get<std::string>();
    m.command = doc.at("command").get<std::string>();
    m.arguments = doc.at("arguments").get<std::vector<std::string>>();
    m.inputs = doc.at("inputs").get<std::map<std::string, std::string>>();
    m.seeds = doc.at("seeds").get<std::map<std::string, std::uint64_t>>();
    m.effective_config = doc.at("effective_config").get<std::string>();
    m.output_directory = doc.at("output_directory").get<std::string>();
    m.outputs = doc.at("outputs").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed run manifest: ") + e.what());
  }
}

void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run manifest " + path.string());
  out << run_manifest_to_json(manifest);
}

RunManifest read_run_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run manifest " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return run_manifest_from_json(text.str());
}

}  // namespace pccd
