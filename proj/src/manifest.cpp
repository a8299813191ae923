#include "cgnnse/manifest.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cgnnse/errors.hpp"
#include "cgnnse/hash.hpp"

namespace cgnnse::cli {

using nlohmann::json;

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open for hashing: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a64(buf.str());
}

RunManifest::RunManifest(std::string command, std::string config_json)
    : command_(std::move(command)), config_json_(std::move(config_json)) {}

void RunManifest::add_seed(const std::string& name, std::uint64_t value) {
  seeds_.emplace_back(name, value);
}

void RunManifest::add_input(const std::string& role, const std::string& path) {
  inputs_.push_back({role, path, hash_hex(hash_file(path))});
}

void RunManifest::add_artifact(const std::string& role, const std::string& path) {
  artifacts_.push_back({role, path, hash_hex(hash_file(path))});
}

void RunManifest::write(const std::string& out_dir) const {
  json j;
  j["tool_version"] = kToolVersion;
  j["command"] = command_;
  try {
    j["config"] = json::parse(config_json_);
  } catch (const json::exception&) {
    j["config"] = config_json_;
  }
  json seeds = json::object();
  for (const auto& [name, value] : seeds_) seeds[name] = value;
  j["seeds"] = seeds;
  auto files = [](const std::vector<FileRef>& refs) {
    json arr = json::array();
    for (const FileRef& r : refs) {
      arr.push_back({{"role", r.role}, {"path", r.path}, {"hash", r.hash}});
    }
    return arr;
  };
  j["inputs"] = files(inputs_);
  j["artifacts"] = files(artifacts_);

  std::ofstream out(out_dir + "/manifest.json");
  if (!out) throw InputError("cannot open for writing: " + out_dir + "/manifest.json");
  out << j.dump(2) << "\n";
}

std::vector<std::string> RunManifest::verify(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw InputError("cannot open manifest: " + manifest_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
  std::vector<std::string> mismatches;
  for (const char* section : {"inputs", "artifacts"}) {
    if (!j.contains(section)) continue;
    for (const json& ref : j[section]) {
      const std::string path = ref.at("path").get<std::string>();
      const std::string stored = ref.at("hash").get<std::string>();
      std::string actual;
      try {
        actual = hash_hex(hash_file(path));
      } catch (const InputError&) {
        mismatches.push_back(path + ": missing");
        continue;
      }
      if (actual != stored) mismatches.push_back(path + ": hash mismatch");
    }
  }
  return mismatches;
}

}  // namespace cgnnse::cli
