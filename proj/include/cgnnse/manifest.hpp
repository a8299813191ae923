#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cgnnse::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Record of one CLI run: command, fully resolved configuration, seeds and
/// content hashes of every input and artifact. Exactly one manifest.json is
/// written per run directory; a run is reproducible from it alone.
class RunManifest {
public:
  RunManifest(std::string command, std::string config_json);

  void add_seed(const std::string& name, std::uint64_t value);
  /// Records an input file (content-hashed immediately).
  void add_input(const std::string& role, const std::string& path);
  /// Records a produced artifact (content-hashed immediately; call after
  /// the file is written).
  void add_artifact(const std::string& role, const std::string& path);

  void write(const std::string& out_dir) const;

  /// Re-hashes every referenced file; returns a list of mismatches (empty
  /// when everything verifies).
  static std::vector<std::string> verify(const std::string& manifest_path);

private:
  struct FileRef {
    std::string role;
    std::string path;
    std::string hash;
  };
  std::string command_;
  std::string config_json_;
  std::vector<std::pair<std::string, std::uint64_t>> seeds_;
  std::vector<FileRef> inputs_;
  std::vector<FileRef> artifacts_;
};

std::uint64_t hash_file(const std::string& path);

}  // namespace cgnnse::cli
