#ifndef THERMOPOOL_TOOLS_MANIFEST_HPP
#define THERMOPOOL_TOOLS_MANIFEST_HPP

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace thermopool::cli {

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Provenance record written beside each output as `<output>.manifest.json`.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> flags;
  std::vector<std::filesystem::path> inputs;  // files or directories
  std::optional<std::uint64_t> seed;
  std::chrono::system_clock::time_point start;
  std::chrono::system_clock::time_point end;

  /// Digests every input (directories file by file, sorted) and writes the
  /// manifest for each output.
  void write_for(const std::vector<std::filesystem::path>& outputs) const;
};

std::filesystem::path manifest_path(const std::filesystem::path& output);

}  // namespace thermopool::cli

#endif  // THERMOPOOL_TOOLS_MANIFEST_HPP
