#include "manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <json.hpp>
#include <sstream>

#include "thermopool/error.hpp"

#ifndef THERMOPOOL_VERSION
#define THERMOPOOL_VERSION "unknown"
#endif

namespace thermopool::cli {

namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 init failed");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return hex.str();
}

fs::path manifest_path(const fs::path& output) {
  fs::path p = output;
  if (p.filename().empty()) p = p.parent_path();  // trailing slash
  p += ".manifest.json";
  return p;
}

namespace {

std::string iso_utc(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void digest_into(nlohmann::json& out, const fs::path& input) {
  if (fs::is_directory(input)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(input)) {
      if (e.is_regular_file() && e.path().extension() != ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out[f.string()] = sha256_file(f);
  } else {
    out[input.string()] = sha256_file(input);
  }
}

}  // namespace

void RunManifest::write_for(const std::vector<fs::path>& outputs) const {
  nlohmann::json j;
  j["command"] = command;
  j["argv"] = argv;
  j["flags"] = flags;
  nlohmann::json digests = nlohmann::json::object();
  for (const auto& in : inputs) digest_into(digests, in);
  j["input_sha256"] = digests;
  j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
  j["version"] = THERMOPOOL_VERSION;
  j["start_time"] = iso_utc(start);
  j["end_time"] = iso_utc(end);
  for (const auto& out : outputs) {
    nlohmann::json k = j;
    k["output"] = out.string();
    std::ofstream f(manifest_path(out));
    if (!f) throw Error(ErrorCode::FileNotFound, "cannot write manifest for " + out.string());
    f << k.dump(2) << '\n';
  }
}

}  // namespace thermopool::cli
