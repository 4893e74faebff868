#pragma once

// Plumbing shared by the pro2 subcommands: config-file merging, input
// digests, and all-or-nothing output writing.

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pro2/dataset.hpp"
#include "pro2/error.hpp"

namespace pro2::cli {

/// Bad flag values detected after parsing (exit code 2).
class UsageError : public Error {
public:
  using Error::Error;
};

/// Lowercase hex SHA-256 of a file's bytes.
inline std::string sha256_file(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

/// key=value lines; '#' starts a comment, blank lines are skipped.
inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

/// Appends config-file entries as flags, skipping any flag already given on
/// the command line, so flags > config file > built-in defaults.
inline std::vector<std::string> merge_config(std::vector<std::string> args,
                                             const std::vector<std::string>& boolean_flags) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  auto given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> extra;
  for (const auto& [key, value] : read_config_file(config_path)) {
    if (key == "config" || given(key)) continue;
    if (std::find(boolean_flags.begin(), boolean_flags.end(), key) != boolean_flags.end()) {
      if (value == "true" || value == "1" || value == "yes") extra.push_back("--" + key);
      continue;
    }
    extra.push_back("--" + key);
    extra.push_back(value);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

/// Files staged in memory and published together: each goes to a temporary
/// name first, and the renames happen only after every write succeeded.
class OutputSet {
public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string bytes) { files_.emplace_back(name, std::move(bytes)); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& f : files_) out.push_back(f.first);
    return out;
  }

  void commit() const {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
    std::vector<std::filesystem::path> temps;
    try {
      for (const auto& [name, bytes] : files_) {
        auto tmp = dir_ / ("." + name + ".partial");
        temps.push_back(tmp);
        detail::write_file(tmp.string(), bytes);
      }
    } catch (...) {
      for (const auto& t : temps) std::filesystem::remove(t, ec);
      throw;
    }
    for (std::size_t i = 0; i < files_.size(); ++i) {
      std::filesystem::rename(temps[i], dir_ / files_[i].first, ec);
      if (ec) throw IoError("cannot move output into place: " + (dir_ / files_[i].first).string());
    }
  }

private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

}  // namespace pro2::cli
