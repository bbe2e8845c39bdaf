#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/rng.hpp"
#include "prime/version.hpp"

#include <json.hpp>

namespace prime {

// 17 significant digits: enough to round-trip any double exactly.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + p.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

inline uint64_t file_hash(const std::filesystem::path& p) { return fnv1a64(read_file(p)); }

inline std::string hash_hex(uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Content hash of a directory: file names and bytes, in sorted order.
inline std::string dir_hash_hex(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& f : files) {
    mix(f.filename().string());
    mix(read_file(f));
  }
  return hash_hex(h);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// Every CLI run drops one of these next to its outputs: tool version, the
// full flag set, and content hashes of the inputs it consumed.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> flags;
  std::map<std::string, std::string> input_hashes;
  std::vector<std::string> outputs;
};

inline std::filesystem::path write_manifest(const std::filesystem::path& out_dir, const RunManifest& m) {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["command"] = m.command;
  j["flags"] = m.flags;
  j["inputs"] = m.input_hashes;
  j["outputs"] = m.outputs;
  const auto path = out_dir / "manifest.json";
  write_file(path, j.dump(2) + "\n");
  return path;
}

}  // namespace prime
