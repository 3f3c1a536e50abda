// Copyright 2026 The fairguide Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Run manifests: a canonical config hash plus per-output digests, written
// next to every command's outputs so reruns are verifiable file by file.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fairguide/common.hpp"
#include "fairguide/version.hpp"

namespace fairguide {

/*!
 * Canonical serialization for hashing: nlohmann objects iterate keys in
 * sorted order and dump() emits no whitespace, so two semantically
 * identical configs (key order, formatting) serialize to the same bytes.
 */
inline std::string canonical_json(const nlohmann::json& j) { return j.dump(); }

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return std::string(buf);
}

/*! FNV-1a digest of a canonicalized config document. */
inline std::string config_hash(const nlohmann::json& config) {
  return hex64(fnv1a64(canonical_json(config)));
}

/*! FNV-1a digest of a file's bytes. */
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "file_digest: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  return hex64(fnv1a64(bytes));
}

struct RunManifest {
  std::string command;
  std::string config_digest;
  std::string tool_version = kVersion;
  std::string timestamp;  // UTC, ISO-8601
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> outputs;  // (file, digest)
};

inline std::string utc_timestamp_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return std::string(buf);
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "run_manifest";
  j["command"] = m.command;
  j["config_hash"] = m.config_digest;
  j["tool"] = kToolName;
  j["tool_version"] = m.tool_version;
  j["timestamp"] = m.timestamp;
  j["seed"] = m.seed;
  nlohmann::json outs = nlohmann::json::object();
  for (const auto& [file, digest] : m.outputs) outs[file] = digest;
  j["outputs"] = std::move(outs);
  return j;
}

/*!
 * Builds and writes <out_dir>/manifest.json covering the listed output
 * files (paths relative to out_dir), digesting each from disk.
 */
inline RunManifest write_manifest(const std::string& out_dir,
                                  const std::string& command,
                                  const nlohmann::json& config,
                                  std::uint64_t seed,
                                  const std::vector<std::string>& files) {
  RunManifest m;
  m.command = command;
  m.config_digest = config_hash(config);
  m.timestamp = utc_timestamp_now();
  m.seed = seed;
  for (const std::string& f : files)
    m.outputs.emplace_back(f, file_digest(out_dir + "/" + f));
  std::ofstream out(out_dir + "/manifest.json", std::ios::binary);
  require(out.good(), "write_manifest: cannot write to " + out_dir);
  out << manifest_to_json(m).dump(2) << '\n';
  return m;
}

}  // namespace fairguide
