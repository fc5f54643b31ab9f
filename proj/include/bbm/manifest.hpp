#pragma once

// Run manifests: the effective configuration of a run plus hashes of the
// files it wrote.  Wall-clock timestamps live in a separate timing.json so the
// manifest itself is reproducible byte for byte.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace bbm {

inline constexpr const char* kSoftwareVersion = "1.0.0";
inline constexpr int kManifestSchema = 1;

std::uint64_t fnv1a64(std::string_view data);
/// Same hash of a file's bytes, read in chunks.
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t h);

struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();   ///< effective configuration
    std::uint64_t seed = 0;
    std::uint64_t replica_first = 0;
    std::uint64_t replica_count = 0;
    nlohmann::json pruning = nlohmann::json::object();  ///< mode, slack, pruned totals
    nlohmann::json inputs = nlohmann::json::array();    ///< {dir, hash} of consumed runs
    nlohmann::json files = nlohmann::json::object();    ///< output file -> content hash
    std::string hash;

    /// Hash of the canonical JSON of every field except `hash`.
    std::string compute_hash() const;
    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);

    /// Writes `content` to dir/name and records its hash.
    void add_file(const std::filesystem::path& dir, const std::string& name, const std::string& content);
    /// Records the hash of dir/name, already written by the caller.
    void add_written_file(const std::filesystem::path& dir, const std::string& name);
    /// Seals the manifest and writes dir/manifest.json.
    void write(const std::filesystem::path& dir);
};

/// Reads dir/manifest.json and refuses it when its hash or any recorded
/// output file no longer matches (stale or edited data).
RunManifest load_manifest(const std::filesystem::path& dir);

/// Writes dir/timing.json with start and end wall-clock times.
void write_timing(const std::filesystem::path& dir, const std::string& started, const std::string& finished);
std::string utc_now();

}  // namespace bbm
