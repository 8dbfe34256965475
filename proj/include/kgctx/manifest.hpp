#pragma once
#include <cstdint>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace kgctx {

inline constexpr const char* kToolVersion = "0.1.0";

// Reproducibility record written next to every CLI artifact: given the same
// seed and input digests, outputs are bit-identical.
struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string command;
    std::string created_utc;
    uint64_t seed = 0;
    std::map<std::string, std::string> input_digests; // path -> fnv1a64 hex
    nlohmann::json config;
};

std::string current_utc_iso8601();

// FNV-1a over the file bytes, as 16 hex digits. Throws Error if unreadable.
std::string file_digest(const std::string& path);

nlohmann::json manifest_to_json(const RunManifest& manifest);
void write_manifest_file(const std::string& path, const RunManifest& manifest);

} // namespace kgctx
