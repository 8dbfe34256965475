#include "kgctx/manifest.hpp"

#include <ctime>
#include <fstream>
#include <sstream>

#include "kgctx/error.hpp"
#include "kgctx/text.hpp"

namespace kgctx {

using nlohmann::json;

std::string current_utc_iso8601() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file for digest: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return hex64(fnv1a64(buffer.str()));
}

json manifest_to_json(const RunManifest& manifest) {
    return {{"tool_version", manifest.tool_version},
            {"command", manifest.command},
            {"created_utc", manifest.created_utc},
            {"seed", manifest.seed},
            {"input_digests", manifest.input_digests},
            {"config", manifest.config}};
}

void write_manifest_file(const std::string& path, const RunManifest& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write manifest: " + path);
    out << manifest_to_json(manifest).dump(2) << "\n";
}

} // namespace kgctx
