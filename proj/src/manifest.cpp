#include "bbm/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <vector>

#include "bbm/errors.hpp"
#include "bbm/io.hpp"

namespace bbm {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

std::uint64_t fnv1a64_update(std::uint64_t h, std::string_view data) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view data) { return fnv1a64_update(kFnvOffset, data); }

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::uint64_t h = kFnvOffset;
    std::vector<char> buf(1 << 20);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h = fnv1a64_update(h, std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
    }
    return h;
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

nlohmann::json body(const RunManifest& m) {
    // nlohmann::json objects are std::map backed, so dump() is canonical.
    return {{"schema", kManifestSchema},
            {"software_version", kSoftwareVersion},
            {"command", m.command},
            {"config", m.config},
            {"seed", m.seed},
            {"replica_first", m.replica_first},
            {"replica_count", m.replica_count},
            {"pruning", m.pruning},
            {"inputs", m.inputs},
            {"files", m.files}};
}

}  // namespace

std::string RunManifest::compute_hash() const { return hex64(fnv1a64(body(*this).dump())); }

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j = body(*this);
    j["hash"] = hash;
    return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema").get<int>() != kManifestSchema) throw ValidationError("unsupported manifest schema");
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.config = j.at("config");
        m.seed = j.at("seed").get<std::uint64_t>();
        m.replica_first = j.at("replica_first").get<std::uint64_t>();
        m.replica_count = j.at("replica_count").get<std::uint64_t>();
        m.pruning = j.at("pruning");
        m.inputs = j.at("inputs");
        m.files = j.at("files");
        m.hash = j.at("hash").get<std::string>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed manifest: ") + e.what());
    }
}

void RunManifest::add_file(const std::filesystem::path& dir, const std::string& name, const std::string& content) {
    write_file(dir / name, content);
    files[name] = hex64(fnv1a64(content));
}

void RunManifest::add_written_file(const std::filesystem::path& dir, const std::string& name) {
    files[name] = hex64(fnv1a64_file(dir / name));
}

void RunManifest::write(const std::filesystem::path& dir) {
    hash = compute_hash();
    write_file(dir / "manifest.json", to_json().dump(2) + "\n");
}

RunManifest load_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    if (!std::filesystem::exists(path)) throw ValidationError("missing input: no manifest in " + dir.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("manifest " + path.string() + " does not parse: " + e.what());
    }
    RunManifest m = RunManifest::from_json(j);
    if (m.compute_hash() != m.hash) throw ValidationError("manifest hash mismatch in " + dir.string());
    for (const auto& [name, h] : m.files.items()) {
        const auto file = dir / name;
        if (!std::filesystem::exists(file)) throw ValidationError("missing input: " + file.string());
        if (hex64(fnv1a64_file(file)) != h.get<std::string>())
            throw ValidationError("stale data: " + file.string() + " does not match manifest " + m.hash);
    }
    return m;
}

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_timing(const std::filesystem::path& dir, const std::string& started, const std::string& finished) {
    write_file(dir / "timing.json", nlohmann::json{{"started", started}, {"finished", finished}}.dump(2) + "\n");
}

}  // namespace bbm
