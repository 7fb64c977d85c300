#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include <json.hpp>

#include "lorafb/phy.hpp"

namespace lorafb {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Sidecar metadata for a stored IQ capture. params carries the full
// synthesis parameter set of whatever produced the trace.
struct TraceMeta {
    double f_s = 0.0;
    double f_c = 0.0;
    double bw = 0.0;
    int sf = 0;
    uint64_t seed = 0;
    std::string description;
    nlohmann::json params = nlohmann::json::object();
};

// Path of the JSON sidecar belonging to a trace file: the trace extension
// is replaced by ".meta.json" (appended when there is none).
std::string sidecar_path(const std::string& trace_path);

// Writes interleaved I/Q as little-endian 32-bit floats plus the sidecar.
void write_trace(const std::string& path, const IqTrace& trace, const TraceMeta& meta);

// Reads a trace and its sidecar back. Rejects truncated payloads (length
// not a multiple of 8 bytes) and sidecars without a positive sample rate.
std::pair<IqTrace, TraceMeta> read_trace(const std::string& path);

// FNV-1a 64-bit checksum, hex-encoded, of a file's bytes.
std::string file_checksum_hex(const std::string& path);

// Everything needed to re-run a CLI invocation and compare its outputs.
struct RunManifest {
    std::string command;
    nlohmann::json parameters = nlohmann::json::object();
    uint64_t seed = 0;
    std::string version = kToolkitVersion;
    std::map<std::string, std::string> output_checksums;
};

void write_manifest(const std::string& path, const RunManifest& manifest);
RunManifest read_manifest(const std::string& path);

}  // namespace lorafb
