#include "lorafb/tracefile.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace lorafb {

namespace {

// byte packing below works on the numeric bit pattern, so it is
// endian-independent as long as float and integer endianness agree
void put_float_le(std::vector<unsigned char>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    out.push_back(static_cast<unsigned char>(bits & 0xff));
    out.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
}

float get_float_le(const unsigned char* p) {
    uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                    (static_cast<uint32_t>(p[2]) << 16) |
                    (static_cast<uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const void* data, size_t len) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace

std::string sidecar_path(const std::string& trace_path) {
    size_t slash = trace_path.find_last_of('/');
    size_t dot = trace_path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return trace_path + ".meta.json";
    return trace_path.substr(0, dot) + ".meta.json";
}

void write_trace(const std::string& path, const IqTrace& trace, const TraceMeta& meta) {
    if (!(meta.f_s > 0.0)) throw std::invalid_argument("sidecar needs f_s > 0");
    std::vector<unsigned char> payload;
    payload.reserve(trace.samples.size() * 8);
    for (const cplx& s : trace.samples) {
        put_float_le(payload, static_cast<float>(s.real()));
        put_float_le(payload, static_cast<float>(s.imag()));
    }
    write_file(path, payload.data(), payload.size());

    nlohmann::json side = {
        {"f_s", meta.f_s},           {"f_c", meta.f_c},
        {"bw", meta.bw},             {"sf", meta.sf},
        {"seed", meta.seed},         {"description", meta.description},
        {"params", meta.params},     {"samples", trace.samples.size()},
        {"version", kToolkitVersion}};
    std::string text = side.dump(2);
    text.push_back('\n');
    write_file(sidecar_path(path), text.data(), text.size());
}

std::pair<IqTrace, TraceMeta> read_trace(const std::string& path) {
    std::vector<unsigned char> payload = read_file(path);
    if (payload.size() % 8 != 0)
        throw std::runtime_error("trace payload is not a whole number of IQ pairs");

    std::vector<unsigned char> side = read_file(sidecar_path(path));
    nlohmann::json doc = nlohmann::json::parse(side.begin(), side.end());
    TraceMeta meta;
    meta.f_s = doc.at("f_s").get<double>();
    meta.f_c = doc.value("f_c", 0.0);
    meta.bw = doc.value("bw", 0.0);
    meta.sf = doc.value("sf", 0);
    meta.seed = doc.value("seed", static_cast<uint64_t>(0));
    meta.description = doc.value("description", std::string{});
    if (doc.contains("params")) meta.params = doc["params"];
    if (!(meta.f_s > 0.0)) throw std::runtime_error("sidecar f_s must be positive");

    IqTrace trace;
    trace.f_s = meta.f_s;
    trace.samples.resize(payload.size() / 8);
    for (size_t i = 0; i < trace.samples.size(); ++i) {
        float re = get_float_le(payload.data() + i * 8);
        float im = get_float_le(payload.data() + i * 8 + 4);
        trace.samples[i] = cplx(re, im);
    }
    return {std::move(trace), std::move(meta)};
}

std::string file_checksum_hex(const std::string& path) {
    std::vector<unsigned char> data = read_file(path);
    uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char b : data) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return std::string(buf);
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    nlohmann::json doc = {{"command", manifest.command},
                          {"parameters", manifest.parameters},
                          {"seed", manifest.seed},
                          {"version", manifest.version},
                          {"output_checksums", manifest.output_checksums}};
    std::string text = doc.dump(2);
    text.push_back('\n');
    write_file(path, text.data(), text.size());
}

RunManifest read_manifest(const std::string& path) {
    std::vector<unsigned char> data = read_file(path);
    nlohmann::json doc = nlohmann::json::parse(data.begin(), data.end());
    RunManifest m;
    m.command = doc.at("command").get<std::string>();
    m.parameters = doc.at("parameters");
    m.seed = doc.at("seed").get<uint64_t>();
    m.version = doc.at("version").get<std::string>();
    for (const auto& [k, v] : doc.at("output_checksums").items())
        m.output_checksums[k] = v.get<std::string>();
    return m;
}

}  // namespace lorafb
