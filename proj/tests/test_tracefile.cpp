#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "lorafb/tracefile.hpp"

using namespace lorafb;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("lorafb_tracefile_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void dump_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("trace round trip is exact and byte-stable") {
    TempDir tmp;
    IqTrace trace;
    trace.f_s = 1e6;
    // float-exact values so the 32-bit file format loses nothing
    for (int i = 0; i < 1000; ++i)
        trace.samples.push_back(cplx(i * 0.5, -i * 0.25));

    TraceMeta meta;
    meta.f_s = 1e6;
    meta.f_c = 868.1e6;
    meta.bw = 125e3;
    meta.sf = 9;
    meta.seed = 31337;
    meta.description = "unit test capture";
    meta.params = {{"delta_tx", -1200.5}, {"preamble", 8}};

    std::string p1 = tmp.file("a.iq");
    write_trace(p1, trace, meta);
    CHECK(fs::file_size(p1) == 8000);
    CHECK(fs::exists(tmp.file("a.meta.json")));

    auto [back, meta2] = read_trace(p1);
    CHECK(back.f_s == trace.f_s);
    REQUIRE(back.samples.size() == trace.samples.size());
    for (size_t i = 0; i < back.samples.size(); ++i)
        CHECK(back.samples[i] == trace.samples[i]);
    CHECK(meta2.f_c == meta.f_c);
    CHECK(meta2.bw == meta.bw);
    CHECK(meta2.sf == meta.sf);
    CHECK(meta2.seed == meta.seed);
    CHECK(meta2.description == meta.description);
    CHECK(meta2.params["delta_tx"] == -1200.5);

    // writing what was read reproduces the bytes of both files
    std::string p2 = tmp.file("b.iq");
    write_trace(p2, back, meta2);
    CHECK(file_checksum_hex(p2) == file_checksum_hex(p1));
    CHECK(file_checksum_hex(sidecar_path(p2)) == file_checksum_hex(sidecar_path(p1)));
}

TEST_CASE("sidecar path replaces only a real extension") {
    CHECK(sidecar_path("foo/bar.iq") == "foo/bar.meta.json");
    CHECK(sidecar_path("trace.cf32") == "trace.meta.json");
    CHECK(sidecar_path("foo/bar") == "foo/bar.meta.json");
    CHECK(sidecar_path("foo.d/bar") == "foo.d/bar.meta.json");
    CHECK(sidecar_path("a.b/c.iq") == "a.b/c.meta.json");
}

TEST_CASE("malformed payloads and sidecars are rejected") {
    TempDir tmp;
    IqTrace trace;
    trace.f_s = 1e6;
    trace.samples.assign(16, cplx{1.0, 0.0});
    TraceMeta meta;
    meta.f_s = 1e6;

    std::string p = tmp.file("t.iq");
    write_trace(p, trace, meta);

    // truncated payload: not a whole number of IQ pairs
    dump_bytes(p, std::string(12, '\0'));
    CHECK_THROWS_AS(read_trace(p), std::runtime_error);

    // payload fine again, sidecar gone
    write_trace(p, trace, meta);
    fs::remove(sidecar_path(p));
    CHECK_THROWS_AS(read_trace(p), std::runtime_error);

    // sidecar with a nonpositive sample rate
    dump_bytes(sidecar_path(p), "{\"f_s\": -1.0}\n");
    CHECK_THROWS_AS(read_trace(p), std::runtime_error);

    TraceMeta bad;
    bad.f_s = 0.0;
    CHECK_THROWS_AS(write_trace(tmp.file("x.iq"), trace, bad), std::invalid_argument);
}

TEST_CASE("checksum matches the FNV-1a reference values") {
    TempDir tmp;
    std::string p = tmp.file("sum.bin");
    dump_bytes(p, "");
    CHECK(file_checksum_hex(p) == "cbf29ce484222325");  // FNV-1a offset basis
    dump_bytes(p, "a");
    CHECK(file_checksum_hex(p) == "af63dc4c8601ec8c");
    dump_bytes(p, "hello");
    std::string first = file_checksum_hex(p);
    dump_bytes(p, "hello");
    CHECK(file_checksum_hex(p) == first);
    CHECK_THROWS_AS(file_checksum_hex(tmp.file("missing.bin")), std::runtime_error);
}

TEST_CASE("run manifests round trip") {
    TempDir tmp;
    RunManifest m;
    m.command = "synth";
    m.parameters = {{"sf", 7}, {"amplitude", 0.5}, {"symbols", "1,2,3"}};
    m.seed = 99;
    m.output_checksums["out.iq"] = "cbf29ce484222325";
    m.output_checksums["out.meta.json"] = "af63dc4c8601ec8c";

    std::string p = tmp.file("run.manifest.json");
    write_manifest(p, m);
    RunManifest back = read_manifest(p);
    CHECK(back.command == m.command);
    CHECK(back.parameters == m.parameters);
    CHECK(back.seed == m.seed);
    CHECK(back.version == std::string(kToolkitVersion));
    CHECK(back.output_checksums == m.output_checksums);

    dump_bytes(p, "{\"command\": \"synth\"}\n");  // missing required keys
    CHECK_THROWS_AS(read_manifest(p), std::exception);
}
