// Command-line front end: synthesize traces, estimate frequency bias,
// run collision grids and vulnerable-area studies, and drive the replay
// detector. Every command writes a RunManifest next to its output.
//
// Exit codes: 0 success/Accept, 2 usage error, 3 ReplaySuspected,
// 4 domain miss (no frame, not in table, enrollment required).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lorafb/attack.hpp"
#include "lorafb/channel.hpp"
#include "lorafb/detect.hpp"
#include "lorafb/fbest.hpp"
#include "lorafb/phy.hpp"
#include "lorafb/receiver.hpp"
#include "lorafb/signal.hpp"
#include "lorafb/tracefile.hpp"

namespace {

using nlohmann::json;

std::vector<int> parse_symbols(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        size_t a = tok.find_first_not_of(" \t");
        if (a == std::string::npos) continue;
        size_t b = tok.find_last_not_of(" \t");
        out.push_back(std::stoi(tok.substr(a, b - a + 1)));
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("short write to " + path);
}

void emit_manifest(const std::string& out_path, const std::string& command,
                   const json& parameters, uint64_t seed,
                   const std::vector<std::string>& outputs) {
    lorafb::RunManifest m;
    m.command = command;
    m.parameters = parameters;
    m.seed = seed;
    for (const std::string& p : outputs)
        m.output_checksums[p] = lorafb::file_checksum_hex(p);
    lorafb::write_manifest(out_path + ".manifest.json", m);
}

lorafb::PhyConfig phy_from_meta(const lorafb::TraceMeta& meta) {
    lorafb::PhyConfig cfg;
    cfg.f_s = meta.f_s;
    if (meta.f_c > 0.0) cfg.f_c = meta.f_c;
    cfg.W = meta.bw;
    cfg.S = meta.sf;
    cfg.validate();
    return cfg;
}

lorafb::AttackGeometry geometry_from_json(const json& doc) {
    lorafb::AttackGeometry g;
    auto pos = [&](const char* key, std::array<double, 2> dflt) {
        if (!doc.contains(key)) return dflt;
        return std::array<double, 2>{doc[key].at(0).get<double>(),
                                     doc[key].at(1).get<double>()};
    };
    g.gateway_pos = pos("gateway_pos", g.gateway_pos);
    g.collider_pos = pos("collider_pos", g.collider_pos);
    g.eavesdropper_pos = pos("eavesdropper_pos", g.eavesdropper_pos);
    g.gateway_h = doc.value("gateway_h", g.gateway_h);
    g.collider_h = doc.value("collider_h", g.collider_h);
    g.eavesdropper_h = doc.value("eavesdropper_h", g.eavesdropper_h);
    g.device_h = doc.value("device_h", g.device_h);
    g.p_v_dbm = doc.value("p_v_dbm", g.p_v_dbm);
    g.p_c_dbm = doc.value("p_c_dbm", g.p_c_dbm);
    g.scr_low_db = doc.value("scr_low_db", g.scr_low_db);
    g.scr_high_db = doc.value("scr_high_db", g.scr_high_db);
    g.eavesdrop_margin_db = doc.value("eavesdrop_margin_db", g.eavesdrop_margin_db);
    if (doc.contains("sensitivity_dbm"))
        g.sensitivity_dbm = doc["sensitivity_dbm"].get<double>();
    if (doc.contains("pathloss")) {
        const json& p = doc["pathloss"];
        g.pathloss.f_mhz = p.value("f_mhz", g.pathloss.f_mhz);
        g.pathloss.min_height_m = p.value("min_height_m", g.pathloss.min_height_m);
        g.pathloss.min_distance_km =
            p.value("min_distance_km", g.pathloss.min_distance_km);
    }
    return g;
}

void write_mask_csv(const std::string& path, const std::vector<uint8_t>& mask, int nx,
                    int ny) {
    std::string text;
    text.reserve(static_cast<size_t>(nx) * 2 * static_cast<size_t>(ny));
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            if (ix) text.push_back(',');
            text.push_back(
                mask[static_cast<size_t>(iy) * static_cast<size_t>(nx) +
                     static_cast<size_t>(ix)]
                    ? '1'
                    : '0');
        }
        text.push_back('\n');
    }
    write_text_file(path, text);
}

struct SynthArgs {
    int sf = 7;
    double bw = 125e3;
    double fs = 2e6;
    double fc = 868.1e6;
    double delta_tx = 0.0;
    double theta_tx = 0.0;
    double amplitude = 1.0;
    int preamble = 8;
    std::string symbols;
    int64_t onset_offset = 0;
    std::optional<double> snr_db;
    uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
};

int run_synth(const SynthArgs& a) {
    if (a.snr_db && !a.seed_given) {
        std::cerr << "synth: --seed is required when --snr adds noise\n";
        return 2;
    }
    lorafb::PhyConfig cfg;
    cfg.S = a.sf;
    cfg.W = a.bw;
    cfg.f_s = a.fs;
    cfg.f_c = a.fc;
    lorafb::FrameSpec frame;
    frame.preamble_len = a.preamble;
    frame.symbols = parse_symbols(a.symbols);
    frame.chirp.delta_tx = a.delta_tx;
    frame.chirp.theta_tx = a.theta_tx;
    frame.chirp.amplitude = a.amplitude;
    frame.onset_offset = a.onset_offset;

    lorafb::IqTrace trace = lorafb::synthesize_frame(cfg, frame);
    if (a.snr_db) {
        lorafb::SampleRange support{frame.onset_offset,
                                    frame.onset_offset +
                                        cfg.boundary_sample(frame.num_chirps())};
        trace = lorafb::add_awgn(trace, *a.snr_db, support, a.seed);
    }

    json params = {{"sf", a.sf},
                   {"bw", a.bw},
                   {"fs", a.fs},
                   {"fc", a.fc},
                   {"delta_tx", a.delta_tx},
                   {"theta_tx", a.theta_tx},
                   {"amplitude", a.amplitude},
                   {"preamble", a.preamble},
                   {"symbols", a.symbols},
                   {"onset_offset", a.onset_offset},
                   {"snr_db", a.snr_db ? json(*a.snr_db) : json(nullptr)},
                   {"seed", a.seed}};
    lorafb::TraceMeta meta;
    meta.f_s = a.fs;
    meta.f_c = a.fc;
    meta.bw = a.bw;
    meta.sf = a.sf;
    meta.seed = a.seed;
    meta.description = "synthesized LoRa frame";
    meta.params = params;
    lorafb::write_trace(a.out, trace, meta);
    emit_manifest(a.out, "synth", params, a.seed,
                  {a.out, lorafb::sidecar_path(a.out)});
    std::cout << "wrote " << trace.samples.size() << " samples to " << a.out << "\n";
    return 0;
}

struct FbArgs {
    std::string in;
    std::string method = "lsq";
    int chirp_index = 1;
    uint64_t seed = 0;
    std::string out;
};

int run_fb(const FbArgs& a) {
    auto [trace, meta] = lorafb::read_trace(a.in);
    lorafb::PhyConfig cfg = phy_from_meta(meta);

    lorafb::FbEstimate est;
    lorafb::OnsetResult onset = lorafb::aic_onset(trace, cfg);
    if (a.method == "fft") {
        est.delta_hz = lorafb::coarse_fb(trace, cfg, onset.sample_index);
        est.method = lorafb::FbMethod::Fft;
    } else if (a.method == "linreg") {
        int64_t begin = onset.sample_index + cfg.boundary_sample(a.chirp_index);
        int64_t end = onset.sample_index + cfg.boundary_sample(a.chirp_index + 1);
        if (end > static_cast<int64_t>(trace.samples.size()))
            throw lorafb::NoFrameError("trace too short for the requested chirp");
        lorafb::IqTrace chirp;
        chirp.f_s = trace.f_s;
        chirp.samples.assign(trace.samples.begin() + static_cast<ptrdiff_t>(begin),
                             trace.samples.begin() + static_cast<ptrdiff_t>(end));
        est = lorafb::fb_linear_regression(chirp, cfg);
    } else if (a.method == "lsq") {
        lorafb::LsqConfig lsq;
        lsq.seed = a.seed;
        est = lorafb::pipeline_estimate_fb(trace, cfg, lsq, a.chirp_index);
    } else {
        std::cerr << "fb: unknown method '" << a.method << "'\n";
        return 2;
    }

    const char* method_name = a.method == "fft"      ? "fft"
                              : a.method == "linreg" ? "linreg"
                                                     : "lsq";
    json report = {{"delta_hz", est.delta_hz},
                   {"method", method_name},
                   {"residual", est.residual},
                   {"phase_offset_rad", est.phase_offset_rad},
                   {"onset",
                    {{"sample_index", onset.sample_index},
                     {"time_s", onset.time_s},
                     {"score", onset.score}}}};
    write_text_file(a.out, report.dump(2) + "\n");
    json params = {{"in", a.in},
                   {"method", a.method},
                   {"chirp_index", a.chirp_index},
                   {"seed", a.seed}};
    emit_manifest(a.out, "fb", params, a.seed, {a.out});
    std::cout << report.dump(2) << "\n";
    return 0;
}

struct GridArgs {
    double scr_min = -20.0, scr_max = 20.0, scr_step = 4.0;
    double rtm_min = 0.05, rtm_max = 0.4, rtm_step = 0.05;
    int trials = 20;
    uint64_t seed = 0;
    int sf = 7;
    double bw = 125e3;
    double fs = 2e6;
    std::string out;
};

int run_grid(const GridArgs& a) {
    lorafb::PhyConfig cfg;
    cfg.S = a.sf;
    cfg.W = a.bw;
    cfg.f_s = a.fs;
    auto axis = [](double lo, double hi, double step) {
        if (!(step > 0.0)) throw std::invalid_argument("axis step must be positive");
        std::vector<double> v;
        for (double x = lo; x <= hi + 1e-9; x += step) v.push_back(x);
        return v;
    };
    std::vector<double> scr = axis(a.scr_min, a.scr_max, a.scr_step);
    std::vector<double> rtm = axis(a.rtm_min, a.rtm_max, a.rtm_step);
    std::vector<lorafb::GridCell> cells =
        lorafb::collision_grid(cfg, scr, rtm, a.trials, a.seed);

    std::string csv =
        "scr_db,rtm,modal,victim_received,collision_received,both_received,"
        "stealthy_drop,bad_frame\n";
    for (const lorafb::GridCell& c : cells) {
        char line[160];
        std::snprintf(line, sizeof line, "%g,%g,%s,%d,%d,%d,%d,%d\n", c.scr_db, c.rtm,
                      lorafb::outcome_name(c.modal), c.counts[0], c.counts[1],
                      c.counts[2], c.counts[3], c.counts[4]);
        csv += line;
    }
    write_text_file(a.out, csv);
    json params = {{"scr_min", a.scr_min}, {"scr_max", a.scr_max},
                   {"scr_step", a.scr_step}, {"rtm_min", a.rtm_min},
                   {"rtm_max", a.rtm_max}, {"rtm_step", a.rtm_step},
                   {"trials", a.trials}, {"seed", a.seed},
                   {"sf", a.sf}, {"bw", a.bw}, {"fs", a.fs}};
    emit_manifest(a.out, "grid", params, a.seed, {a.out});
    std::cout << "wrote " << cells.size() << " cells to " << a.out << "\n";
    return 0;
}

struct AreaArgs {
    std::string geometry;
    double grid_res = 1.0;
    double extent = 500.0;
    std::string out;
};

int run_area(const AreaArgs& a) {
    lorafb::AttackGeometry geom;
    json geom_doc = json::object();
    if (!a.geometry.empty()) {
        std::ifstream in(a.geometry);
        if (!in) throw std::runtime_error("cannot open " + a.geometry);
        in >> geom_doc;
        geom = geometry_from_json(geom_doc);
    }
    lorafb::GridSpec grid;
    grid.resolution = a.grid_res;
    grid.x_min = -a.extent;
    grid.x_max = a.extent;
    grid.y_min = -a.extent;
    grid.y_max = a.extent;
    lorafb::AreaReport report = lorafb::vulnerable_area(geom, grid);

    std::string ring_csv = a.out + "_ring.csv";
    std::string disk_csv = a.out + "_disk.csv";
    std::string core_csv = a.out + "_core.csv";
    write_mask_csv(ring_csv, report.ring_mask, report.nx, report.ny);
    write_mask_csv(disk_csv, report.disk_mask, report.nx, report.ny);
    write_mask_csv(core_csv, report.intersection_mask, report.nx, report.ny);
    json summary = {{"core_area_m2", report.core_area_m2},
                    {"nx", report.nx},
                    {"ny", report.ny},
                    {"resolution_m", grid.resolution},
                    {"min_height_m", geom.pathloss.min_height_m},
                    {"masks", {ring_csv, disk_csv, core_csv}}};
    std::string summary_path = a.out + ".json";
    write_text_file(summary_path, summary.dump(2) + "\n");
    json params = {{"geometry", geom_doc},
                   {"grid_res", a.grid_res},
                   {"extent", a.extent}};
    emit_manifest(a.out, "area", params, 0,
                  {summary_path, ring_csv, disk_csv, core_csv});
    std::cout << summary.dump(2) << "\n";
    return 0;
}

struct DetectArgs {
    std::string db;
    std::string device;
    std::optional<double> fb;
    std::string in;
    double timestamp = 0.0;
    uint64_t seed = 0;
    std::string out;
};

int run_detect(const DetectArgs& a) {
    if (!a.fb && a.in.empty()) {
        std::cerr << "detect: provide --fb or --in\n";
        return 2;
    }
    std::ifstream dbin(a.db);
    if (!dbin) throw std::runtime_error("cannot open " + a.db);
    std::stringstream buf;
    buf << dbin.rdbuf();
    lorafb::FbDatabase db = lorafb::FbDatabase::from_json(buf.str());

    double fb_hz;
    if (a.fb) {
        fb_hz = *a.fb;
    } else {
        auto [trace, meta] = lorafb::read_trace(a.in);
        lorafb::PhyConfig cfg = phy_from_meta(meta);
        lorafb::LsqConfig lsq;
        lsq.seed = a.seed;
        fb_hz = lorafb::pipeline_estimate_fb(trace, cfg, lsq).delta_hz;
    }
    lorafb::Decision d = db.check_frame(a.device, fb_hz, a.timestamp);
    write_text_file(a.db, db.to_json() + "\n");  // accepted frames update the window

    bool suspected = d.verdict == lorafb::Decision::Verdict::ReplaySuspected;
    json report = {{"device", a.device},
                   {"fb_hz", fb_hz},
                   {"verdict", suspected ? "ReplaySuspected" : "Accept"},
                   {"margin_hz", d.margin_hz},
                   {"reference_hz", d.reference_hz}};
    write_text_file(a.out, report.dump(2) + "\n");
    json params = {{"db", a.db},
                   {"device", a.device},
                   {"fb", a.fb ? json(*a.fb) : json(nullptr)},
                   {"in", a.in},
                   {"timestamp", a.timestamp},
                   {"seed", a.seed}};
    emit_manifest(a.out, "detect", params, a.seed, {a.out});
    std::cout << report.dump(2) << "\n";
    return suspected ? 3 : 0;
}

struct EnrollArgs {
    std::string db;
    std::string device;
    std::string fb_list;
    double threshold = 500.0;
};

int run_enroll(const EnrollArgs& a) {
    lorafb::FbDatabase db;
    std::ifstream dbin(a.db);
    if (dbin) {
        std::stringstream buf;
        buf << dbin.rdbuf();
        db = lorafb::FbDatabase::from_json(buf.str());
    }
    std::vector<lorafb::FbSample> samples;
    double t = 0.0;
    std::stringstream ss(a.fb_list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.find_first_not_of(" \t") == std::string::npos) continue;
        samples.push_back({t, std::stod(tok)});
        t += 1.0;
    }
    db.enroll(a.device, samples, a.threshold);
    write_text_file(a.db, db.to_json() + "\n");
    json params = {{"db", a.db},
                   {"device", a.device},
                   {"fb_list", a.fb_list},
                   {"threshold", a.threshold}};
    emit_manifest(a.db, "enroll", params, 0, {a.db});
    std::cout << "enrolled " << a.device << " with " << samples.size()
              << " estimates\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LoRa chirp PHY simulation and frequency-bias replay detection"};
    app.require_subcommand(1);

    SynthArgs synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "synthesize a LoRa frame trace");
    synth_cmd->add_option("--sf", synth.sf, "spreading factor (6..12)");
    synth_cmd->add_option("--bw", synth.bw, "bandwidth W in Hz");
    synth_cmd->add_option("--fs", synth.fs, "sample rate in Hz");
    synth_cmd->add_option("--fc", synth.fc, "carrier frequency in Hz");
    synth_cmd->add_option("--delta-tx", synth.delta_tx, "transmitter bias in Hz");
    synth_cmd->add_option("--theta-tx", synth.theta_tx, "transmitter phase in rad");
    synth_cmd->add_option("--amplitude", synth.amplitude, "chirp amplitude");
    synth_cmd->add_option("--preamble", synth.preamble, "preamble chirp count");
    synth_cmd->add_option("--symbols", synth.symbols,
                          "comma-separated data symbols (may be empty)");
    synth_cmd->add_option("--onset-offset", synth.onset_offset,
                          "leading silence in samples");
    double synth_snr = 0.0;
    CLI::Option* snr_opt =
        synth_cmd->add_option("--snr", synth_snr, "add AWGN at this SNR in dB");
    CLI::Option* seed_opt = synth_cmd->add_option("--seed", synth.seed, "noise seed");
    synth_cmd->add_option("--out", synth.out, "output trace path")->required();

    FbArgs fb;
    CLI::App* fb_cmd = app.add_subcommand("fb", "estimate frequency bias from a trace");
    fb_cmd->add_option("--in", fb.in, "input trace path")->required();
    fb_cmd->add_option("--method", fb.method, "fft | linreg | lsq");
    fb_cmd->add_option("--chirp-index", fb.chirp_index, "preamble chirp to fit");
    fb_cmd->add_option("--seed", fb.seed, "optimizer seed");
    fb_cmd->add_option("--out", fb.out, "output report path")->required();

    GridArgs grid;
    CLI::App* grid_cmd =
        app.add_subcommand("grid", "collision outcome grid over SCR x RTM");
    grid_cmd->add_option("--scr-min", grid.scr_min, "lowest SCR in dB");
    grid_cmd->add_option("--scr-max", grid.scr_max, "highest SCR in dB");
    grid_cmd->add_option("--scr-step", grid.scr_step, "SCR step in dB");
    grid_cmd->add_option("--rtm-min", grid.rtm_min, "lowest RTM");
    grid_cmd->add_option("--rtm-max", grid.rtm_max, "highest RTM");
    grid_cmd->add_option("--rtm-step", grid.rtm_step, "RTM step");
    grid_cmd->add_option("--trials", grid.trials, "trials per cell");
    grid_cmd->add_option("--seed", grid.seed, "trial seed")->required();
    grid_cmd->add_option("--sf", grid.sf, "spreading factor");
    grid_cmd->add_option("--bw", grid.bw, "bandwidth in Hz");
    grid_cmd->add_option("--fs", grid.fs, "sample rate in Hz");
    grid_cmd->add_option("--out", grid.out, "output CSV path")->required();

    AreaArgs area;
    CLI::App* area_cmd = app.add_subcommand("area", "vulnerable-area geometry study");
    area_cmd->add_option("--geometry", area.geometry, "geometry JSON file");
    area_cmd->add_option("--grid-res", area.grid_res, "cell size in meters");
    area_cmd->add_option("--extent", area.extent, "half-width of the grid in meters");
    area_cmd->add_option("--out", area.out, "output prefix")->required();

    DetectArgs detect;
    CLI::App* detect_cmd =
        app.add_subcommand("detect", "check one frame against the bias database");
    detect_cmd->add_option("--db", detect.db, "bias database JSON")->required();
    detect_cmd->add_option("--device", detect.device, "device id")->required();
    double detect_fb = 0.0;
    CLI::Option* fb_val_opt =
        detect_cmd->add_option("--fb", detect_fb, "bias estimate in Hz");
    detect_cmd->add_option("--in", detect.in, "trace to run the pipeline on");
    detect_cmd->add_option("--timestamp", detect.timestamp, "frame timestamp in s");
    detect_cmd->add_option("--seed", detect.seed, "optimizer seed");
    detect_cmd->add_option("--out", detect.out, "decision JSON path")->required();

    EnrollArgs enroll;
    CLI::App* enroll_cmd =
        app.add_subcommand("enroll", "create or replace a device bias record");
    enroll_cmd->add_option("--db", enroll.db, "bias database JSON")->required();
    enroll_cmd->add_option("--device", enroll.device, "device id")->required();
    enroll_cmd->add_option("--fb-list", enroll.fb_list, "comma-separated biases in Hz")
        ->required();
    enroll_cmd->add_option("--threshold", enroll.threshold, "detection threshold in Hz");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth_cmd->parsed()) {
            if (snr_opt->count() > 0) synth.snr_db = synth_snr;
            synth.seed_given = seed_opt->count() > 0;
            return run_synth(synth);
        }
        if (fb_cmd->parsed()) return run_fb(fb);
        if (grid_cmd->parsed()) return run_grid(grid);
        if (area_cmd->parsed()) return run_area(area);
        if (detect_cmd->parsed()) {
            if (fb_val_opt->count() > 0) detect.fb = detect_fb;
            return run_detect(detect);
        }
        if (enroll_cmd->parsed()) return run_enroll(enroll);
    } catch (const lorafb::NoFrameError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const lorafb::NotInTableError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const lorafb::EnrollmentRequiredError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
