// Receiver chain tests: onset pickers, direction detection, chip-rate
// decimation, dechirp demodulation, collision outcome scoring and the
// model-based onset refinement.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lorafb/channel.hpp"
#include "lorafb/receiver.hpp"
#include "lorafb/rng.hpp"
#include "lorafb/signal.hpp"

using namespace lorafb;

namespace {

PhyConfig make_cfg(int S, double f_s) {
    PhyConfig cfg;
    cfg.S = S;
    cfg.W = 125e3;
    cfg.f_s = f_s;
    return cfg;
}

IqTrace frame_trace(const PhyConfig& cfg, int64_t onset, std::vector<int> symbols,
                    double delta_tx = 0.0, double theta_tx = 0.0) {
    FrameSpec frame;
    frame.symbols = std::move(symbols);
    frame.onset_offset = onset;
    frame.chirp.delta_tx = delta_tx;
    frame.chirp.theta_tx = theta_tx;
    return synthesize_frame(cfg, frame);
}

}  // namespace

TEST_CASE("dechirp peak bin quantizes the frequency bias to W/2^S") {
    PhyConfig cfg = make_cfg(7, 2e6);
    // 2000 Hz / 976.5625 Hz = 2.048, so the peak must land in bin 2
    IqTrace trace = frame_trace(cfg, 0, {}, 2000.0);
    auto blocks = decimate_to_chip_rate(trace, cfg, 0);
    REQUIRE(blocks.size() == 8);
    for (const auto& block : blocks) CHECK(dechirp_fft(block, cfg).bin == 2);
    CHECK(coarse_fb(trace, cfg, 0) == doctest::Approx(2.0 * 976.5625));
}

TEST_CASE("coarse bias is signed and stays within half a bin of the truth") {
    PhyConfig cfg = make_cfg(7, 2e6);
    for (double delta : {-20000.0, -976.5625, -400.0, 400.0, 15000.0}) {
        IqTrace trace = frame_trace(cfg, 0, {}, delta);
        double fb = coarse_fb(trace, cfg, 0);
        CHECK(std::abs(fb - delta) <= 0.5 * 976.5625 + 1e-9);
        // always an exact multiple of the bin spacing
        double bins = fb / 976.5625;
        CHECK(std::abs(bins - std::round(bins)) < 1e-9);
    }
}

TEST_CASE("noiseless onset pickers land on the first signal sample") {
    PhyConfig cfg = make_cfg(7, 2e6);
    IqTrace trace = frame_trace(cfg, 5000, {10, 20}, 3000.0, 0.9);
    OnsetResult env = envelope_onset(trace);
    CHECK(std::abs(env.sample_index - 5000) <= 2);
    CHECK(env.score > 1.5);
    OnsetResult aic = aic_onset(trace, cfg);
    CHECK(std::abs(aic.sample_index - 5000) <= 6);
    CHECK(aic.score > 2.0);
}

TEST_CASE("aic onset stays within tens of microseconds at 0 dB") {
    PhyConfig cfg = make_cfg(7, 2e6);
    IqTrace clean = frame_trace(cfg, 30000, {40, 80}, -4000.0);
    SampleRange support{30000, 30000 + cfg.boundary_sample(10)};
    double sq_err = 0.0;
    const int trials = 8;
    for (int t = 0; t < trials; ++t) {
        IqTrace noisy = add_awgn(clean, 0.0, support, mix_seed(401, t));
        OnsetResult res = aic_onset(noisy, cfg);
        double err_us = std::abs(res.sample_index - 30000) / cfg.f_s * 1e6;
        CHECK(err_us <= 80.0);
        sq_err += err_us * err_us;
    }
    CHECK(std::sqrt(sq_err / trials) <= 40.0);
}

TEST_CASE("direction detector separates up and down chirps") {
    PhyConfig cfg = make_cfg(7, 2e6);
    ChirpSpec up;
    ChirpSpec down;
    down.direction = ChirpDirection::Down;
    IqTrace up_trace{cfg.f_s, synthesize_chirp(cfg, up)};
    IqTrace down_trace{cfg.f_s, synthesize_chirp(cfg, down)};
    CHECK(detect_direction(up_trace, cfg, 0) == ChirpDirection::Up);
    CHECK(detect_direction(down_trace, cfg, 0) == ChirpDirection::Down);

    // still reliable 10 dB under the noise floor
    int correct = 0;
    const int trials = 40;
    int64_t n = static_cast<int64_t>(up_trace.samples.size());
    for (int t = 0; t < trials; ++t) {
        const IqTrace& clean = (t % 2 == 0) ? up_trace : down_trace;
        IqTrace noisy = add_awgn(clean, -10.0, {0, n}, mix_seed(17, t));
        ChirpDirection want = (t % 2 == 0) ? ChirpDirection::Up : ChirpDirection::Down;
        if (detect_direction(noisy, cfg, 0) == want) ++correct;
    }
    CHECK(correct >= 38);
}

TEST_CASE("chip-rate decimation tracks a fractional oversampling ratio") {
    // f_s / W = 19.2: chip instants fall between capture samples, so any
    // accumulated rounding drift would corrupt the later chirps first
    PhyConfig cfg = make_cfg(7, 2.4e6);
    IqTrace trace = frame_trace(cfg, 0, {100});
    auto blocks = decimate_to_chip_rate(trace, cfg, 0);
    REQUIRE(blocks.size() == 9);
    for (size_t k = 0; k < 8; ++k) CHECK(dechirp_fft(blocks[k], cfg).bin == 0);
    CHECK(dechirp_fft(blocks[8], cfg).bin == 100);

    auto limited = decimate_to_chip_rate(trace, cfg, 0, 3);
    CHECK(limited.size() == 3);
    CHECK_THROWS_AS(decimate_to_chip_rate(trace, cfg, -1), std::invalid_argument);
}

TEST_CASE("demodulation recovers symbols for every spreading factor") {
    for (int S = 7; S <= 12; ++S) {
        PhyConfig cfg = make_cfg(S, 2e6);
        std::vector<int> symbols;
        Rng rng(mix_seed(2026, static_cast<uint64_t>(S)));
        for (int i = 0; i < 6; ++i)
            symbols.push_back(static_cast<int>(rng.integer(cfg.chips())));
        double delta = -3000.0 * (S - 6);
        IqTrace trace = frame_trace(cfg, 4000, symbols, delta, 1.3);

        DemodResult res = demodulate_frame(trace, cfg, 6);
        CHECK(res.symbols == symbols);
        CHECK(std::abs(res.onset.sample_index - 4000) <= 6);
        CHECK(std::abs(res.coarse_fb_hz - delta) <= 0.5 * cfg.W / cfg.chips() + 1e-9);
        for (bool flag : res.interference_flags) CHECK_FALSE(flag);
    }
}

TEST_CASE("demodulation stays exact with the bias at half a bin") {
    // a tone halfway between bins splits its peak across the two neighbors
    // and leaks into the rest of the spectrum; without the fractional
    // compensation the bin argmax tie-breaks differently window to window
    // and the leakage trips the interference gate
    PhyConfig cfg = make_cfg(7, 5e5);
    double bin = cfg.W / cfg.chips();
    std::vector<int> symbols;
    Rng rng(90125);
    for (int i = 0; i < 30; ++i)
        symbols.push_back(static_cast<int>(rng.integer(cfg.chips())));
    for (double frac : {0.499, -0.47, 0.38}) {
        IqTrace trace = frame_trace(cfg, 2048, symbols, (10.0 + frac) * bin, 0.7);
        DemodResult res = demodulate_frame(trace, cfg, 30);
        CHECK(res.symbols == symbols);
        for (bool flag : res.interference_flags) CHECK_FALSE(flag);
    }
}

TEST_CASE("demodulation reports no frame on noise, silence and stubs") {
    PhyConfig cfg = make_cfg(7, 2e6);

    IqTrace noise;
    noise.f_s = cfg.f_s;
    Rng rng(424242);
    noise.samples.resize(40000);
    for (auto& s : noise.samples) s = cplx(rng.normal(), rng.normal());
    CHECK_THROWS_AS(demodulate_frame(noise, cfg, 0), NoFrameError);

    IqTrace silence;
    silence.f_s = cfg.f_s;
    silence.samples.assign(40000, cplx(0.0, 0.0));
    CHECK_THROWS_AS(demodulate_frame(silence, cfg, 0), NoFrameError);

    // two preamble chirps cannot produce a 3-window lock
    FrameSpec stub;
    stub.preamble_len = 2;
    stub.onset_offset = 3000;
    IqTrace short_trace = synthesize_frame(cfg, stub);
    CHECK_THROWS_AS(demodulate_frame(short_trace, cfg, 0), NoFrameError);
}

TEST_CASE("outcome scoring: clean victim, capture by a strong collider") {
    PhyConfig cfg = make_cfg(7, 2e6);
    CollisionScene scene;
    scene.victim.symbols = {10, 20, 30, 40};
    scene.victim.onset_offset = 4096;
    scene.collider.symbols = {99, 88, 77, 66};
    scene.seed = 31;

    // victim 12 dB above the collider: the overlap neither flips symbols
    // nor trips the interference gate
    scene.scr_db = 12.0;
    scene.rtm = 0.3;
    auto [strong_victim, gt1] = compose_collision(cfg, scene);
    CHECK(classify_outcome(strong_victim, cfg, gt1) == OutcomeClass::VictimReceived);

    // collider 15 dB above the victim arriving almost immediately: the
    // receiver locks onto and decodes the collision frame
    scene.scr_db = -15.0;
    scene.rtm = 0.05;
    auto [strong_collider, gt2] = compose_collision(cfg, scene);
    CHECK(classify_outcome(strong_collider, cfg, gt2) == OutcomeClass::CollisionReceived);

    // comparable powers mid-frame: the victim frame must not survive
    scene.scr_db = 0.0;
    scene.rtm = 0.17;
    auto [tangled, gt3] = compose_collision(cfg, scene);
    OutcomeClass c = classify_outcome(tangled, cfg, gt3);
    CHECK((c == OutcomeClass::StealthyDrop || c == OutcomeClass::BadFrame));

    // noise-only ground truth degenerates to a stealthy drop
    IqTrace silence;
    silence.f_s = cfg.f_s;
    silence.samples.assign(60000, cplx(0.0, 0.0));
    CHECK(classify_outcome(silence, cfg, gt1) == OutcomeClass::StealthyDrop);
}

TEST_CASE("outcome scoring: both frames decodable when they barely overlap") {
    PhyConfig cfg = make_cfg(7, 2e6);
    std::vector<int> victim_syms = {10, 20, 30, 40};
    std::vector<int> collider_syms = {99, 88, 77, 66};
    // the victim must be at least as strong as the collider, and must start
    // at least one chirp into the capture so its full power step is visible;
    // otherwise the onset picker locks the later frame and scores
    // CollisionReceived
    IqTrace victim = frame_trace(cfg, 4000, victim_syms, 0.0, 1.0);
    IqTrace collider = frame_trace(cfg, 0, collider_syms, 0.0, 0.9);

    GroundTruth gt;
    gt.victim_onset = 4000;
    gt.victim_frame_samples = cfg.boundary_sample(12);
    gt.collider_frame_samples = cfg.boundary_sample(12);
    gt.collision_onset = gt.victim_onset + gt.victim_frame_samples + 5000;
    gt.victim_symbols = victim_syms;
    gt.collider_symbols = collider_syms;
    gt.victim_amplitude = 1.0;
    gt.collider_amplitude = 0.9;

    IqTrace trace;
    trace.f_s = cfg.f_s;
    trace.samples.assign(
        static_cast<size_t>(gt.collision_onset + gt.collider_frame_samples),
        cplx(0.0, 0.0));
    for (size_t i = 0; i < victim.samples.size(); ++i) trace.samples[i] = victim.samples[i];
    for (size_t i = 0; i < collider.samples.size(); ++i)
        trace.samples[static_cast<size_t>(gt.collision_onset) + i] = collider.samples[i];

    CHECK(classify_outcome(trace, cfg, gt) == OutcomeClass::BothReceived);
}

TEST_CASE("onset refinement pins the compensated onset/bias pair") {
    // the raw dechirp cannot separate an onset error eps from a bias error
    // (W^2/2^S) * eps; the refinement must resolve the pair using the frame
    // envelope and the data chirps' fold edges
    PhyConfig cfg = make_cfg(12, 2.4e6);
    std::vector<int> symbols = {100, 2000, 313, 4000, 77, 1500, 900, 3003, 512, 1, 2048, 600};
    double delta = -20000.0;
    IqTrace trace = frame_trace(cfg, 30000, symbols, delta, 2.2);

    OnsetResult onset = aic_onset(trace, cfg);
    double fb0 = coarse_fb(trace, cfg, onset.sample_index);
    // the coarse estimate is only bin-accurate: |err| can reach 15 Hz here
    CHECK(std::abs(fb0 - delta) <= 0.5 * cfg.W / cfg.chips() +
                                       cfg.W * cfg.W / cfg.chips() *
                                           (6.0 / cfg.f_s));

    RefineResult fine = refine_onset(trace, cfg, onset.sample_index, fb0);
    CHECK(std::abs(fine.onset_sample - 30000) <= 6);
    CHECK(std::abs(fine.fb_hz - delta) <= 12.0);
    CHECK(fine.metric > 0.0);
}

TEST_CASE("onset refinement works at the low spreading factor too") {
    PhyConfig cfg = make_cfg(7, 2e6);
    std::vector<int> symbols = {5, 120, 64, 33, 90, 11, 47, 101, 73, 19, 2, 88};
    double delta = 7000.0;
    IqTrace trace = frame_trace(cfg, 20000, symbols, delta, 0.8);

    OnsetResult onset = aic_onset(trace, cfg);
    double fb0 = coarse_fb(trace, cfg, onset.sample_index);
    RefineResult fine = refine_onset(trace, cfg, onset.sample_index, fb0);
    // at S = 7 a bin is 976.56 Hz; the refinement trades part of the bin
    // quantization against fold alignment, so the landing is coarser than
    // at S = 12 but still an order of magnitude inside the bin
    CHECK(std::abs(fine.onset_sample - 20000) <= 8);
    CHECK(std::abs(fine.fb_hz - delta) <= 450.0);
}
