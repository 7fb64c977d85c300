#include "lorafb/channel.hpp"

#include <algorithm>
#include <cmath>

#include "lorafb/rng.hpp"
#include "lorafb/signal.hpp"

namespace lorafb {

double path_loss_db(const PathLossParams& p, double d_km) {
    if (!std::isfinite(p.f_mhz) || !std::isfinite(p.h_b) || !std::isfinite(p.h_m) ||
        !std::isfinite(d_km))
        throw std::invalid_argument("path loss inputs must be finite");
    if (p.f_mhz <= 0.0) throw std::invalid_argument("carrier frequency must be positive");
    if (p.min_height_m <= 0.0 || p.min_distance_km <= 0.0)
        throw std::invalid_argument("floors must be positive");
    double h_b = std::max(p.h_b, p.min_height_m);
    double h_m = std::max(p.h_m, p.min_height_m);
    double d = std::max(d_km, p.min_distance_km);
    double lf = std::log10(p.f_mhz);
    return 69.55 + 26.16 * lf - 13.82 * std::log10(h_b) - (1.1 * lf - 0.7) * h_m +
           (1.56 * lf - 0.8) + (44.9 - 6.55 * std::log10(h_b)) * std::log10(d);
}

double received_power_dbm(double p_tx_dbm, const PathLossParams& p, double d_km) {
    if (!std::isfinite(p_tx_dbm))
        throw std::invalid_argument("transmit power must be finite");
    return p_tx_dbm - path_loss_db(p, d_km);
}

IqTrace add_awgn(const IqTrace& trace, double snr_db, SampleRange signal_support,
                 uint64_t seed) {
    if (trace.f_s <= 0.0) throw std::invalid_argument("trace needs a sample rate");
    if (std::isnan(snr_db)) throw std::invalid_argument("snr must not be NaN");
    int64_t n = static_cast<int64_t>(trace.samples.size());
    if (signal_support.begin < 0 || signal_support.end > n ||
        signal_support.size() <= 0)
        throw std::invalid_argument("signal support empty or out of range");
    if (snr_db == kNoiseless) return trace;

    double power = 0.0;
    for (int64_t i = signal_support.begin; i < signal_support.end; ++i)
        power += std::norm(trace.samples[static_cast<size_t>(i)]);
    power /= static_cast<double>(signal_support.size());
    if (power <= 0.0)
        throw std::invalid_argument("signal support carries no power");

    // SNR = P / (2 sigma^2) with sigma the per-component deviation
    double sigma = std::sqrt(power / (2.0 * std::pow(10.0, snr_db / 10.0)));
    Rng rng(seed);
    IqTrace out = trace;
    for (auto& s : out.samples)
        s += cplx(sigma * rng.normal(), sigma * rng.normal());
    return out;
}

std::pair<IqTrace, GroundTruth> compose_collision(const PhyConfig& cfg,
                                                  const CollisionScene& scene) {
    cfg.validate();
    if (scene.rtm < 0.0 || scene.rtm >= 1.0)
        throw std::invalid_argument("rtm must be in [0, 1)");
    if (!std::isfinite(scene.scr_db))
        throw std::invalid_argument("scr must be finite");
    if (std::isnan(scene.snr_db))
        throw std::invalid_argument("snr must not be NaN");
    if (scene.replay_delay_s < 0.0)
        throw std::invalid_argument("replay delay must be nonnegative");

    Rng rng(mix_seed(scene.seed, 0));

    FrameSpec victim = scene.victim;
    FrameSpec collider = scene.collider;
    if (scene.randomize_phases) {
        victim.chirp.theta_tx = rng.uniform(0.0, 2.0 * 3.141592653589793);
        collider.chirp.theta_tx = rng.uniform(0.0, 2.0 * 3.141592653589793);
    }
    // the collider is placed by the scene, not by its own silence prefix,
    // and its receive amplitude is fixed by the requested SCR
    collider.onset_offset = 0;
    collider.chirp.amplitude =
        victim.chirp.amplitude * std::pow(10.0, -scene.scr_db / 20.0);

    IqTrace victim_trace = synthesize_frame(cfg, victim);
    IqTrace collider_trace = synthesize_frame(cfg, collider);

    GroundTruth gt;
    gt.victim_onset = victim.onset_offset;
    gt.victim_frame_samples = cfg.boundary_sample(victim.num_chirps());
    gt.collider_frame_samples = cfg.boundary_sample(collider.num_chirps());
    gt.collision_onset =
        gt.victim_onset +
        std::llround(scene.rtm * static_cast<double>(gt.victim_frame_samples));
    gt.victim_symbols = victim.symbols;
    gt.collider_symbols = collider.symbols;
    gt.victim_amplitude = victim.chirp.amplitude;
    gt.collider_amplitude = collider.chirp.amplitude;
    gt.scr_db = scene.scr_db;
    gt.snr_db = scene.snr_db;
    gt.seed = scene.seed;

    int64_t end = static_cast<int64_t>(victim_trace.samples.size());
    end = std::max(end, gt.collision_onset +
                            static_cast<int64_t>(collider_trace.samples.size()));
    if (scene.replay_delay_s > 0.0) {
        gt.replay_onset = gt.victim_onset + std::llround(scene.replay_delay_s * cfg.f_s);
        end = std::max(end, gt.replay_onset + gt.victim_frame_samples);
        int64_t c_end = gt.collision_onset + gt.collider_frame_samples;
        int64_t r_end = gt.replay_onset + gt.victim_frame_samples;
        gt.replay_overlaps_collision =
            gt.replay_onset < c_end && gt.collision_onset < r_end;
    }

    IqTrace out;
    out.f_s = cfg.f_s;
    out.samples.assign(static_cast<size_t>(end), cplx(0.0, 0.0));
    for (size_t i = 0; i < victim_trace.samples.size(); ++i)
        out.samples[i] += victim_trace.samples[i];
    for (size_t i = 0; i < collider_trace.samples.size(); ++i)
        out.samples[static_cast<size_t>(gt.collision_onset) + i] +=
            collider_trace.samples[i];
    if (gt.replay_onset >= 0) {
        for (int64_t i = 0; i < gt.victim_frame_samples; ++i)
            out.samples[static_cast<size_t>(gt.replay_onset + i)] +=
                victim_trace.samples[static_cast<size_t>(gt.victim_onset + i)];
    }

    if (scene.snr_db != kNoiseless)
        out = add_awgn(out, scene.snr_db,
                       {gt.victim_onset, gt.victim_onset + gt.victim_frame_samples},
                       mix_seed(scene.seed, 1));
    return {std::move(out), std::move(gt)};
}

}  // namespace lorafb
