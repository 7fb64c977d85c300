#pragma once

#include <cstdint>
#include <limits>
#include <utility>

#include "lorafb/phy.hpp"

namespace lorafb {

// Sentinel SNR for "no noise at all".
constexpr double kNoiseless = std::numeric_limits<double>::infinity();

// Half-open sample interval [begin, end).
struct SampleRange {
    int64_t begin = 0;
    int64_t end = 0;

    int64_t size() const { return end - begin; }
};

// Urban path-loss model parameters. Heights of 0 m are common in idealized
// geometries but make log(h) blow up, so both heights and the distance are
// floored before evaluation; the floors are explicit parameters because the
// computed areas in the attack module are sensitive to them.
struct PathLossParams {
    double f_mhz = 868.0;
    double h_b = 25.0;
    double h_m = 1.0;
    double min_height_m = 1.0;
    double min_distance_km = 0.001;
};

// Hata-style urban path loss in dB at distance d_km kilometers.
double path_loss_db(const PathLossParams& p, double d_km);

double received_power_dbm(double p_tx_dbm, const PathLossParams& p, double d_km);

// Adds white Gaussian noise to both components over the whole trace. The
// SNR is defined against the mean |s|^2 over signal_support divided by the
// combined I+Q noise power 2*sigma^2, so sigma is fixed by construction
// rather than measured. snr_db = kNoiseless returns the input unchanged.
IqTrace add_awgn(const IqTrace& trace, double snr_db, SampleRange signal_support,
                 uint64_t seed);

// Recipe for one victim/collider superposition, optionally followed by a
// delayed replay of the victim waveform. rtm is the collision onset lag as
// a fraction of the victim frame time; scr_db the victim-to-collider power
// ratio at the receiver; replay_delay_s > 0 appends a verbatim copy of the
// victim frame that many seconds after the victim onset.
struct CollisionScene {
    FrameSpec victim;
    FrameSpec collider;
    double rtm = 0.0;
    double scr_db = 0.0;
    double snr_db = kNoiseless;
    double replay_delay_s = 0.0;
    uint64_t seed = 0;
    // draw each frame's starting phase uniformly from the seed, modeling
    // the transmitter phase being unknown; set false to honor the specs'
    // theta_tx fields verbatim
    bool randomize_phases = true;
};

// Everything a classifier or detector test needs to score its output
// against what was actually composed. All indices are absolute samples
// into the composed trace.
struct GroundTruth {
    int64_t victim_onset = 0;
    int64_t collision_onset = 0;
    int64_t replay_onset = -1;  // -1 when no replay present
    int64_t victim_frame_samples = 0;
    int64_t collider_frame_samples = 0;
    std::vector<int> victim_symbols;
    std::vector<int> collider_symbols;
    double victim_amplitude = 0.0;
    double collider_amplitude = 0.0;
    double scr_db = 0.0;
    double snr_db = kNoiseless;
    uint64_t seed = 0;
    bool replay_overlaps_collision = false;
};

std::pair<IqTrace, GroundTruth> compose_collision(const PhyConfig& cfg,
                                                  const CollisionScene& scene);

}  // namespace lorafb
