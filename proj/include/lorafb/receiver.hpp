#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lorafb/channel.hpp"
#include "lorafb/phy.hpp"

namespace lorafb {

// Raised when a trace contains no decodable frame (no onset, or the
// preamble never locks).
struct NoFrameError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class OnsetMethod { Env, Aic };

struct OnsetResult {
    int64_t sample_index = 0;
    double time_s = 0.0;
    OnsetMethod method = OnsetMethod::Env;
    // detector statistic: envelope ratio for Env, post/pre variance ratio
    // for Aic; values near 1 mean "nothing detected" for both
    double score = 0.0;
};

// Onset from the amplitude envelope of the I component: the sample with the
// largest envelope growth over its predecessor.
OnsetResult envelope_onset(const IqTrace& trace);

// Two-pass onset picker: a power-step scan localizes the onset to within a
// chirp, then the minimum-AIC variance split refines it inside
// [coarse - 1 chirp, coarse + 1 chirp]. cfg supplies the chirp time that
// sizes the window.
OnsetResult aic_onset(const IqTrace& trace, const PhyConfig& cfg);

// Decides up versus down by dechirping one chirp time of samples with both
// conjugate base chirps and comparing FFT peak-to-mean ratios.
ChirpDirection detect_direction(const IqTrace& trace, const PhyConfig& cfg,
                                int64_t onset);

// Per-chirp blocks of 2^S chip-rate samples taken from the capture-rate
// trace by nearest-sample selection against the continuous chip grid.
// max_chirps < 0 means "as many full chirps as the trace holds".
std::vector<std::vector<cplx>> decimate_to_chip_rate(const IqTrace& trace,
                                                     const PhyConfig& cfg,
                                                     int64_t onset,
                                                     int max_chirps = -1);

struct DechirpResult {
    int bin = 0;
    std::vector<double> magnitudes;
};

// Multiply one chip-rate block by the conjugate base up chirp and take a
// 2^S-point FFT; the peak bin encodes symbol plus quantized frequency bias.
DechirpResult dechirp_fft(const std::vector<cplx>& block, const PhyConfig& cfg);

// Preamble peak bin mapped to a signed frequency in [-W/2, W/2), quantized
// to multiples of W / 2^S.
double coarse_fb(const IqTrace& trace, const PhyConfig& cfg, int64_t onset);

struct DemodResult {
    OnsetResult onset;
    int preamble_bin = 0;
    std::vector<int> symbols;
    std::vector<double> peak_magnitudes;      // preamble then data windows
    std::vector<bool> interference_flags;     // one per data window
    double coarse_fb_hz = 0.0;
};

struct DemodParams {
    int preamble_len = 8;
    // a window whose FFT peak exceeds relock_jump times the running median
    // of earlier preamble windows signals a stronger overlapping preamble;
    // the demodulator re-detects the onset and locks onto that signal, the
    // way a receiver captured by a later, stronger frame would
    double relock_jump = 1.7;
    // fraction of in-peak FFT power that off-peak excess energy must exceed
    // before a data window is flagged as interfered
    double interference_share = 0.12;
    int lock_run = 3;  // consecutive matching preamble bins needed to lock
};

// Full receive chain: onset detection, preamble lock (with one re-lock onto
// a stronger late preamble), symbol recovery and per-window interference
// flags. Throws NoFrameError when nothing locks.
DemodResult demodulate_frame(const IqTrace& trace, const PhyConfig& cfg,
                             int expected_symbol_count,
                             const DemodParams& params = {});

enum class OutcomeClass {
    VictimReceived,
    CollisionReceived,
    BothReceived,
    StealthyDrop,
    BadFrame,
};

const char* outcome_name(OutcomeClass c);

// Scores a composed collision trace against its ground truth: which frame,
// if any, a receiver running demodulate_frame would deliver.
OutcomeClass classify_outcome(const IqTrace& trace, const PhyConfig& cfg,
                              const GroundTruth& gt);

struct RefineResult {
    int64_t onset_sample = 0;
    double fb_hz = 0.0;   // frequency bias implied by the refined onset
    double metric = 0.0;  // correlation mass at the optimum
};

// Model-based alignment refinement. An onset error of eps seconds biases
// every dechirp-based FB estimate by (W^2 / 2^S) * eps, so onset and FB are
// only jointly observable along a line in (onset, fb) space. This stage
// slides a full-frame chirp template along that line and keeps the point
// with the largest per-chirp correlation mass, summed noncoherently so that
// the coarse FB quantization cannot decohere the metric. Envelope edges and
// the data chirps' frequency-fold edges are what break the ambiguity.
RefineResult refine_onset(const IqTrace& trace, const PhyConfig& cfg,
                          int64_t onset_guess, double fb_guess,
                          int max_data_chirps = 12);

}  // namespace lorafb
