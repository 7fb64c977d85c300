#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace lorafb {

using cplx = std::complex<double>;

enum class ChirpDirection { Up, Down };

// Radio parameters shared by the synthesizer and the receiver chain.
//
// W is the sweep bandwidth in Hz and S the spreading factor, so one chirp
// sweeps W Hz over T = 2^S / W seconds and carries one of 2^S symbols.
// f_s is the capture sample rate. delta_rx is the receiver oscillator's
// deviation from the nominal carrier f_c; the bias that survives
// downconversion is delta_tx - delta_rx, which is the quantity the
// estimators in fbest.hpp recover.
struct PhyConfig {
    double f_c = 868.1e6;
    double W = 125e3;
    int S = 7;
    double f_s = 2e6;
    double delta_rx = 0.0;

    int chips() const { return 1 << S; }
    double chirp_time() const { return static_cast<double>(chips()) / W; }

    // Sample index of the start of chirp k. Rounding each boundary
    // independently (instead of accumulating a per-chirp count) keeps the
    // grid within half a sample of k*T at every k, with no drift.
    int64_t boundary_sample(int64_t k) const {
        return std::llround(static_cast<double>(k) * f_s * chirp_time());
    }
    int64_t samples_per_chirp(int64_t k) const {
        return boundary_sample(k + 1) - boundary_sample(k);
    }

    void validate() const {
        if (S < 6 || S > 12)
            throw std::invalid_argument("spreading factor must be in [6, 12]");
        if (W <= 0.0)
            throw std::invalid_argument("bandwidth must be positive");
        if (f_s < 2.0 * W)
            throw std::invalid_argument("sample rate must be at least 2W");
        if (f_c <= 0.0)
            throw std::invalid_argument("carrier frequency must be positive");
    }
};

// One chirp to synthesize. symbol selects the starting frequency offset
// symbol * W / 2^S above the lower band edge; it must be 0 for down chirps
// (only data chirps carry symbols here).
struct ChirpSpec {
    ChirpDirection direction = ChirpDirection::Up;
    int symbol = 0;
    double amplitude = 1.0;
    double delta_tx = 0.0;
    double theta_tx = 0.0;
};

// A frame is preamble_len base up chirps followed by one up chirp per
// payload symbol, phase continuous across every boundary. The chirp member
// supplies amplitude, transmitter bias and starting phase for the whole
// frame; its direction and symbol fields are ignored (frames here model
// uplinks). onset_offset samples of silence are prepended so traces can
// exercise onset detection.
struct FrameSpec {
    int preamble_len = 8;
    std::vector<int> symbols;
    ChirpSpec chirp;
    int64_t onset_offset = 0;

    int num_chirps() const { return preamble_len + static_cast<int>(symbols.size()); }
};

// Complex baseband capture. samples[n] is the trace at time n / f_s.
struct IqTrace {
    double f_s = 0.0;
    std::vector<cplx> samples;

    double duration() const { return static_cast<double>(samples.size()) / f_s; }
};

}  // namespace lorafb
