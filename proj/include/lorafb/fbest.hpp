#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lorafb/phy.hpp"

namespace lorafb {

enum class FbMethod { Fft, Linreg, Lsq };

// One frequency-bias measurement. residual is the least-squares objective
// at the optimum (lsq) or the regression RMSE (linreg);
// phase_offset_rad is the fitted carrier phase (lsq only).
struct FbEstimate {
    double delta_hz = 0.0;
    FbMethod method = FbMethod::Fft;
    double residual = 0.0;
    double phase_offset_rad = 0.0;
};

// Controls for fb_least_squares. The differential-evolution stage searches
// delta within delta_bounds_hz; the carrier phase has a closed form given
// delta, so it is recovered analytically instead of searched.
struct LsqConfig {
    std::pair<double, double> delta_bounds_hz{-50e3, 50e3};
    int population = 30;
    int max_generations = 200;
    double tolerance = 1e-6;
    uint64_t seed = 0;
};

// Classic phase unwrapping: each consecutive difference is moved by an
// integer multiple of 2*pi into (-pi, pi], starting from wrapped[0].
std::vector<double> unwrap_phase(const std::vector<double>& wrapped);

// Fits delta from the unwrapped phase of a captured base up chirp: the
// known quadratic sweep is subtracted and the remaining linear trend is
// recovered by ordinary least squares. Needs at least 16 samples. Exact on
// noiseless input; degrades quickly once the phase track gets noisy.
FbEstimate fb_linear_regression(const IqTrace& chirp, const PhyConfig& cfg);

// Estimates the template amplitude from received power: noise power comes
// from the pre-onset samples (at least 2^S of them) and is subtracted from
// the mean power over up to eight chirps after the onset. Returns
// A = sqrt(max(0, P_signal - P_noise)), the magnitude of the complex
// samples themselves (half the ChirpSpec amplitude under the A/2 per
// quadrature synthesis convention).
double estimate_amplitude(const IqTrace& trace, const PhyConfig& cfg, int64_t onset);

// Maximum-likelihood delta for one captured base up chirp of known sample
// amplitude: minimizes sum_n |x_n - A e^{j(sweep(t_n) + 2 pi delta t_n +
// phi)}|^2. The objective reduces to maximizing |H(delta)| with
// H(delta) = sum_n x_n e^{-j sweep(t_n)} e^{-j 2 pi delta t_n}, and phi
// drops out as arg H. A differential-evolution search (best/1/bin) covers
// delta_bounds_hz; long captures run the search on a strided subset and
// polish the winner against the full record. Deterministic for a fixed
// seed. delta_hz always lands inside the configured bounds.
FbEstimate fb_least_squares(const IqTrace& chirp, const PhyConfig& cfg,
                            double amplitude, const LsqConfig& lsq = {});

}  // namespace lorafb
