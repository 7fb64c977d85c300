#pragma once

#include <vector>

#include "lorafb/phy.hpp"

namespace lorafb::fft {

// In-place unnormalized DFT. inverse() does not divide by N; callers that
// need a round trip scale themselves.
void forward(std::vector<cplx>& data);
void inverse(std::vector<cplx>& data);

// Magnitude of the analytic signal of a real sequence, computed by zeroing
// the negative half of the spectrum. This is the envelope the onset
// detectors operate on.
std::vector<double> hilbert_envelope(const std::vector<double>& x);

}  // namespace lorafb::fft
