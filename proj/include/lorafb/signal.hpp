#pragma once

#include "lorafb/phy.hpp"

namespace lorafb {

// Accumulated sweep phase of a base-band chirp at local time t in [0, T],
// not including the frequency bias or starting phase. The sweep integrates
// to exactly zero over one chirp for every symbol, which is what makes
// frames phase continuous at chirp boundaries by construction.
double sweep_phase(const PhyConfig& cfg, ChirpDirection dir, int symbol, double t);

// Total phase of one chirp at local time t:
//   theta(t) = dir * sweep(t) + 2*pi*(delta_tx - delta_rx)*t + theta_tx - theta_rx
double chirp_phase(const PhyConfig& cfg, const ChirpSpec& spec, double theta_rx,
                   double t);

// Derivative of chirp_phase over 2*pi, i.e. the baseband frequency at local
// time t. The sweep starts at symbol * W / 2^S above the lower band edge and
// folds back by W once it crosses the upper edge, which happens strictly
// after t_w = (2^S - symbol) / W; at t == t_w the unwrapped value is kept,
// so a symbol-0 chirp reports +W/2 at t == T rather than -W/2.
double instantaneous_frequency(const PhyConfig& cfg, const ChirpSpec& spec, double t);

// Time at which the phase of an up chirp peaks (the vertex of its phase
// parabola). Exposed because the vertex shift is a clean closed-form check
// of how frequency bias displaces the phase trajectory.
double phase_vertex_time(const PhyConfig& cfg, double delta);

// llround(f_s * T) samples of one chirp, sampled at t = n / f_s.
std::vector<cplx> synthesize_chirp(const PhyConfig& cfg, const ChirpSpec& spec,
                                   double theta_rx = 0.0);

// Full frame: optional leading silence, preamble_len base up chirps, then
// one up chirp per payload symbol. Phase is evaluated from one global clock
// that starts at the frame onset, so the bias term accrues across the whole
// frame and chirp boundaries land on the drift-free rounded sample grid.
IqTrace synthesize_frame(const PhyConfig& cfg, const FrameSpec& frame,
                         double theta_rx = 0.0);

}  // namespace lorafb
