#include "lorafb/signal.hpp"

#include <cmath>
#include <numbers>

namespace lorafb {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_chirp(const PhyConfig& cfg, ChirpDirection dir, int symbol) {
    cfg.validate();
    if (symbol < 0 || symbol >= cfg.chips())
        throw std::invalid_argument("symbol out of range for spreading factor");
    if (dir == ChirpDirection::Down && symbol != 0)
        throw std::invalid_argument("down chirps do not carry symbols");
}

// Sweep phase without argument validation. Frame synthesis calls this per
// sample, and with rounded chirp boundaries the local time can sit up to
// half a sample outside [0, T]; the formula extends smoothly there.
double sweep_unchecked(double W, double chips, int symbol, double t) {
    // instantaneous frequency f0 + rate * t with a single fold at t_w:
    //   f0   = -W/2 + symbol * W / 2^S
    //   rate = W^2 / 2^S
    // integrating gives the quadratic below; the fold contributes a ramp
    // -2*pi*W*(t - t_w) once the sweep crosses the upper band edge. The
    // integral over a full chirp is exactly zero for every symbol.
    double rate = W * W / chips;
    double phi = kPi * rate * t * t - kPi * W * t +
                 kTwoPi * static_cast<double>(symbol) * (W / chips) * t;
    double t_w = (chips - static_cast<double>(symbol)) / W;
    if (t > t_w) phi -= kTwoPi * W * (t - t_w);
    return phi;
}

}  // namespace

double sweep_phase(const PhyConfig& cfg, ChirpDirection dir, int symbol, double t) {
    check_chirp(cfg, dir, symbol);
    double phi = sweep_unchecked(cfg.W, static_cast<double>(cfg.chips()), symbol, t);
    return dir == ChirpDirection::Up ? phi : -phi;
}

double chirp_phase(const PhyConfig& cfg, const ChirpSpec& spec, double theta_rx,
                   double t) {
    check_chirp(cfg, spec.direction, spec.symbol);
    if (t < 0.0 || t > cfg.chirp_time())
        throw std::domain_error("time outside chirp duration");
    double delta = spec.delta_tx - cfg.delta_rx;
    return sweep_phase(cfg, spec.direction, spec.symbol, t) + kTwoPi * delta * t +
           spec.theta_tx - theta_rx;
}

double instantaneous_frequency(const PhyConfig& cfg, const ChirpSpec& spec, double t) {
    check_chirp(cfg, spec.direction, spec.symbol);
    if (t < 0.0 || t > cfg.chirp_time())
        throw std::domain_error("time outside chirp duration");
    double chips = static_cast<double>(cfg.chips());
    double f = -0.5 * cfg.W + static_cast<double>(spec.symbol) * (cfg.W / chips) +
               (cfg.W * cfg.W / chips) * t;
    double t_w = (chips - static_cast<double>(spec.symbol)) / cfg.W;
    // the fold is applied strictly after t_w, so a symbol-0 chirp reports
    // +W/2 at t == T instead of wrapping back to -W/2
    if (t > t_w) f -= cfg.W;
    if (spec.direction == ChirpDirection::Down) f = -f;
    return f + spec.delta_tx - cfg.delta_rx;
}

double phase_vertex_time(const PhyConfig& cfg, double delta) {
    cfg.validate();
    // vertex of sweep + 2*pi*delta*t for a symbol-0 up chirp, i.e. where
    // rate * t - W/2 + delta = 0
    double chips = static_cast<double>(cfg.chips());
    return 0.5 * chips / cfg.W - delta * chips / (cfg.W * cfg.W);
}

std::vector<cplx> synthesize_chirp(const PhyConfig& cfg, const ChirpSpec& spec,
                                   double theta_rx) {
    check_chirp(cfg, spec.direction, spec.symbol);
    if (spec.amplitude <= 0.0) throw std::invalid_argument("amplitude must be positive");
    double chips = static_cast<double>(cfg.chips());
    double sign = spec.direction == ChirpDirection::Up ? 1.0 : -1.0;
    double delta = spec.delta_tx - cfg.delta_rx;
    double theta0 = spec.theta_tx - theta_rx;
    int64_t n = std::llround(cfg.f_s * cfg.chirp_time());
    std::vector<cplx> out(static_cast<size_t>(n));
    double half_amp = 0.5 * spec.amplitude;
    for (int64_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / cfg.f_s;
        double th = sign * sweep_unchecked(cfg.W, chips, spec.symbol, t) +
                    kTwoPi * delta * t + theta0;
        out[static_cast<size_t>(i)] =
            cplx(half_amp * std::cos(th), half_amp * std::sin(th));
    }
    return out;
}

IqTrace synthesize_frame(const PhyConfig& cfg, const FrameSpec& frame, double theta_rx) {
    cfg.validate();
    if (frame.preamble_len < 1)
        throw std::invalid_argument("frame needs at least one preamble chirp");
    if (frame.onset_offset < 0)
        throw std::invalid_argument("onset offset must be nonnegative");
    if (frame.chirp.amplitude <= 0.0)
        throw std::invalid_argument("amplitude must be positive");
    for (int s : frame.symbols)
        if (s < 0 || s >= cfg.chips())
            throw std::invalid_argument("symbol out of range for spreading factor");

    double T = cfg.chirp_time();
    double chips = static_cast<double>(cfg.chips());
    int64_t total = frame.onset_offset + cfg.boundary_sample(frame.num_chirps());

    IqTrace trace;
    trace.f_s = cfg.f_s;
    trace.samples.assign(static_cast<size_t>(total), cplx(0.0, 0.0));

    double delta = frame.chirp.delta_tx - cfg.delta_rx;
    double theta0 = frame.chirp.theta_tx - theta_rx;
    double half_amp = 0.5 * frame.chirp.amplitude;

    for (int k = 0; k < frame.num_chirps(); ++k) {
        int symbol =
            k < frame.preamble_len ? 0 : frame.symbols[static_cast<size_t>(k - frame.preamble_len)];
        int64_t begin = cfg.boundary_sample(k);
        int64_t end = cfg.boundary_sample(k + 1);
        for (int64_t n = begin; n < end; ++n) {
            // t runs from the frame onset so the bias term accrues over the
            // whole frame instead of restarting per chirp
            double t = static_cast<double>(n) / cfg.f_s;
            double tau = t - static_cast<double>(k) * T;
            double th = sweep_unchecked(cfg.W, chips, symbol, tau) + kTwoPi * delta * t + theta0;
            trace.samples[static_cast<size_t>(frame.onset_offset + n)] =
                cplx(half_amp * std::cos(th), half_amp * std::sin(th));
        }
    }
    return trace;
}

}  // namespace lorafb
