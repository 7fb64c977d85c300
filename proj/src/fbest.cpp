#include "lorafb/fbest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lorafb/rng.hpp"

namespace lorafb {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_chirp_input(const IqTrace& chirp, const PhyConfig& cfg) {
    cfg.validate();
    if (chirp.f_s <= 0.0) throw std::invalid_argument("trace needs a sample rate");
    if (std::abs(chirp.f_s - cfg.f_s) > 1e-6 * cfg.f_s)
        throw std::invalid_argument("trace and config sample rates disagree");
    if (chirp.samples.size() < 16)
        throw std::invalid_argument("need at least 16 samples of one chirp");
}

double wrap_to_pi(double phi) {
    phi -= kTwoPi * std::ceil((phi - kPi) / kTwoPi);
    return phi;
}

// base up-chirp sweep phase (symbol 0) at local time t within one chirp
double base_sweep(const PhyConfig& cfg, double t) {
    double rate = cfg.W * cfg.W / static_cast<double>(cfg.chips());
    return kPi * rate * t * t - kPi * cfg.W * t;
}

// H(delta) = sum_k y_k e^{-j 2 pi delta t_k} over samples spaced dt apart,
// evaluated with an incremental rotator (one complex multiply per sample)
cplx correlate(const std::vector<cplx>& y, double dt, double delta) {
    cplx rot(1.0, 0.0);
    cplx step = std::polar(1.0, -kTwoPi * delta * dt);
    cplx acc(0.0, 0.0);
    for (const cplx& v : y) {
        acc += v * rot;
        rot *= step;
    }
    return acc;
}

}  // namespace

std::vector<double> unwrap_phase(const std::vector<double>& wrapped) {
    if (wrapped.empty()) throw std::invalid_argument("empty phase sequence");
    std::vector<double> out(wrapped.size());
    out[0] = wrapped[0];
    for (size_t n = 1; n < wrapped.size(); ++n) {
        double d = wrapped[n] - wrapped[n - 1];
        d -= kTwoPi * std::ceil((d - kPi) / kTwoPi);
        out[n] = out[n - 1] + d;
    }
    return out;
}

FbEstimate fb_linear_regression(const IqTrace& chirp, const PhyConfig& cfg) {
    check_chirp_input(chirp, cfg);
    size_t n = chirp.samples.size();
    std::vector<double> phase(n);
    for (size_t i = 0; i < n; ++i)
        phase[i] = std::atan2(chirp.samples[i].imag(), chirp.samples[i].real());
    phase = unwrap_phase(phase);

    // after removing the known sweep, the residual phase is 2*pi*delta*t
    // plus a constant
    double sum_t = 0.0, sum_tt = 0.0, sum_p = 0.0, sum_tp = 0.0;
    std::vector<double> resid(n);
    for (size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / chirp.f_s;
        resid[i] = phase[i] - base_sweep(cfg, t);
        sum_t += t;
        sum_tt += t * t;
        sum_p += resid[i];
        sum_tp += t * resid[i];
    }
    double cnt = static_cast<double>(n);
    double denom = cnt * sum_tt - sum_t * sum_t;
    double slope = (cnt * sum_tp - sum_t * sum_p) / denom;
    double intercept = (sum_p - slope * sum_t) / cnt;

    double sse = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / chirp.f_s;
        double e = resid[i] - (slope * t + intercept);
        sse += e * e;
    }

    FbEstimate est;
    est.delta_hz = slope / kTwoPi;
    est.method = FbMethod::Linreg;
    est.residual = std::sqrt(sse / cnt);
    est.phase_offset_rad = wrap_to_pi(intercept);
    return est;
}

double estimate_amplitude(const IqTrace& trace, const PhyConfig& cfg, int64_t onset) {
    cfg.validate();
    if (trace.f_s <= 0.0) throw std::invalid_argument("trace needs a sample rate");
    int64_t n = static_cast<int64_t>(trace.samples.size());
    if (onset < cfg.chips())
        throw std::invalid_argument("pre-onset noise segment shorter than 2^S samples");
    if (onset >= n) throw std::invalid_argument("no signal segment after onset");

    auto mean_power = [&](int64_t begin, int64_t end) {
        double acc = 0.0;
        for (int64_t i = begin; i < end; ++i)
            acc += std::norm(trace.samples[static_cast<size_t>(i)]);
        return acc / static_cast<double>(end - begin);
    };
    double p_noise = mean_power(0, onset);
    int64_t sig_len =
        std::min<int64_t>(n - onset, std::llround(8.0 * cfg.chirp_time() * trace.f_s));
    double p_signal = mean_power(onset, onset + sig_len);
    return std::sqrt(std::max(0.0, p_signal - p_noise));
}

FbEstimate fb_least_squares(const IqTrace& chirp, const PhyConfig& cfg,
                            double amplitude, const LsqConfig& lsq) {
    check_chirp_input(chirp, cfg);
    if (!(amplitude > 0.0) || !std::isfinite(amplitude))
        throw std::invalid_argument("amplitude must be positive");
    double lo = lsq.delta_bounds_hz.first;
    double hi = lsq.delta_bounds_hz.second;
    if (!(lo < hi) || lo > 0.0 || hi < 0.0)
        throw std::invalid_argument("delta bounds must be an interval containing 0");
    if (lsq.population < 10) throw std::invalid_argument("population must be at least 10");
    if (!(lsq.tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (lsq.max_generations < 1)
        throw std::invalid_argument("max_generations must be at least 1");

    size_t n = chirp.samples.size();
    double dt = 1.0 / chirp.f_s;

    // dechirp once; afterwards the model is a pure tone at delta
    std::vector<cplx> y(n);
    double c_term = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) * dt;
        y[i] = chirp.samples[i] * std::polar(1.0, -base_sweep(cfg, t));
        c_term += std::norm(chirp.samples[i]);
    }

    // the evolutionary search runs on a strided subset for long captures;
    // the winner is polished against every sample below
    size_t stride = n > 16384 ? (n + 8191) / 8192 : 1;
    std::vector<cplx> ys;
    ys.reserve(n / stride + 1);
    for (size_t i = 0; i < n; i += stride) ys.push_back(y[i]);
    double dt_s = static_cast<double>(stride) * dt;
    double ns = static_cast<double>(ys.size());

    // minimizing the sum of squares is, for fixed amplitude, maximizing
    // |H(delta)|; keep the search objective in the original units anyway
    // so that the convergence tolerance is meaningful
    auto search_obj = [&](double delta) {
        return ns * amplitude * amplitude - 2.0 * amplitude * std::abs(correlate(ys, dt_s, delta));
    };

    constexpr double kMutationFactor = 0.7;  // best/1 differential weight
    Rng rng(mix_seed(lsq.seed, 0));
    size_t pop_n = static_cast<size_t>(lsq.population);
    std::vector<double> pop(pop_n), fit(pop_n);
    size_t best_i = 0;
    for (size_t i = 0; i < pop_n; ++i) {
        pop[i] = rng.uniform(lo, hi);
        fit[i] = search_obj(pop[i]);
        if (fit[i] < fit[best_i]) best_i = i;
    }
    for (int gen = 0; gen < lsq.max_generations; ++gen) {
        for (size_t i = 0; i < pop_n; ++i) {
            size_t a = static_cast<size_t>(rng.integer(static_cast<int64_t>(pop_n)));
            size_t b;
            do {
                b = static_cast<size_t>(rng.integer(static_cast<int64_t>(pop_n)));
            } while (b == a);
            // with a single search dimension, binomial crossover always
            // passes the mutant through
            double trial = pop[best_i] + kMutationFactor * (pop[a] - pop[b]);
            trial = std::clamp(trial, lo, hi);
            double f_trial = search_obj(trial);
            if (f_trial <= fit[i]) {
                pop[i] = trial;
                fit[i] = f_trial;
                if (f_trial < fit[best_i]) best_i = i;
            }
        }
        double worst = *std::max_element(fit.begin(), fit.end());
        if (worst - fit[best_i] <= lsq.tolerance * std::max(1.0, std::abs(fit[best_i])))
            break;
    }

    // full-record parabolic polish of |H| around the search winner; the
    // main lobe of |H| spans about 1/T_obs, so probe well inside it
    double t_obs = static_cast<double>(n) * dt;
    double h = 0.05 / t_obs;
    double center = pop[best_i];
    auto g = [&](double delta) { return std::abs(correlate(y, dt, delta)); };
    double g_c = g(center);
    for (int pass = 0; pass < 2; ++pass) {
        double g_l = g(center - h), g_r = g(center + h);
        double denom = g_l - 2.0 * g_c + g_r;
        if (denom < 0.0) {
            double shift = 0.5 * (g_l - g_r) / denom * h;
            if (std::abs(shift) <= h) {
                double cand = std::clamp(center + shift, lo, hi);
                double g_cand = g(cand);
                if (g_cand >= g_c) {
                    center = cand;
                    g_c = g_cand;
                }
            }
        }
        h *= 0.25;
    }

    cplx h_full = correlate(y, dt, center);
    FbEstimate est;
    est.delta_hz = center;
    est.method = FbMethod::Lsq;
    est.phase_offset_rad = std::arg(h_full);
    est.residual = std::max(
        0.0, c_term + static_cast<double>(n) * amplitude * amplitude -
                 2.0 * amplitude * std::abs(h_full));
    return est;
}

}  // namespace lorafb
