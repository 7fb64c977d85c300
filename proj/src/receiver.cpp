#include "lorafb/receiver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

#include "lorafb/fft.hpp"

namespace lorafb {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_trace(const IqTrace& trace) {
    if (trace.f_s <= 0.0) throw std::invalid_argument("trace needs a sample rate");
}

void check_rates(const IqTrace& trace, const PhyConfig& cfg) {
    check_trace(trace);
    cfg.validate();
    if (std::abs(trace.f_s - cfg.f_s) > 1e-6 * cfg.f_s)
        throw std::invalid_argument("trace and config sample rates disagree");
}

int64_t chirp_samples(const PhyConfig& cfg) {
    return std::llround(cfg.f_s * cfg.chirp_time());
}

// Largest mean-power step over windows of length win: argmax over n of
// mean(p[n..n+win)) - mean(p[n-win..n)), evaluated with prefix sums.
// prefix[i] = sum of p[0..i).
int64_t power_step_argmax(const std::vector<double>& prefix, int64_t lo, int64_t hi,
                          int64_t win) {
    int64_t n = static_cast<int64_t>(prefix.size()) - 1;
    lo = std::max(lo, win);
    hi = std::min(hi, n - win + 1);
    int64_t best = lo;
    double best_d = -std::numeric_limits<double>::infinity();
    for (int64_t k = lo; k < hi; ++k) {
        double after = prefix[static_cast<size_t>(k + win)] - prefix[static_cast<size_t>(k)];
        double before = prefix[static_cast<size_t>(k)] - prefix[static_cast<size_t>(k - win)];
        double d = after - before;
        if (d > best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

std::vector<double> power_prefix(const IqTrace& trace) {
    std::vector<double> prefix(trace.samples.size() + 1, 0.0);
    for (size_t i = 0; i < trace.samples.size(); ++i)
        prefix[i + 1] = prefix[i] + std::norm(trace.samples[i]);
    return prefix;
}

// Band-limited detection copy of a trace: boxcar presum down to roughly 4W,
// then a short lowpass around the occupied band. A wideband capture spreads
// noise across its whole Nyquist span while the chirp occupies about one W,
// so dropping the off-band part buys the same factor back in power-step and
// variance-split contrast at strongly negative SNR.
struct DetectionCopy {
    std::vector<cplx> samples;
    int64_t presum = 1;  // capture samples per detection sample
    double lead = 0.0;   // capture position of detection sample 0
};

DetectionCopy detection_copy(const IqTrace& trace, const PhyConfig& cfg) {
    DetectionCopy out;
    out.presum = std::max<int64_t>(
        1, static_cast<int64_t>(std::floor(cfg.f_s / (4.0 * cfg.W))));
    int64_t d = out.presum;
    size_t nd = trace.samples.size() / static_cast<size_t>(d);
    std::vector<cplx> dec(nd);
    for (size_t m = 0; m < nd; ++m) {
        cplx acc(0.0, 0.0);
        for (int64_t i = 0; i < d; ++i)
            acc += trace.samples[m * static_cast<size_t>(d) + static_cast<size_t>(i)];
        dec[m] = acc;
    }
    out.lead = (static_cast<double>(d) - 1.0) * 0.5;

    // windowed-sinc lowpass, one-sided cutoff 0.75 W (sweep half-width plus
    // bias headroom); skip it when the presummed rate is already that tight
    double f_dec = cfg.f_s / static_cast<double>(d);
    double fc = 0.75 * cfg.W / f_dec;
    constexpr int kTaps = 33;
    if (fc >= 0.45 || nd < 3 * kTaps) {
        out.samples = std::move(dec);
        return out;
    }
    double taps[kTaps];
    double gain = 0.0;
    for (int i = 0; i < kTaps; ++i) {
        double u = static_cast<double>(i) - (kTaps - 1) / 2.0;
        double s = u == 0.0 ? 2.0 * fc : std::sin(kTwoPi * fc * u) / (kPi * u);
        taps[i] = s * (0.54 - 0.46 * std::cos(kTwoPi * i / (kTaps - 1.0)));
        gain += taps[i];
    }
    for (double& t : taps) t /= gain;
    std::vector<cplx> filt(nd, cplx(0.0, 0.0));
    for (size_t m = 0; m + kTaps <= nd; ++m) {
        cplx acc(0.0, 0.0);
        for (int i = 0; i < kTaps; ++i)
            acc += dec[m + static_cast<size_t>(i)] * taps[i];
        filt[m] = acc;
    }
    // output m gathers inputs [m, m + kTaps), centered (kTaps - 1) / 2 late
    out.lead += (kTaps - 1) / 2.0 * static_cast<double>(d);
    out.samples = std::move(filt);
    return out;
}

// Minimum-AIC variance split of a real series: the candidate k minimizing
// k*ln var(x[0..k)) + (n-k)*ln var(x[k..n)). Returns the split index and
// the after/before variance ratio as a detection score.
std::pair<int64_t, double> variance_split(const std::vector<double>& x) {
    size_t m = x.size();
    std::vector<double> s1(m + 1, 0.0), s2(m + 1, 0.0);
    for (size_t i = 0; i < m; ++i) {
        s1[i + 1] = s1[i] + x[i];
        s2[i + 1] = s2[i] + x[i] * x[i];
    }
    auto segment_var = [&](size_t a, size_t b) {
        double cnt = static_cast<double>(b - a);
        double sum = s1[b] - s1[a];
        double sq = s2[b] - s2[a];
        double var = sq / cnt - (sum / cnt) * (sum / cnt);
        return std::max(var, 1e-20);
    };
    const size_t guard = 8;
    size_t best_k = guard;
    double best_aic = std::numeric_limits<double>::infinity();
    for (size_t k = guard; k + guard <= m; ++k) {
        double aic = static_cast<double>(k) * std::log(segment_var(0, k)) +
                     static_cast<double>(m - k) * std::log(segment_var(k, m));
        if (aic < best_aic) {
            best_aic = aic;
            best_k = k;
        }
    }
    double score = segment_var(best_k, m) / segment_var(0, best_k);
    return {static_cast<int64_t>(best_k), score};
}

// Conjugate base up chirp at chip rate, cached per spreading factor. At
// chip times t_m = m/W the base sweep reduces to pi*(m^2/2^S - m).
const std::vector<cplx>& chip_dechirp_table(int S) {
    static std::mutex mu;
    static std::map<int, std::vector<cplx>> tables;
    std::lock_guard<std::mutex> lock(mu);
    auto it = tables.find(S);
    if (it != tables.end()) return it->second;
    int chips = 1 << S;
    std::vector<cplx> tbl(static_cast<size_t>(chips));
    for (int m = 0; m < chips; ++m) {
        double phi = kPi * (static_cast<double>(m) * m / chips - m);
        tbl[static_cast<size_t>(m)] = std::polar(1.0, -phi);
    }
    return tables.emplace(S, std::move(tbl)).first->second;
}

DechirpResult dechirp_signed(const std::vector<cplx>& block, const PhyConfig& cfg,
                             bool conj_table) {
    int chips = cfg.chips();
    if (static_cast<int>(block.size()) != chips)
        throw std::invalid_argument("dechirp block must hold exactly 2^S samples");
    const auto& tbl = chip_dechirp_table(cfg.S);
    std::vector<cplx> y(block.size());
    for (size_t m = 0; m < block.size(); ++m)
        y[m] = block[m] * (conj_table ? std::conj(tbl[m]) : tbl[m]);
    fft::forward(y);
    DechirpResult res;
    res.magnitudes.resize(y.size());
    double best = -1.0;
    for (size_t i = 0; i < y.size(); ++i) {
        res.magnitudes[i] = std::abs(y[i]);
        if (res.magnitudes[i] > best) {
            best = res.magnitudes[i];
            res.bin = static_cast<int>(i);
        }
    }
    return res;
}

// Complex dechirped spectrum of one chip-rate block (base up chirp).
std::vector<cplx> dechirp_spectrum(const std::vector<cplx>& block, const PhyConfig& cfg) {
    const auto& tbl = chip_dechirp_table(cfg.S);
    std::vector<cplx> y(block.size());
    for (size_t m = 0; m < block.size(); ++m) y[m] = block[m] * tbl[m];
    fft::forward(y);
    return y;
}

double peak_to_mean(const std::vector<double>& mags) {
    double peak = 0.0, sum = 0.0;
    for (double m : mags) {
        peak = std::max(peak, m);
        sum += m;
    }
    double mean = sum / static_cast<double>(mags.size());
    return mean > 0.0 ? peak / mean : 1.0;
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + static_cast<ptrdiff_t>(mid) - 1, v.end());
    return 0.5 * (hi + v[mid - 1]);
}

int cyclic_distance(int a, int b, int chips) {
    int d = std::abs(a - b) % chips;
    return std::min(d, chips - d);
}

// Off-peak excess power check for one dechirped window. Power within two
// bins of the peak counts as the wanted tone (covers spectral leakage of a
// mid-bin frequency bias); the rest is compared against 4x its own median
// so that broadband noise does not register, while a second transmitter's
// tone does.
bool interference_flag(const std::vector<double>& mags, int peak_bin, double share) {
    int chips = static_cast<int>(mags.size());
    double p_sig = 0.0;
    std::vector<double> rest;
    rest.reserve(mags.size());
    for (int i = 0; i < chips; ++i) {
        double m2 = mags[static_cast<size_t>(i)] * mags[static_cast<size_t>(i)];
        if (cyclic_distance(i, peak_bin, chips) <= 2)
            p_sig += m2;
        else
            rest.push_back(m2);
    }
    double floor = median_of(rest);
    double p_excess = 0.0;
    for (double m2 : rest) p_excess += std::max(0.0, m2 - 4.0 * floor);
    return p_excess > share * p_sig;
}

}  // namespace

OnsetResult envelope_onset(const IqTrace& trace) {
    check_trace(trace);
    if (trace.samples.size() < 2)
        throw std::invalid_argument("trace too short for onset detection");
    std::vector<double> in_phase(trace.samples.size());
    for (size_t i = 0; i < trace.samples.size(); ++i)
        in_phase[i] = trace.samples[i].real();
    std::vector<double> env = fft::hilbert_envelope(in_phase);
    double env_max = *std::max_element(env.begin(), env.end());
    if (env_max <= 0.0) throw std::invalid_argument("all-zero trace");
    // the envelope over a silent lead-in is Hilbert-filter leakage with deep
    // nulls, and a single-sample growth ratio explodes at every null; a short
    // causal average fills the nulls without moving the step
    size_t w = std::min<size_t>(16, env.size() / 2);
    std::vector<double> prefix(env.size() + 1, 0.0);
    for (size_t i = 0; i < env.size(); ++i) prefix[i + 1] = prefix[i] + env[i];
    auto smoothed = [&](size_t n) {
        size_t a = n + 1 >= w ? n + 1 - w : 0;
        return (prefix[n + 1] - prefix[a]) / static_cast<double>(n + 1 - a);
    };
    double eps = 1e-12 * env_max;
    size_t best = w;
    double best_ratio = -1.0;
    for (size_t n = w; n < env.size(); ++n) {
        double ratio = smoothed(n) / std::max(smoothed(n - 1), eps);
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best = n;
        }
    }
    OnsetResult res;
    res.sample_index = static_cast<int64_t>(best);
    res.time_s = static_cast<double>(best) / trace.f_s;
    res.method = OnsetMethod::Env;
    // score the pick by the envelope contrast across it, one window after
    // against one window before; a trace with no onset scores near 1
    auto window_mean = [&](int64_t a, int64_t b) {
        a = std::max<int64_t>(a, 0);
        b = std::min<int64_t>(b, static_cast<int64_t>(env.size()));
        if (b <= a) return eps;
        return std::max((prefix[static_cast<size_t>(b)] - prefix[static_cast<size_t>(a)]) /
                            static_cast<double>(b - a),
                        eps);
    };
    int64_t p = res.sample_index;
    int64_t ww = static_cast<int64_t>(w);
    res.score = window_mean(p, p + ww) / window_mean(p - ww, p);
    return res;
}

OnsetResult aic_onset(const IqTrace& trace, const PhyConfig& cfg) {
    check_rates(trace, cfg);
    int64_t n = static_cast<int64_t>(trace.samples.size());
    if (n < 64) throw std::invalid_argument("trace too short for AIC onset");

    // coarse pass: largest power step over one-chirp windows, measured on
    // the band-limited detection copy so off-band noise cannot drown it
    DetectionCopy det = detection_copy(trace, cfg);
    int64_t nd = static_cast<int64_t>(det.samples.size());
    std::vector<double> dprefix(det.samples.size() + 1, 0.0);
    for (size_t i = 0; i < det.samples.size(); ++i)
        dprefix[i + 1] = dprefix[i] + std::norm(det.samples[i]);
    int64_t win_d = std::clamp<int64_t>(chirp_samples(cfg) / det.presum, 8,
                                        std::max<int64_t>(8, nd / 2));
    int64_t coarse_d = power_step_argmax(dprefix, 0, nd, win_d);
    int64_t coarse = std::clamp<int64_t>(
        coarse_d * det.presum + std::llround(det.lead), 0, n - 1);

    int64_t w0 = std::max<int64_t>(0, coarse - chirp_samples(cfg));
    int64_t w1 = std::min(n, coarse + chirp_samples(cfg));
    if (w1 - w0 < 16) throw std::invalid_argument("AIC window shorter than 16 samples");

    // fine pass: minimum-AIC variance split on the raw I component inside
    // the window; the raw split carries no filter smear, so it is the
    // unbiased choice whenever its variance step is clearly detectable
    std::vector<double> raw_i(static_cast<size_t>(w1 - w0));
    for (size_t i = 0; i < raw_i.size(); ++i)
        raw_i[i] = trace.samples[static_cast<size_t>(w0) + i].real();
    auto [k_raw, score_raw] = variance_split(raw_i);
    int64_t pick = w0 + k_raw;
    double score = score_raw;

    // below about +5 dB in-window the raw variance step fades into the
    // wideband noise; re-split on the detection copy, whose reduced noise
    // bandwidth keeps the step visible far below 0 dB
    if (score_raw < 4.0) {
        int64_t lead = std::llround(det.lead);
        int64_t a = std::clamp<int64_t>((w0 - lead) / det.presum, 0, nd);
        int64_t b = std::clamp<int64_t>((w1 - lead) / det.presum + 1, a, nd);
        if (b - a >= 32) {
            std::vector<double> det_i(static_cast<size_t>(b - a));
            for (size_t i = 0; i < det_i.size(); ++i)
                det_i[i] = det.samples[static_cast<size_t>(a) + i].real();
            auto [k_det, score_det] = variance_split(det_i);
            if (score_det > score_raw) {
                pick = std::clamp<int64_t>((a + k_det) * det.presum + lead, 0, n - 1);
                score = score_det;
            }
        }
    }

    OnsetResult res;
    res.sample_index = pick;
    res.time_s = static_cast<double>(pick) / trace.f_s;
    res.method = OnsetMethod::Aic;
    res.score = score;
    return res;
}

std::vector<std::vector<cplx>> decimate_to_chip_rate(const IqTrace& trace,
                                                     const PhyConfig& cfg,
                                                     int64_t onset, int max_chirps) {
    check_rates(trace, cfg);
    int64_t n = static_cast<int64_t>(trace.samples.size());
    if (onset < 0 || onset >= n) throw std::invalid_argument("onset outside trace");
    int chips = cfg.chips();
    std::vector<std::vector<cplx>> blocks;
    for (int64_t k = 0; max_chirps < 0 || k < max_chirps; ++k) {
        // nearest capture-rate sample for the last chip decides whether the
        // whole chirp fits
        double t_last = static_cast<double>(k * chips + chips - 1) / cfg.W;
        if (onset + std::llround(t_last * trace.f_s) >= n) break;
        std::vector<cplx> block(static_cast<size_t>(chips));
        for (int m = 0; m < chips; ++m) {
            double t = static_cast<double>(k * chips + m) / cfg.W;
            int64_t idx = onset + std::llround(t * trace.f_s);
            block[static_cast<size_t>(m)] = trace.samples[static_cast<size_t>(idx)];
        }
        blocks.push_back(std::move(block));
    }
    if (blocks.empty())
        throw std::invalid_argument("trace too short for one chirp after onset");
    return blocks;
}

DechirpResult dechirp_fft(const std::vector<cplx>& block, const PhyConfig& cfg) {
    cfg.validate();
    return dechirp_signed(block, cfg, false);
}

ChirpDirection detect_direction(const IqTrace& trace, const PhyConfig& cfg,
                                int64_t onset) {
    check_rates(trace, cfg);
    int64_t n = static_cast<int64_t>(trace.samples.size());
    int64_t need = chirp_samples(cfg);
    if (onset < 0 || onset + need > n)
        throw std::invalid_argument("need one chirp of samples after onset");
    // operate on a one-chirp slice so the single-chirp budget is structural
    IqTrace slice;
    slice.f_s = trace.f_s;
    slice.samples.assign(trace.samples.begin() + static_cast<ptrdiff_t>(onset),
                         trace.samples.begin() + static_cast<ptrdiff_t>(onset + need));
    auto blocks = decimate_to_chip_rate(slice, cfg, 0, 1);
    double up = peak_to_mean(dechirp_signed(blocks[0], cfg, false).magnitudes);
    double down = peak_to_mean(dechirp_signed(blocks[0], cfg, true).magnitudes);
    return up >= down ? ChirpDirection::Up : ChirpDirection::Down;
}

double coarse_fb(const IqTrace& trace, const PhyConfig& cfg, int64_t onset) {
    auto blocks = decimate_to_chip_rate(trace, cfg, onset, 1);
    int bin = dechirp_fft(blocks[0], cfg).bin;
    double f = static_cast<double>(bin) * cfg.W / static_cast<double>(cfg.chips());
    if (f >= 0.5 * cfg.W) f -= cfg.W;
    return f;
}

namespace {

struct ToneFix {
    int bin;      // integer part in [0, chips)
    double frac;  // fractional part in [-0.5, 0.5]
};

// position of the single tone shared by a run of dechirped windows. The
// fraction comes from the phase advance between consecutive windows at the
// strongest bin: a tone at position p rotates by exactly 2*pi*p per window,
// and an overlapping second transmitter perturbs one bin's phase far less
// than it skews amplitude interpolation around the peak. The integer comes
// from the power centroid around that bin, because the per-window argmax
// can sit on either neighbor of a half-bin tone and a vote over argmaxes
// can land a whole bin off; the centroid stays within a fraction of a bin
// of the tone and the measured fraction then snaps it to the right integer.
ToneFix run_tone_position(const std::vector<std::vector<cplx>>& specs, int chips) {
    std::vector<double> bin_power(static_cast<size_t>(chips), 0.0);
    for (const auto& spec : specs)
        for (int b = 0; b < chips; ++b)
            bin_power[static_cast<size_t>(b)] += std::norm(spec[static_cast<size_t>(b)]);
    int b0 = static_cast<int>(std::max_element(bin_power.begin(), bin_power.end()) -
                              bin_power.begin());
    cplx rot(0.0, 0.0);
    for (size_t k = 1; k < specs.size(); ++k)
        rot += specs[k][static_cast<size_t>(b0)] *
               std::conj(specs[k - 1][static_cast<size_t>(b0)]);
    double frac = std::abs(rot) > 0.0 ? std::arg(rot) / kTwoPi : 0.0;
    double num = 0.0, den = 0.0;
    for (int dd = -2; dd <= 2; ++dd) {
        double p = bin_power[static_cast<size_t>(((b0 + dd) % chips + chips) % chips)];
        num += static_cast<double>(dd) * p;
        den += p;
    }
    double centroid = static_cast<double>(b0) + (den > 0.0 ? num / den : 0.0);
    int bin = (static_cast<int>(std::round(centroid - frac)) % chips + chips) % chips;
    return {bin, frac};
}

}  // namespace

DemodResult demodulate_frame(const IqTrace& trace, const PhyConfig& cfg,
                             int expected_symbol_count, const DemodParams& params) {
    check_rates(trace, cfg);
    if (expected_symbol_count < 0)
        throw std::invalid_argument("expected symbol count must be nonnegative");
    if (params.preamble_len < params.lock_run)
        throw std::invalid_argument("preamble shorter than the lock run");

    OnsetResult onset = aic_onset(trace, cfg);
    int chips = cfg.chips();
    int64_t n = static_cast<int64_t>(trace.samples.size());
    std::vector<double> prefix;  // built lazily for the re-lock path

    for (int attempt = 0;; ++attempt) {
        std::vector<std::vector<cplx>> blocks;
        try {
            blocks = decimate_to_chip_rate(trace, cfg, onset.sample_index,
                                           params.preamble_len + expected_symbol_count);
        } catch (const std::invalid_argument&) {
            throw NoFrameError("no full chirp after detected onset");
        }
        int preamble_avail =
            std::min<int>(params.preamble_len, static_cast<int>(blocks.size()));
        std::vector<int> bins(static_cast<size_t>(preamble_avail));
        std::vector<double> mags(static_cast<size_t>(preamble_avail));
        for (int k = 0; k < preamble_avail; ++k) {
            DechirpResult d = dechirp_fft(blocks[static_cast<size_t>(k)], cfg);
            bins[static_cast<size_t>(k)] = d.bin;
            mags[static_cast<size_t>(k)] = d.magnitudes[static_cast<size_t>(d.bin)];
        }

        // a much stronger preamble landing inside the first few windows
        // captures the receiver: re-detect the onset near that window and
        // lock onto the newcomer instead (one re-lock only)
        if (attempt == 0) {
            bool relocked = false;
            for (int k = 1; k < std::min(preamble_avail, 5); ++k) {
                std::vector<double> before(mags.begin(), mags.begin() + k);
                double ref = median_of(before);
                if (ref > 0.0 && mags[static_cast<size_t>(k)] > params.relock_jump * ref) {
                    if (prefix.empty()) prefix = power_prefix(trace);
                    int64_t lo = onset.sample_index + cfg.boundary_sample(k - 1);
                    int64_t hi =
                        std::min(n, onset.sample_index + cfg.boundary_sample(k + 1));
                    int64_t win = std::clamp<int64_t>(chirp_samples(cfg), 16,
                                                      std::max<int64_t>(16, (hi - lo) / 2));
                    onset.sample_index = power_step_argmax(prefix, lo, hi, win);
                    onset.time_s = static_cast<double>(onset.sample_index) / trace.f_s;
                    relocked = true;
                    break;
                }
            }
            if (relocked) continue;
        }

        // preamble lock: longest chain of windows whose peak bins agree
        // within one bin (cyclically); zero-power windows never chain
        int run_start = 0, run_len = 1, best_start = 0, best_len = 1;
        for (int k = 1; k < preamble_avail; ++k) {
            bool powered = mags[static_cast<size_t>(k)] > 0.0 &&
                           mags[static_cast<size_t>(k - 1)] > 0.0;
            if (powered && cyclic_distance(bins[static_cast<size_t>(k)],
                                           bins[static_cast<size_t>(k - 1)], chips) <= 1) {
                ++run_len;
            } else {
                run_start = k;
                run_len = 1;
            }
            if (run_len > best_len) {
                best_len = run_len;
                best_start = run_start;
            }
        }
        if (best_len < params.lock_run) throw NoFrameError("no preamble lock");

        // tone position of the locked run. When the bias sits near half a
        // bin the per-window argmax tie-breaks differently window to
        // window and the tone's own leakage trips the interference gate,
        // so the data FFTs below compensate the fractional part first.
        std::vector<std::vector<cplx>> run_specs(static_cast<size_t>(best_len));
        for (int k = 0; k < best_len; ++k)
            run_specs[static_cast<size_t>(k)] =
                dechirp_spectrum(blocks[static_cast<size_t>(best_start + k)], cfg);
        ToneFix tone = run_tone_position(run_specs, chips);
        double frac = tone.frac;
        int preamble_bin = tone.bin;

        DemodResult res;
        res.onset = onset;
        res.preamble_bin = preamble_bin;
        res.peak_magnitudes = mags;
        double fb = static_cast<double>(preamble_bin) * cfg.W / static_cast<double>(chips);
        if (fb >= 0.5 * cfg.W) fb -= cfg.W;
        res.coarse_fb_hz = fb;

        std::vector<cplx> comp(static_cast<size_t>(chips));
        for (int m = 0; m < chips; ++m)
            comp[static_cast<size_t>(m)] =
                std::polar(1.0, -kTwoPi * frac * static_cast<double>(m) /
                                    static_cast<double>(chips));
        for (size_t i = static_cast<size_t>(params.preamble_len); i < blocks.size(); ++i) {
            std::vector<cplx> block = blocks[i];
            for (int m = 0; m < chips; ++m)
                block[static_cast<size_t>(m)] *= comp[static_cast<size_t>(m)];
            DechirpResult d = dechirp_fft(block, cfg);
            int sym = ((d.bin - preamble_bin) % chips + chips) % chips;
            res.symbols.push_back(sym);
            res.peak_magnitudes.push_back(d.magnitudes[static_cast<size_t>(d.bin)]);
            res.interference_flags.push_back(
                interference_flag(d.magnitudes, d.bin, params.interference_share));
        }
        return res;
    }
}

const char* outcome_name(OutcomeClass c) {
    switch (c) {
        case OutcomeClass::VictimReceived: return "VictimReceived";
        case OutcomeClass::CollisionReceived: return "CollisionReceived";
        case OutcomeClass::BothReceived: return "BothReceived";
        case OutcomeClass::StealthyDrop: return "StealthyDrop";
        case OutcomeClass::BadFrame: return "BadFrame";
    }
    return "?";
}

namespace {

// symbol error rate against a reference sequence, counting interference
// flags and missing windows as errors
double effective_ser(const DemodResult& demod, const std::vector<int>& truth) {
    if (truth.empty()) return 0.0;
    size_t errors = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
        bool missing = i >= demod.symbols.size();
        bool wrong = !missing && demod.symbols[i] != truth[i];
        bool flagged = i < demod.interference_flags.size() && demod.interference_flags[i];
        if (missing || wrong || flagged) ++errors;
    }
    return static_cast<double>(errors) / static_cast<double>(truth.size());
}

}  // namespace

OutcomeClass classify_outcome(const IqTrace& trace, const PhyConfig& cfg,
                              const GroundTruth& gt) {
    DemodResult demod;
    try {
        demod = demodulate_frame(trace, cfg,
                                 static_cast<int>(gt.victim_symbols.size()));
    } catch (const NoFrameError&) {
        return OutcomeClass::StealthyDrop;
    }

    int64_t half_chirp = chirp_samples(cfg) / 2;
    int64_t d_victim = std::abs(demod.onset.sample_index - gt.victim_onset);
    int64_t d_collider = std::abs(demod.onset.sample_index - gt.collision_onset);
    bool victim_locked = d_victim <= half_chirp && d_victim <= d_collider;
    bool collider_locked = !victim_locked && d_collider <= half_chirp;
    if (!victim_locked && !collider_locked) return OutcomeClass::BadFrame;

    const std::vector<int>& truth =
        victim_locked ? gt.victim_symbols : gt.collider_symbols;
    if (effective_ser(demod, truth) >= 0.10) return OutcomeClass::BadFrame;
    if (collider_locked) return OutcomeClass::CollisionReceived;

    // victim decoded; see whether the collision frame is separately
    // decodable after the victim frame ends (keeping clear of any replay)
    int64_t tail_begin = gt.victim_onset + gt.victim_frame_samples;
    int64_t tail_end = static_cast<int64_t>(trace.samples.size());
    if (gt.replay_onset >= 0) tail_end = std::min(tail_end, gt.replay_onset);
    int64_t need = cfg.boundary_sample(9);  // preamble plus one data chirp
    if (tail_end - tail_begin >= need) {
        IqTrace tail;
        tail.f_s = trace.f_s;
        tail.samples.assign(
            trace.samples.begin() + static_cast<ptrdiff_t>(tail_begin),
            trace.samples.begin() + static_cast<ptrdiff_t>(tail_end));
        try {
            DemodResult second = demodulate_frame(
                tail, cfg, static_cast<int>(gt.collider_symbols.size()));
            if (effective_ser(second, gt.collider_symbols) < 0.10)
                return OutcomeClass::BothReceived;
        } catch (const NoFrameError&) {
        }
    }
    return OutcomeClass::VictimReceived;
}

namespace {

// Template correlation state for refine_onset: one chirp's phase is
// piecewise quadratic in time, so the per-sample template rotator advances
// with one complex multiply and a constant curvature twiddle per step.
struct QuadRotator {
    cplx value;
    cplx step;
    cplx curve;

    // phase(t) = a*(t-t0)^2 + b*(t-t0) + c sampled at t0 + i*h
    QuadRotator(double a, double b, double c, double h) {
        value = std::polar(1.0, c);
        step = std::polar(1.0, a * h * h + b * h);
        curve = std::polar(1.0, 2.0 * a * h * h);
    }
    cplx current() const { return value; }
    void advance() {
        value *= step;
        step *= curve;
    }
};

struct RefineContext {
    std::vector<cplx> dec;  // boxcar-presummed, decimated trace
    double f_dec = 0.0;     // decimated sample rate
    double t_off = 0.0;     // capture time of decimated sample 0
    double rate = 0.0;      // chirp sweep rate W^2 / 2^S
    double T = 0.0;
    double W = 0.0;
    int chips = 0;
};

// Sum over chirps of |<x, template>| for a frame hypothesis starting at
// absolute time tau with bias delta. symbols[k] < 0 marks a preamble chirp.
double frame_metric(const RefineContext& ctx, const std::vector<int>& symbols,
                    double tau, double delta) {
    double total = 0.0;
    int64_t nd = static_cast<int64_t>(ctx.dec.size());
    for (size_t k = 0; k < symbols.size(); ++k) {
        double t_begin = tau + static_cast<double>(k) * ctx.T;
        int sym = std::max(symbols[k], 0);
        double t_fold = t_begin + (ctx.chips - sym) / ctx.W;
        double t_end = t_begin + ctx.T;
        int64_t m0 = static_cast<int64_t>(std::ceil((t_begin - ctx.t_off) * ctx.f_dec));
        int64_t m1 = static_cast<int64_t>(std::ceil((t_end - ctx.t_off) * ctx.f_dec));
        m0 = std::clamp<int64_t>(m0, 0, nd);
        m1 = std::clamp<int64_t>(m1, 0, nd);
        if (m1 <= m0) continue;
        int64_t m_fold = static_cast<int64_t>(std::ceil((t_fold - ctx.t_off) * ctx.f_dec));
        m_fold = std::clamp(m_fold, m0, m1);

        // template phase relative to chirp start tau_k, local time u:
        //   a u^2 + b u (+ fold ramp after t_fold), plus the bias term
        double a = kPi * ctx.rate;
        double b = -kPi * ctx.W + kTwoPi * sym * ctx.W / ctx.chips + kTwoPi * delta;
        cplx acc(0.0, 0.0);
        double h = 1.0 / ctx.f_dec;
        auto run = [&](int64_t from, int64_t to, double b_seg, double c_seg) {
            if (to <= from) return;
            double u0 = ctx.t_off + static_cast<double>(from) / ctx.f_dec - t_begin;
            double phi0 = a * u0 * u0 + b_seg * u0 + c_seg;
            double slope0 = 2.0 * a * u0 + b_seg;
            QuadRotator rot(a, slope0, phi0, h);
            for (int64_t i = from; i < to; ++i) {
                acc += ctx.dec[static_cast<size_t>(i)] * std::conj(rot.current());
                rot.advance();
            }
        };
        double u_fold = (ctx.chips - sym) / ctx.W;
        run(m0, m_fold, b, 0.0);
        run(m_fold, m1, b - kTwoPi * ctx.W, kTwoPi * ctx.W * u_fold);
        total += std::abs(acc);
    }
    return total;
}

}  // namespace

RefineResult refine_onset(const IqTrace& trace, const PhyConfig& cfg,
                          int64_t onset_guess, double fb_guess, int max_data_chirps) {
    check_rates(trace, cfg);
    int64_t n = static_cast<int64_t>(trace.samples.size());
    if (onset_guess < 0 || onset_guess >= n)
        throw std::invalid_argument("onset guess outside trace");
    if (max_data_chirps < 0) max_data_chirps = 0;

    RefineContext ctx;
    ctx.rate = cfg.W * cfg.W / static_cast<double>(cfg.chips());
    ctx.T = cfg.chirp_time();
    ctx.W = cfg.W;
    ctx.chips = cfg.chips();

    // boxcar presum keeps the in-band energy while cutting the sample rate
    // to roughly 4W; the rotator cost scales with the decimated length
    int dec = std::max<int64_t>(1, static_cast<int64_t>(std::floor(cfg.f_s / (4.0 * cfg.W))));
    ctx.f_dec = cfg.f_s / static_cast<double>(dec);
    ctx.dec.resize(trace.samples.size() / static_cast<size_t>(dec));
    for (size_t m = 0; m < ctx.dec.size(); ++m) {
        cplx acc(0.0, 0.0);
        for (int i = 0; i < dec; ++i) acc += trace.samples[m * static_cast<size_t>(dec) + static_cast<size_t>(i)];
        ctx.dec[m] = acc;
    }
    // presummed sample m gathers capture samples [m*dec, (m+1)*dec); its
    // effective instant is the window center
    ctx.t_off = (static_cast<double>(dec) - 1.0) * 0.5 / cfg.f_s;

    double tau0 = static_cast<double>(onset_guess) / cfg.f_s;
    double slope = ctx.rate;
    auto delta_at = [&](double tau) { return fb_guess + slope * (tau - tau0); };

    std::vector<int> preamble(8, -1);
    auto scan = [&](const std::vector<int>& symbols, double center, double half_range,
                    double step) {
        double best_tau = center;
        double best_m = -1.0;
        int steps = static_cast<int>(std::floor(half_range / step));
        for (int i = -steps; i <= steps; ++i) {
            double tau = center + static_cast<double>(i) * step;
            if (tau < -ctx.T) continue;
            double m = frame_metric(ctx, symbols, tau, delta_at(tau));
            if (m > best_m) {
                best_m = m;
                best_tau = tau;
            }
        }
        return std::make_pair(best_tau, best_m);
    };

    // stage 1: slide the preamble template up to 1.25 chirps around the
    // guess; preamble chirps have no interior fold, so the metric is a
    // smooth tent shaped by the frame's leading envelope edge
    auto [tau_a, metric_a] = scan(preamble, tau0, 1.25 * ctx.T, ctx.T / 64.0);
    (void)metric_a;

    // stage 2: recover the data symbols at the stage-1 alignment, then let
    // their fold edges sharpen the metric
    std::vector<int> symbols = preamble;
    {
        int64_t onset_a = std::clamp<int64_t>(std::llround(tau_a * cfg.f_s), 0, n - 1);
        try {
            auto blocks =
                decimate_to_chip_rate(trace, cfg, onset_a, 8 + max_data_chirps);
            size_t pre_n = std::min<size_t>(8, blocks.size());
            std::vector<std::vector<cplx>> pre_specs(pre_n);
            for (size_t k = 0; k < pre_n; ++k)
                pre_specs[k] = dechirp_spectrum(blocks[k], cfg);
            ToneFix tone = run_tone_position(pre_specs, ctx.chips);
            for (size_t k = 8; k < blocks.size(); ++k) {
                int bin = dechirp_signed(blocks[k], cfg, false).bin;
                symbols.push_back(((bin - tone.bin) % ctx.chips + ctx.chips) % ctx.chips);
            }
            // re-anchor the delay-bias line through this alignment: the
            // measured tone position pins delta plus slope times onset
            // error far tighter than the whole-bin coarse guess, and an
            // offset line drags the comb maximizer off the true onset by
            // a matching fraction of a lobe
            double pos = static_cast<double>(tone.bin) + tone.frac;
            if (pos >= 0.5 * static_cast<double>(ctx.chips))
                pos -= static_cast<double>(ctx.chips);
            fb_guess = pos * ctx.W / static_cast<double>(ctx.chips);
            tau0 = static_cast<double>(onset_a) / cfg.f_s;
        } catch (const std::invalid_argument&) {
            // too little signal after the guess; refine on the preamble only
        }
    }

    // Along the compensated-onset line, a residual onset error u shifts a
    // data chirp's fold by u, so the post-fold segment correlates with a
    // constant extra phase of 2*pi*W*u against the pre-fold segment: the
    // metric is a comb with period 1/W in u. Stage 2 therefore first finds
    // the comb phase within one period, then scans lobe indices at exact
    // 1/W spacing.
    double lobe = 1.0 / ctx.W;
    auto [tau_b1, metric_b1] = scan(symbols, tau_a, 0.5 * lobe, lobe / 8.0);
    (void)metric_b1;

    // The lobe peaks differ only through the frame's envelope edges, a drop
    // of under a percent per lobe here, so a bare argmax wanders by tens of
    // lobes at low SNR. The envelope is a tent in the lobe index, though,
    // and fitting that tent to all sampled lobes localizes its apex far
    // inside one lobe spacing of quantization.
    std::vector<double> lobe_k, lobe_m;
    lobe_k.reserve(241);
    lobe_m.reserve(241);
    for (int k = -120; k <= 120; ++k) {
        double tau = tau_b1 + static_cast<double>(k) * lobe;
        if (tau < -ctx.T) continue;
        lobe_k.push_back(static_cast<double>(k));
        lobe_m.push_back(frame_metric(ctx, symbols, tau, delta_at(tau)));
    }
    size_t nl = lobe_k.size();
    auto tent_sse = [&](double p) {
        // least squares of m ~ a - b*|k - p| in closed form, downhill only
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        for (size_t i = 0; i < nl; ++i) {
            double x = std::abs(lobe_k[i] - p);
            sx += x;
            sy += lobe_m[i];
            sxx += x * x;
            sxy += x * lobe_m[i];
        }
        double denom = sxx - sx * sx / static_cast<double>(nl);
        if (denom <= 0.0) return std::numeric_limits<double>::infinity();
        double b = -(sxy - sx * sy / static_cast<double>(nl)) / denom;
        if (b < 0.0) b = 0.0;
        double a = (sy + b * sx) / static_cast<double>(nl);
        double sse = 0.0;
        for (size_t i = 0; i < nl; ++i) {
            double r = lobe_m[i] - (a - b * std::abs(lobe_k[i] - p));
            sse += r * r;
        }
        return sse;
    };
    std::vector<double> sse_grid;
    sse_grid.reserve(2 * nl);
    size_t best_i = 0;
    for (size_t i = 0; i < 2 * nl - 1; ++i) {
        sse_grid.push_back(tent_sse(lobe_k.front() + 0.5 * static_cast<double>(i)));
        if (sse_grid[i] < sse_grid[best_i]) best_i = i;
    }
    double best_p = lobe_k.front() + 0.5 * static_cast<double>(best_i);
    // the SSE has a kink at the apex, so refine by direct scan rather than
    // a parabola across the kink
    double fine_best = best_p;
    double fine_sse = sse_grid[best_i];
    for (double p = best_p - 0.5; p <= best_p + 0.5; p += 1.0 / 16.0) {
        double s = tent_sse(p);
        if (s < fine_sse) {
            fine_sse = s;
            fine_best = p;
        }
    }
    // the tent fixes the lobe index; the comb phase inside that lobe still
    // carries the stage-2 grid quantization and soaks up any remaining
    // offset of the assumed delay-bias line, so polish it with a fine scan
    auto [tau_star, metric_c] =
        scan(symbols, tau_b1 + fine_best * lobe, 0.5 * lobe, lobe / 64.0);
    (void)metric_c;

    RefineResult res;
    res.onset_sample = std::clamp<int64_t>(std::llround(tau_star * cfg.f_s), 0, n - 1);
    res.fb_hz = delta_at(tau_star);
    res.metric = frame_metric(ctx, symbols, tau_star, delta_at(tau_star));
    return res;
}

}  // namespace lorafb
