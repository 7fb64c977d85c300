#include "lorafb/detect.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "lorafb/channel.hpp"
#include "lorafb/receiver.hpp"
#include "lorafb/rng.hpp"
#include "lorafb/signal.hpp"

namespace lorafb {

namespace {

void check_window_nonempty(const FbRecord& rec) {
    if (rec.window.empty())
        throw std::logic_error("bias record has an empty window");
}

}  // namespace

double FbRecord::mean_hz() const {
    check_window_nonempty(*this);
    double acc = 0.0;
    for (const FbSample& s : window) acc += s.fb_hz;
    return acc / static_cast<double>(window.size());
}

double FbRecord::min_hz() const {
    check_window_nonempty(*this);
    double best = window.front().fb_hz;
    for (const FbSample& s : window) best = std::min(best, s.fb_hz);
    return best;
}

double FbRecord::max_hz() const {
    check_window_nonempty(*this);
    double best = window.front().fb_hz;
    for (const FbSample& s : window) best = std::max(best, s.fb_hz);
    return best;
}

void FbDatabase::enroll(const std::string& device_id,
                        const std::vector<FbSample>& estimates, double threshold_hz) {
    if (estimates.size() < 3)
        throw std::invalid_argument("enrollment needs at least 3 estimates");
    if (!(threshold_hz > 0.0))
        throw std::invalid_argument("threshold must be positive");
    FbRecord rec;
    rec.device_id = device_id;
    rec.threshold_hz = threshold_hz;
    size_t start = estimates.size() > kWindowCap ? estimates.size() - kWindowCap : 0;
    rec.window.assign(estimates.begin() + static_cast<ptrdiff_t>(start), estimates.end());
    records_[device_id] = std::move(rec);
}

Decision FbDatabase::check_frame(const std::string& device_id, double fb_hz,
                                 double t_s) {
    auto it = records_.find(device_id);
    if (it == records_.end())
        throw EnrollmentRequiredError("device not enrolled: " + device_id);
    FbRecord& rec = it->second;
    Decision d;
    d.reference_hz = rec.mean_hz();
    d.margin_hz = std::abs(fb_hz - d.reference_hz) - rec.threshold_hz;
    if (d.margin_hz > 0.0) {
        d.verdict = Decision::Verdict::ReplaySuspected;
        return d;  // suspected frames never update the window
    }
    d.verdict = Decision::Verdict::Accept;
    rec.window.push_back({t_s, fb_hz});
    while (rec.window.size() > kWindowCap) rec.window.pop_front();
    return d;
}

bool FbDatabase::has(const std::string& device_id) const {
    return records_.count(device_id) > 0;
}

const FbRecord& FbDatabase::record(const std::string& device_id) const {
    auto it = records_.find(device_id);
    if (it == records_.end())
        throw EnrollmentRequiredError("device not enrolled: " + device_id);
    return it->second;
}

std::vector<std::string> FbDatabase::device_ids() const {
    std::vector<std::string> ids;
    ids.reserve(records_.size());
    for (const auto& [id, rec] : records_) ids.push_back(id);
    return ids;
}

std::string FbDatabase::to_json() const {
    nlohmann::json devices = nlohmann::json::object();
    for (const auto& [id, rec] : records_) {
        nlohmann::json window = nlohmann::json::array();
        for (const FbSample& s : rec.window)
            window.push_back({{"t_s", s.t_s}, {"fb_hz", s.fb_hz}});
        devices[id] = {{"threshold_hz", rec.threshold_hz}, {"window", window}};
    }
    nlohmann::json doc = {{"schema", "lorafb-db"}, {"version", 1}, {"devices", devices}};
    return doc.dump(2);
}

FbDatabase FbDatabase::from_json(const std::string& text) {
    nlohmann::json doc = nlohmann::json::parse(text);
    if (doc.value("schema", "") != "lorafb-db" || doc.value("version", 0) != 1)
        throw std::invalid_argument("unrecognized bias database document");
    FbDatabase db;
    for (const auto& [id, entry] : doc.at("devices").items()) {
        FbRecord rec;
        rec.device_id = id;
        rec.threshold_hz = entry.at("threshold_hz").get<double>();
        for (const auto& s : entry.at("window"))
            rec.window.push_back({s.at("t_s").get<double>(), s.at("fb_hz").get<double>()});
        if (rec.window.empty())
            throw std::invalid_argument("bias record without window samples");
        db.records_[id] = std::move(rec);
    }
    return db;
}

double false_alarm_rate(const std::vector<FbSample>& series, double threshold_hz,
                        double frame_interval_s) {
    if (!(threshold_hz >= 0.0) || !(frame_interval_s > 0.0))
        throw std::invalid_argument("threshold and interval must be positive");
    if (series.size() < 2) throw std::invalid_argument("series too short");
    std::vector<FbSample> s = series;
    std::sort(s.begin(), s.end(),
              [](const FbSample& a, const FbSample& b) { return a.t_s < b.t_s; });
    double span = s.back().t_s - s.front().t_s;
    if (span < 10.0 * frame_interval_s)
        throw std::invalid_argument("series spans fewer than 10 intervals");

    // sliding max-min with monotonic deques; one window per sample whose
    // full interval fits inside the span
    std::deque<size_t> maxq, minq;
    size_t end = 0;
    size_t windows = 0, alarms = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i].t_s + frame_interval_s > s.back().t_s) break;
        while (end < s.size() && s[end].t_s <= s[i].t_s + frame_interval_s) {
            while (!maxq.empty() && s[maxq.back()].fb_hz <= s[end].fb_hz) maxq.pop_back();
            maxq.push_back(end);
            while (!minq.empty() && s[minq.back()].fb_hz >= s[end].fb_hz) minq.pop_back();
            minq.push_back(end);
            ++end;
        }
        while (!maxq.empty() && maxq.front() < i) maxq.pop_front();
        while (!minq.empty() && minq.front() < i) minq.pop_front();
        ++windows;
        if (!maxq.empty() && s[maxq.front()].fb_hz - s[minq.front()].fb_hz > threshold_hz)
            ++alarms;
    }
    if (windows == 0) throw std::invalid_argument("no complete window fits the series");
    return static_cast<double>(alarms) / static_cast<double>(windows);
}

FbEstimate pipeline_estimate_fb(const IqTrace& trace, const PhyConfig& cfg,
                                const LsqConfig& lsq, int chirp_index) {
    if (chirp_index < 0) throw std::invalid_argument("chirp index must be nonnegative");
    OnsetResult onset = aic_onset(trace, cfg);
    double fb0 = coarse_fb(trace, cfg, onset.sample_index);
    RefineResult refined = refine_onset(trace, cfg, onset.sample_index, fb0, 12);

    int64_t begin = refined.onset_sample + cfg.boundary_sample(chirp_index);
    int64_t end = refined.onset_sample + cfg.boundary_sample(chirp_index + 1);
    if (begin < 0 || end > static_cast<int64_t>(trace.samples.size()))
        throw NoFrameError("trace too short for the requested preamble chirp");
    IqTrace chirp;
    chirp.f_s = trace.f_s;
    chirp.samples.assign(trace.samples.begin() + static_cast<ptrdiff_t>(begin),
                         trace.samples.begin() + static_cast<ptrdiff_t>(end));

    double amplitude = 0.0;
    try {
        amplitude = estimate_amplitude(trace, cfg, refined.onset_sample);
    } catch (const std::invalid_argument&) {
        // no usable pre-onset noise segment
    }
    if (amplitude <= 0.0) {
        // the delta estimate is invariant to the assumed amplitude, so any
        // positive stand-in works; use the chirp's own RMS
        double p = 0.0;
        for (const cplx& v : chirp.samples) p += std::norm(v);
        amplitude = std::sqrt(p / static_cast<double>(chirp.samples.size()));
        if (amplitude <= 0.0) throw NoFrameError("selected preamble chirp carries no power");
    }
    return fb_least_squares(chirp, cfg, amplitude, lsq);
}

Decision end_to_end_replay_trial(FbDatabase& db, const std::string& device_id,
                                 const PhyConfig& cfg, double delta_tx_hz,
                                 double extra_delta_hz, double snr_db, uint64_t seed,
                                 const LsqConfig& lsq) {
    cfg.validate();
    Rng rng(mix_seed(seed, 2));
    FrameSpec frame;
    frame.preamble_len = 8;
    frame.symbols.resize(12);
    for (int& s : frame.symbols) s = static_cast<int>(rng.integer(cfg.chips()));
    frame.chirp.delta_tx = delta_tx_hz + extra_delta_hz;
    frame.chirp.theta_tx = rng.uniform(0.0, 2.0 * 3.141592653589793);
    frame.onset_offset = cfg.boundary_sample(1);

    IqTrace trace = synthesize_frame(cfg, frame);
    SampleRange support{frame.onset_offset,
                        frame.onset_offset + cfg.boundary_sample(frame.num_chirps())};
    trace = add_awgn(trace, snr_db, support, mix_seed(seed, 3));

    FbEstimate est = pipeline_estimate_fb(trace, cfg, lsq);
    return db.check_frame(device_id, est.delta_hz, 0.0);
}

}  // namespace lorafb
