#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lorafb/fbest.hpp"
#include "lorafb/phy.hpp"

namespace lorafb {

class EnrollmentRequiredError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct FbSample {
    double t_s = 0.0;
    double fb_hz = 0.0;
};

// Per-device bias history. The window keeps the most recent accepted
// estimates (capped); the windowed mean is the detector reference.
struct FbRecord {
    std::string device_id;
    std::deque<FbSample> window;
    double threshold_hz = 500.0;

    double mean_hz() const;
    double min_hz() const;
    double max_hz() const;
};

struct Decision {
    enum class Verdict { Accept, ReplaySuspected };
    Verdict verdict = Verdict::Accept;
    double margin_hz = 0.0;     // |fb - reference| - threshold; positive means suspected
    double reference_hz = 0.0;  // windowed mean the probe was compared against
};

// Gateway-side database of per-device frequency biases. check_frame only
// learns from accepted frames; a suspected frame never touches the stored
// window. Single writer per device.
class FbDatabase {
   public:
    static constexpr size_t kWindowCap = 64;

    // Creates (or replaces) a device record from at least 3 prior
    // estimates gathered in the absence of attacks.
    void enroll(const std::string& device_id, const std::vector<FbSample>& estimates,
                double threshold_hz = 500.0);

    // Compares one frame's bias against the device's windowed mean.
    // Accept appends the estimate to the window; ReplaySuspected does not.
    Decision check_frame(const std::string& device_id, double fb_hz, double t_s);

    bool has(const std::string& device_id) const;
    const FbRecord& record(const std::string& device_id) const;
    std::vector<std::string> device_ids() const;

    // JSON persistence (schema carries a version tag)
    std::string to_json() const;
    static FbDatabase from_json(const std::string& text);

   private:
    std::map<std::string, FbRecord> records_;
};

// Fraction of frame_interval_s-long windows over the series whose max-min
// bias spread exceeds threshold_hz. The series must span at least 10
// intervals. Windows are anchored at every sample whose full interval fits
// inside the series.
double false_alarm_rate(const std::vector<FbSample>& series, double threshold_hz,
                        double frame_interval_s);

// Receiver pipeline from raw trace to one bias estimate: AIC onset, coarse
// dechirp bias, template alignment refinement, then the least-squares
// estimator on one preamble chirp (the second by default). The refinement
// step matters: an onset error of eps seconds biases the estimate by
// (W^2/2^S)*eps Hz, far above the detection threshold for raw onset-picker
// accuracy.
FbEstimate pipeline_estimate_fb(const IqTrace& trace, const PhyConfig& cfg,
                                const LsqConfig& lsq = {}, int chirp_index = 1);

// Synthesizes one frame from an enrolled device (extra_delta_hz models a
// replayer's added bias), runs it through noise and the full estimation
// pipeline, and asks the database for a verdict.
Decision end_to_end_replay_trial(FbDatabase& db, const std::string& device_id,
                                 const PhyConfig& cfg, double delta_tx_hz,
                                 double extra_delta_hz, double snr_db, uint64_t seed,
                                 const LsqConfig& lsq = {});

}  // namespace lorafb
