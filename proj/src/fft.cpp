#include "lorafb/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

namespace lorafb::fft {

namespace {

// FFTW planning is not thread safe and plan creation is not free, so plans
// are cached per (size, sign) and executed on a shared scratch buffer under
// one lock. Throughput here is dominated by the transform itself.
struct PlanCache {
    std::mutex mu;
    std::map<std::pair<size_t, int>, fftw_plan> plans;
    fftw_complex* scratch = nullptr;
    size_t scratch_size = 0;

    fftw_plan get(size_t n, int sign) {
        auto key = std::make_pair(n, sign);
        auto it = plans.find(key);
        if (it != plans.end()) return it->second;
        if (n > scratch_size) {
            // grow before planning: plans are tied to the buffer address
            fftw_free(scratch);
            scratch = fftw_alloc_complex(n);
            if (!scratch) throw std::bad_alloc();
            scratch_size = n;
            // existing plans pointed at the old buffer; drop them
            for (auto& [k, p] : plans) fftw_destroy_plan(p);
            plans.clear();
        }
        fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), scratch, scratch, sign,
                                       FFTW_ESTIMATE);
        if (!p) throw std::runtime_error("fftw planning failed");
        plans.emplace(key, p);
        return p;
    }
};

PlanCache& cache() {
    static PlanCache c;
    return c;
}

void transform(std::vector<cplx>& data, int sign) {
    if (data.empty()) return;
    auto& c = cache();
    std::lock_guard<std::mutex> lock(c.mu);
    fftw_plan p = c.get(data.size(), sign);
    // std::complex<double> is layout-compatible with double[2]
    std::memcpy(c.scratch, reinterpret_cast<double*>(data.data()),
                data.size() * sizeof(cplx));
    fftw_execute(p);
    std::memcpy(reinterpret_cast<double*>(data.data()), c.scratch,
                data.size() * sizeof(cplx));
}

}  // namespace

void forward(std::vector<cplx>& data) { transform(data, FFTW_FORWARD); }

void inverse(std::vector<cplx>& data) { transform(data, FFTW_BACKWARD); }

std::vector<double> hilbert_envelope(const std::vector<double>& x) {
    size_t n = x.size();
    if (n == 0) return {};
    std::vector<cplx> spec(n);
    for (size_t i = 0; i < n; ++i) spec[i] = cplx(x[i], 0.0);
    forward(spec);
    // analytic signal: keep DC (and Nyquist for even n), double the
    // positive frequencies, zero the negative ones
    size_t half = n / 2;
    for (size_t i = 1; i < half; ++i) spec[i] *= 2.0;
    if (n % 2 == 1 && half >= 1) spec[half] *= 2.0;
    for (size_t i = half + 1; i < n; ++i) spec[i] = 0.0;
    inverse(spec);
    std::vector<double> env(n);
    for (size_t i = 0; i < n; ++i) env[i] = std::abs(spec[i]) / static_cast<double>(n);
    return env;
}

}  // namespace lorafb::fft
