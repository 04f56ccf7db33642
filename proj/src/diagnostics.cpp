#include "gpmu/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <unsupported/Eigen/FFT>

namespace gpmu {

void ResidualSeries::validate() const {
    if (values.size() < 1) throw invalid_model("empty residual series");
    if (!values.allFinite()) throw invalid_model("residual series must be finite");
    if (dt <= 0.0) throw invalid_model("residual series needs dt > 0");
}

Vec sample_acf(const ResidualSeries& series, int max_lag) {
    series.validate();
    const Index n = series.n();
    if (max_lag < 0 || max_lag >= n) throw invalid_model("max_lag must lie in [0, n)");
    const double mean = series.values.mean();
    const Vec e = series.values.array() - mean;
    const double denom = e.squaredNorm();
    if (denom <= 0.0) throw numerical_error("constant series has no autocorrelation");
    Vec r(max_lag + 1);
    for (int k = 0; k <= max_lag; ++k)
        r[k] = e.head(n - k).dot(e.tail(n - k)) / denom;
    return r;
}

Psd periodogram(const ResidualSeries& series) {
    series.validate();
    const Index n = series.n();
    if (n < 8) throw invalid_model("periodogram needs at least 8 samples");
    const double fs = 1.0 / series.dt;
    const double mean = series.values.mean();

    // Hann taper, renormalized so white-noise power is preserved
    Vec w(n);
    for (Index i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) /
                                     static_cast<double>(n - 1)));
    const double wpow = w.squaredNorm();

    std::vector<double> x(n);
    for (Index i = 0; i < n; ++i) x[static_cast<size_t>(i)] = (series.values[i] - mean) * w[i];

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, x);

    const Index half = n / 2;
    Psd out;
    out.freq_hz = Vec(half + 1);
    out.power = Vec(half + 1);
    for (Index k = 0; k <= half; ++k) {
        out.freq_hz[k] = static_cast<double>(k) * fs / static_cast<double>(n);
        const double mag2 = std::norm(spec[static_cast<size_t>(k)]);
        double p = mag2 / (fs * wpow);
        const bool interior = k != 0 && !(n % 2 == 0 && k == half);
        if (interior) p *= 2.0; // one-sided
        out.power[k] = p;
    }
    return out;
}

std::vector<PsdPeak> peak_pick(const Psd& psd, int max_peaks, double prominence_factor) {
    const Index n = psd.power.size();
    if (n == 0) throw invalid_model("empty spectrum");
    if (max_peaks < 1) return {};

    std::vector<double> sorted(psd.power.data(), psd.power.data() + n);
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    const double median = sorted[static_cast<size_t>(n / 2)];
    const double floor = prominence_factor * median;

    std::vector<PsdPeak> peaks;
    for (Index k = 1; k + 1 < n; ++k) {
        if (psd.power[k] >= psd.power[k - 1] && psd.power[k] > psd.power[k + 1] &&
            psd.power[k] > floor)
            peaks.push_back({psd.freq_hz[k], psd.power[k]});
    }
    std::stable_sort(peaks.begin(), peaks.end(),
                     [](const PsdPeak& a, const PsdPeak& b) { return a.power > b.power; });
    if (static_cast<int>(peaks.size()) > max_peaks) peaks.resize(max_peaks);
    return peaks;
}

} // namespace gpmu
