#pragma once

#include "gpmu/types.hpp"

#include <string>
#include <vector>

namespace gpmu {

struct ResidualSeries {
    Vec values; // m/s^2
    double dt = 0.0;
    std::string label;

    Index n() const { return values.size(); }
    void validate() const;
};

/// Biased sample autocorrelation r(k) = sum (e_i - m)(e_{i+k} - m) / sum
/// (e_i - m)^2 for lags 0..max_lag; r(0) = 1. Constant series are an error
/// (zero normalization).
Vec sample_acf(const ResidualSeries& series, int max_lag);

struct Psd {
    Vec freq_hz; // 0 .. 1/(2 dt)
    Vec power;   // one-sided density, (units^2)/Hz

    double df() const { return freq_hz.size() > 1 ? freq_hz[1] - freq_hz[0] : 0.0; }
};

/// Mean-removed, Hann-tapered periodogram (taper renormalized so Parseval
/// holds against the series variance).
Psd periodogram(const ResidualSeries& series);

struct PsdPeak {
    double freq_hz = 0.0;
    double power = 0.0;
};

/// Local maxima above prominence_factor x median power, strongest first, at
/// most max_peaks. May return empty (flat spectra have no dominant peaks).
std::vector<PsdPeak> peak_pick(const Psd& psd, int max_peaks, double prominence_factor = 10.0);

} // namespace gpmu
