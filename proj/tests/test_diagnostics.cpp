#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gpmu/diagnostics.hpp"
#include "gpmu/dynamics.hpp"
#include "gpmu/rng.hpp"

#include <cmath>
#include <vector>

using namespace gpmu;

namespace {

ResidualSeries series_of(const Vec& v, double dt, std::string label = "e") {
    ResidualSeries s;
    s.values = v;
    s.dt = dt;
    s.label = std::move(label);
    return s;
}

Vec white_noise(Index n, std::uint64_t seed) {
    SplitRng rng(seed);
    return Vec::NullaryExpr(n, [&](Index) { return rng.normal(); });
}

} // namespace

TEST_CASE("sample acf: unit lag zero, whiteness band, harmonic structure") {
    SUBCASE("lag zero is one by construction") {
        const auto s = series_of(white_noise(64, 3), 0.1);
        const Vec r = sample_acf(s, 10);
        CHECK(r[0] == 1.0);
        CHECK(r.size() == 11);
    }

    SUBCASE("white noise stays inside the Bartlett band") {
        const Index n = 4000;
        const auto s = series_of(white_noise(n, 17), 0.01);
        const Vec r = sample_acf(s, 100);
        const double band = 1.0 / std::sqrt(static_cast<double>(n));
        int tight = 0;
        for (int k = 1; k <= 100; ++k) {
            CHECK(std::abs(r[k]) < 4.0 * band);
            if (std::abs(r[k]) < 2.0 * band) ++tight;
        }
        CHECK(tight >= 95);
    }

    SUBCASE("a sinusoid leaves a cosine autocorrelation") {
        const Index n = 2000;
        const double dt = 0.01, omega = 2.0 * M_PI * 5.0;
        Vec x(n);
        for (Index i = 0; i < n; ++i) x[i] = std::cos(omega * static_cast<double>(i) * dt);
        const Vec r = sample_acf(series_of(x, dt), 100);
        for (int k = 1; k <= 100; ++k) {
            const double expect = (1.0 - static_cast<double>(k) / static_cast<double>(n)) *
                                  std::cos(omega * static_cast<double>(k) * dt);
            CHECK(std::abs(r[k] - expect) < 0.02);
        }
    }

    SUBCASE("reversal and affine scaling leave the acf unchanged") {
        const auto x = white_noise(300, 9);
        const Vec r = sample_acf(series_of(x, 0.05), 40);
        const Vec rev = sample_acf(series_of(x.reverse(), 0.05), 40);
        CHECK((r - rev).cwiseAbs().maxCoeff() < 1e-12);
        const Vec scaled = (7.3 * x.array() - 2.1).matrix();
        const Vec rs = sample_acf(series_of(scaled, 0.05), 40);
        CHECK((r - rs).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("degenerate inputs throw") {
        CHECK_THROWS_AS(sample_acf(series_of(Vec(), 0.1), 0), invalid_model);
        CHECK_THROWS_AS(sample_acf(series_of(Vec::Ones(10), 0.1), 3), numerical_error);
        CHECK_THROWS_AS(sample_acf(series_of(white_noise(10, 1), 0.0), 3), invalid_model);
        CHECK_THROWS_AS(sample_acf(series_of(white_noise(10, 1), 0.1), 10), invalid_model);
        Vec bad = white_noise(10, 1);
        bad[4] = std::nan("");
        CHECK_THROWS_AS(sample_acf(series_of(bad, 0.1), 3), invalid_model);
    }
}

TEST_CASE("periodogram: axis, parseval, tone recovery") {
    SUBCASE("frequency axis spans dc to nyquist") {
        const auto psd = periodogram(series_of(white_noise(256, 5), 0.02));
        CHECK(psd.freq_hz[0] == 0.0);
        CHECK(psd.freq_hz[psd.freq_hz.size() - 1] == doctest::Approx(25.0).epsilon(1e-12));
        CHECK(psd.df() == doctest::Approx(50.0 / 256.0).epsilon(1e-12));
        CHECK(psd.power.minCoeff() >= 0.0);
    }

    SUBCASE("integrated density matches the sample variance") {
        const Index n = 4096;
        const Vec x = white_noise(n, 21);
        const auto psd = periodogram(series_of(x, 0.01));
        const double var = (x.array() - x.mean()).square().sum() / static_cast<double>(n);
        const double integral = psd.power.sum() * psd.df();
        CHECK(integral == doctest::Approx(var).epsilon(0.05));
    }

    SUBCASE("single tone: peak at the tone, half the squared amplitude") {
        const Index n = 4000;
        const double dt = 0.01, f0 = 5.0, amp = 2.0;
        Vec x(n);
        for (Index i = 0; i < n; ++i)
            x[i] = amp * std::sin(2.0 * M_PI * f0 * static_cast<double>(i) * dt);
        const auto psd = periodogram(series_of(x, dt));
        Index kmax;
        psd.power.maxCoeff(&kmax);
        CHECK(std::abs(psd.freq_hz[kmax] - f0) <= psd.df() / 2.0 + 1e-12);
        // the hann taper smears the line over a few bins; integrate around it
        double ptone = 0.0;
        for (Index k = std::max<Index>(kmax - 4, 0);
             k <= std::min<Index>(kmax + 4, psd.power.size() - 1); ++k)
            ptone += psd.power[k] * psd.df();
        CHECK(ptone == doctest::Approx(amp * amp / 2.0).epsilon(0.02));
    }

    SUBCASE("two tones are recovered strongest first") {
        const Index n = 4000;
        const double dt = 0.01;
        Vec x(n);
        for (Index i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) * dt;
            x[i] = std::sin(2.0 * M_PI * 2.0 * t) + 0.5 * std::sin(2.0 * M_PI * 8.0 * t);
        }
        const auto psd = periodogram(series_of(x, dt));
        const auto peaks = peak_pick(psd, 4);
        REQUIRE(peaks.size() >= 2);
        CHECK(std::abs(peaks[0].freq_hz - 2.0) <= psd.df());
        CHECK(std::abs(peaks[1].freq_hz - 8.0) <= psd.df());
        CHECK(peaks[0].power > peaks[1].power);
    }

    SUBCASE("amplitude scaling moves power, not frequencies") {
        const Vec x = white_noise(512, 33);
        const auto base = periodogram(series_of(x, 0.05));
        const auto scaled = periodogram(series_of(7.3 * x, 0.05));
        CHECK((scaled.freq_hz - base.freq_hz).cwiseAbs().maxCoeff() == 0.0);
        CHECK((scaled.power - 7.3 * 7.3 * base.power).cwiseAbs().maxCoeff() <
              1e-9 * base.power.maxCoeff());
    }

    SUBCASE("short series throw") {
        CHECK_THROWS_AS(periodogram(series_of(white_noise(7, 1), 0.01)), invalid_model);
    }
}

TEST_CASE("structural residual spectrum peaks at the natural frequency") {
    // undamped-frequency landmark: sqrt(5)/(2 pi) Hz for a unit mass on a
    // 5 N/m spring; the damped shift at 5% damping is far below a bin
    ShearBuildingModel m;
    m.masses = Vec::Constant(1, 1.0);
    m.story_stiffnesses = Vec::Constant(1, 5.0);
    m.damping = ViscousRatioDamping{0.05};
    m.observed_dofs = {0};
    const auto data = synthesize_dataset(m, GwnExcitation{1.0, 13}, 0.01, 80.0, 0.0);

    const auto psd = periodogram(series_of(data.output.col(0), 0.01, "a1"));
    const auto peaks = peak_pick(psd, 1);
    REQUIRE(peaks.size() == 1);
    const double f_n = std::sqrt(5.0) / (2.0 * M_PI); // 0.3558812717085886 Hz
    CHECK(std::abs(peaks[0].freq_hz - f_n) / f_n < 0.05);
}

TEST_CASE("peak picking: prominence floor, ordering, count cap") {
    Psd psd;
    psd.freq_hz = Vec::LinSpaced(50, 0.0, 24.5);
    psd.power = Vec::Constant(50, 0.1);
    psd.power[10] = 5.0;
    psd.power[20] = 3.0;
    psd.power[30] = 0.5; // below 10 x median = 1.0: not prominent

    SUBCASE("prominent local maxima only, strongest first") {
        const auto peaks = peak_pick(psd, 10);
        REQUIRE(peaks.size() == 2);
        CHECK(peaks[0].freq_hz == psd.freq_hz[10]);
        CHECK(peaks[0].power == 5.0);
        CHECK(peaks[1].freq_hz == psd.freq_hz[20]);
    }

    SUBCASE("the cap limits the list") {
        CHECK(peak_pick(psd, 1).size() == 1);
        CHECK(peak_pick(psd, 1)[0].power == 5.0);
        CHECK(peak_pick(psd, 0).empty());
    }

    SUBCASE("flat spectra have no peaks") {
        Psd flat;
        flat.freq_hz = Vec::LinSpaced(32, 0.0, 15.5);
        flat.power = Vec::Constant(32, 0.7);
        CHECK(peak_pick(flat, 5).empty());
    }

    SUBCASE("a two-bin plateau yields a single peak") {
        Psd plat;
        plat.freq_hz = Vec::LinSpaced(9, 0.0, 4.0);
        plat.power = Vec::Constant(9, 0.01);
        plat.power[4] = 2.0;
        plat.power[5] = 2.0;
        CHECK(peak_pick(plat, 5).size() == 1);
    }

    SUBCASE("empty spectrum throws") {
        CHECK_THROWS_AS(peak_pick(Psd{}, 3), invalid_model);
    }
}
