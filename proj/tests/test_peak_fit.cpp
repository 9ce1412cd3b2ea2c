#include "coop/errors.hpp"
#include "coop/observables.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace coop;

namespace {

SpectrumTrace synthetic(const std::vector<Peak>& peaks, double baseline, double lo, double hi, std::size_t n,
                        double noise = 0.0, std::uint64_t seed = 1) {
    SpectrumTrace t;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, noise > 0.0 ? noise : 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double nu = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
        t.freqs.push_back(nu);
        t.signal.push_back(lorentzian_sum(peaks, baseline, nu) + (noise > 0.0 ? g(rng) : 0.0));
    }
    return t;
}

}  // namespace

TEST(Lorentzian, HalfMaximumAtHalfWidth) {
    const std::vector<Peak> p{{10.0, 2.0, 6.0}};
    EXPECT_DOUBLE_EQ(lorentzian_sum(p, 0.5, 10.0), 2.5);
    EXPECT_DOUBLE_EQ(lorentzian_sum(p, 0.0, 13.0), 1.0);
}

TEST(PeakFit, RecoversSingleLorentzianExactly) {
    const Peak truth{-42.0, 3.5e5, 35.0};
    const auto trace = synthetic({truth}, 120.0, -300.0, 300.0, 301);
    const auto fit = peak_fit(trace, 1);
    ASSERT_TRUE(fit.converged);
    EXPECT_NEAR(fit.peaks[0].center, truth.center, 1e-6 * std::abs(truth.center));
    EXPECT_NEAR(fit.peaks[0].height, truth.height, 1e-6 * truth.height);
    EXPECT_NEAR(fit.peaks[0].fwhm, truth.fwhm, 1e-6 * truth.fwhm);
    EXPECT_NEAR(fit.baseline, 120.0, 1e-6 * 120.0);
    EXPECT_EQ(fit.covariance.rows(), 4);
}

TEST(PeakFit, ResolvesOverlappingPairWithNoise) {
    const double w = 40.0;
    const std::vector<Peak> truth{{-0.75 * w, 1.0, w}, {0.75 * w, 0.7, w}};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto trace = synthetic(truth, 0.1, -200.0, 200.0, 401, 0.01, seed);
        std::vector<Peak> init{{-20.0, 0.9, 50.0}, {25.0, 0.6, 50.0}};
        const auto fit = peak_fit(trace, 2, init);
        std::vector<double> c{fit.peaks[0].center, fit.peaks[1].center};
        std::sort(c.begin(), c.end());
        EXPECT_NEAR(c[0], truth[0].center, 0.05 * w) << seed;
        EXPECT_NEAR(c[1], truth[1].center, 0.05 * w) << seed;
    }
}

TEST(PeakFit, FixedCentersStayPut) {
    const std::vector<Peak> truth{{-100.0, 1.0, 30.0}, {100.0, 0.5, 30.0}};
    const auto trace = synthetic(truth, 0.0, -300.0, 300.0, 301);
    std::vector<Peak> init{{-95.0, 1.0, 20.0}, {105.0, 0.5, 20.0}};
    PeakFitOptions opts;
    opts.fix_centers = true;
    const auto fit = peak_fit(trace, 2, init, opts);
    EXPECT_DOUBLE_EQ(fit.peaks[0].center, -95.0);
    EXPECT_DOUBLE_EQ(fit.peaks[1].center, 105.0);
}

TEST(PeakFit, CenterWindowIsRespected) {
    const std::vector<Peak> truth{{50.0, 1.0, 30.0}};
    const auto trace = synthetic(truth, 0.0, -300.0, 300.0, 301);
    std::vector<Peak> init{{0.0, 1.0, 30.0}};
    PeakFitOptions opts;
    opts.center_window = 10.0;
    const auto fit = peak_fit(trace, 1, init, opts);
    EXPECT_LE(std::abs(fit.peaks[0].center), 10.0 + 1e-12);
}

TEST(PeakFit, DetectsPeaksByProminence) {
    const std::vector<Peak> truth{{-100.0, 1.0, 20.0}, {0.0, 0.05, 20.0}, {100.0, 0.5, 20.0}};
    const auto trace = synthetic(truth, 0.0, -300.0, 300.0, 601);
    EXPECT_EQ(detect_peaks(trace, 0.01).size(), 3u);
    EXPECT_EQ(detect_peaks(trace, 0.2).size(), 2u);
    const auto found = detect_peaks(trace, 0.01);
    EXPECT_NEAR(trace.freqs[found[0]], -100.0, 1.0);
}

TEST(PeakFit, RejectsBadRequests) {
    const auto trace = synthetic({{0.0, 1.0, 10.0}}, 0.0, -50.0, 50.0, 5);
    EXPECT_THROW(peak_fit(trace, 3), Error);
    const auto wide = synthetic({{0.0, 1.0, 10.0}}, 0.0, -50.0, 50.0, 101);
    EXPECT_THROW(peak_fit(wide, 0), Error);
}
