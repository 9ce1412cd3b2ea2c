#include "coop/errors.hpp"
#include "coop/levmar.hpp"
#include "coop/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace coop {

namespace {

double half_max_width(const SpectrumTrace& t, std::size_t k, double floor_value) {
    const double half = floor_value + 0.5 * (t.signal[k] - floor_value);
    std::size_t lo = k, hi = k;
    while (lo > 0 && t.signal[lo] > half) --lo;
    while (hi + 1 < t.signal.size() && t.signal[hi] > half) ++hi;
    return t.freqs[hi] - t.freqs[lo];
}

}  // namespace

double lorentzian_sum(const std::vector<Peak>& peaks, double baseline, double nu) {
    double s = baseline;
    for (const auto& p : peaks) {
        const double u = 2.0 * (nu - p.center) / p.fwhm;
        s += p.height / (1.0 + u * u);
    }
    return s;
}

std::vector<std::size_t> detect_peaks(const SpectrumTrace& trace, double rel_prominence) {
    const auto& y = trace.signal;
    const std::size_t n = y.size();
    std::vector<std::pair<double, std::size_t>> found;
    if (n < 3) return {};
    const double ymax = *std::max_element(y.begin(), y.end());

    for (std::size_t k = 1; k + 1 < n; ++k) {
        if (!(y[k] > y[k - 1] && y[k] >= y[k + 1])) continue;
        // Prominence: height above the higher of the two saddles towards taller peaks.
        double left_min = y[k];
        for (std::size_t j = k; j-- > 0;) {
            if (y[j] > y[k]) break;
            left_min = std::min(left_min, y[j]);
        }
        double right_min = y[k];
        for (std::size_t j = k + 1; j < n; ++j) {
            if (y[j] > y[k]) break;
            right_min = std::min(right_min, y[j]);
        }
        const double prominence = y[k] - std::max(left_min, right_min);
        if (prominence >= rel_prominence * ymax) found.emplace_back(prominence, k);
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::size_t> idx;
    for (const auto& f : found) idx.push_back(f.second);
    return idx;
}

PeakSet peak_fit(const SpectrumTrace& trace, std::size_t n_peaks, const std::optional<std::vector<Peak>>& init,
                 const PeakFitOptions& options) {
    trace.validate();
    if (n_peaks == 0) throw FitError("peak_fit needs at least one peak");
    const std::size_t m = trace.freqs.size();
    if (m < 3 * n_peaks + 1) throw FitError("too few samples for the requested number of peaks");

    const double f_lo = trace.freqs.front();
    const double f_hi = trace.freqs.back();
    const double mid = 0.5 * (f_lo + f_hi);
    const double sx = std::max(0.5 * (f_hi - f_lo), 1e-12);
    const double ymax = *std::max_element(trace.signal.begin(), trace.signal.end());
    const double ymin = *std::min_element(trace.signal.begin(), trace.signal.end());
    const double sy = ymax > 0.0 ? ymax : 1.0;

    double min_spacing = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < m; ++k) min_spacing = std::min(min_spacing, trace.freqs[k] - trace.freqs[k - 1]);

    std::vector<Peak> guess;
    if (init) {
        if (init->size() != n_peaks) throw FitError("initial guess count does not match n_peaks");
        guess = *init;
    } else {
        const auto idx = detect_peaks(trace, 0.0);
        if (idx.size() < n_peaks)
            throw FitError("found " + std::to_string(idx.size()) + " candidate peaks, need " + std::to_string(n_peaks));
        for (std::size_t k = 0; k < n_peaks; ++k) {
            const std::size_t i = idx[k];
            const double w = std::max(half_max_width(trace, i, ymin), 2.0 * min_spacing);
            guess.push_back({trace.freqs[i], trace.signal[i] - ymin, w});
        }
    }

    // Scaled parameter layout: (h, c, w) per peak, then baseline.
    const auto np = static_cast<Eigen::Index>(3 * n_peaks + 1);
    Eigen::VectorXd p0(np), lo(np), hi(np);
    const double w_min = 0.25 * min_spacing / sx;
    for (std::size_t k = 0; k < n_peaks; ++k) {
        const auto b = static_cast<Eigen::Index>(3 * k);
        const double c = (guess[k].center - mid) / sx;
        p0(b) = std::clamp(guess[k].height / sy, 0.0, 10.0);
        lo(b) = 0.0;
        hi(b) = 10.0;
        p0(b + 1) = c;
        if (options.fix_centers) {
            lo(b + 1) = hi(b + 1) = c;
        } else if (options.center_window > 0.0) {
            lo(b + 1) = c - options.center_window / sx;
            hi(b + 1) = c + options.center_window / sx;
        } else {
            lo(b + 1) = -1.5;
            hi(b + 1) = 1.5;
        }
        lo(b + 2) = w_min;
        hi(b + 2) = 4.0;
        if (options.width_factor > 1.0) {
            lo(b + 2) = std::max(w_min, guess[k].fwhm / sx / options.width_factor);
            hi(b + 2) = std::max(lo(b + 2), guess[k].fwhm / sx * options.width_factor);
        }
        p0(b + 2) = std::clamp(guess[k].fwhm / sx, lo(b + 2), hi(b + 2));
    }
    p0(np - 1) = options.fit_baseline ? std::clamp(ymin / sy, -1.0, 1.0) : 0.0;
    lo(np - 1) = options.fit_baseline ? -1.0 : 0.0;
    hi(np - 1) = options.fit_baseline ? 1.0 : 0.0;

    // Only parameters with a non-degenerate box are optimised.
    std::vector<Eigen::Index> free;
    for (Eigen::Index k = 0; k < np; ++k)
        if (hi(k) > lo(k)) free.push_back(k);
    const auto nf = static_cast<Eigen::Index>(free.size());

    Eigen::VectorXd xs(static_cast<Eigen::Index>(m)), ys(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
        xs(static_cast<Eigen::Index>(i)) = (trace.freqs[i] - mid) / sx;
        ys(static_cast<Eigen::Index>(i)) = trace.signal[i] / sy;
    }
    auto expand = [&](const Eigen::VectorXd& f) {
        Eigen::VectorXd p = p0;
        for (Eigen::Index k = 0; k < nf; ++k) p(free[static_cast<std::size_t>(k)]) = f(k);
        return p;
    };
    auto model = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd out = Eigen::VectorXd::Constant(xs.size(), p(np - 1));
        for (std::size_t k = 0; k < n_peaks; ++k) {
            const auto b = static_cast<Eigen::Index>(3 * k);
            const Eigen::ArrayXd u = 2.0 * (xs.array() - p(b + 1)) / p(b + 2);
            out.array() += p(b) / (1.0 + u * u);
        }
        return out;
    };
    ResidualFn residuals = [&](const Eigen::VectorXd& f) -> Eigen::VectorXd { return model(expand(f)) - ys; };

    Eigen::VectorXd f0(nf), flo(nf), fhi(nf);
    for (Eigen::Index k = 0; k < nf; ++k) {
        const auto j = free[static_cast<std::size_t>(k)];
        f0(k) = p0(j);
        flo(k) = lo(j);
        fhi(k) = hi(j);
    }
    LmOptions lm;
    lm.max_iterations = options.max_iterations;
    lm.jac_floor = 1e-3;
    const LmResult res = levenberg_marquardt(residuals, f0, flo, fhi, lm);

    const Eigen::VectorXd r_signal = res.residuals * sy;
    const double rms = std::sqrt(r_signal.squaredNorm() / static_cast<double>(m));
    if (res.status != LmStatus::Converged)
        throw FitError("Lorentzian fit did not converge after " + std::to_string(res.iterations) +
                       " iterations (RMS residual " + std::to_string(rms) + ")");

    const Eigen::VectorXd p = expand(res.x);
    PeakSet out;
    for (std::size_t k = 0; k < n_peaks; ++k) {
        const auto b = static_cast<Eigen::Index>(3 * k);
        out.peaks.push_back({mid + p(b + 1) * sx, p(b) * sy, p(b + 2) * sx});
    }
    out.baseline = p(np - 1) * sy;
    out.residual_norm = rms;
    out.max_residual = r_signal.cwiseAbs().maxCoeff();
    out.converged = true;
    out.iterations = res.iterations;

    if (!res.singular) {
        Eigen::VectorXd scale(np);
        for (std::size_t k = 0; k < n_peaks; ++k) {
            const auto b = static_cast<Eigen::Index>(3 * k);
            scale(b) = sy;
            scale(b + 1) = sx;
            scale(b + 2) = sx;
        }
        scale(np - 1) = sy;
        // Residuals are unweighted; scale by the residual variance.
        const double dof = std::max<double>(1.0, static_cast<double>(m) - static_cast<double>(nf));
        const double s2 = res.chi2 / dof;
        out.covariance = Eigen::MatrixXd::Zero(np, np);
        for (Eigen::Index a = 0; a < nf; ++a)
            for (Eigen::Index b = 0; b < nf; ++b) {
                const auto i = free[static_cast<std::size_t>(a)];
                const auto j = free[static_cast<std::size_t>(b)];
                out.covariance(i, j) = res.covariance(a, b) * s2 * scale(i) * scale(j);
            }
    }
    return out;
}

}  // namespace coop
