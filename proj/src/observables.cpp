#include "coop/observables.hpp"

#include "coop/errors.hpp"
#include "coop/levmar.hpp"
#include "coop/parallel.hpp"
#include "coop/units.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

namespace coop {

namespace {

double mean_frequency(const SystemModel& model) {
    double s = 0.0;
    for (const auto& e : model.emitters) s += e.omega;
    return s / static_cast<double>(model.size());
}

double nearest_value(std::span<const double> xs, std::span<const double> ys, double x) {
    const auto it = std::lower_bound(xs.begin(), xs.end(), x);
    std::size_t k = static_cast<std::size_t>(it - xs.begin());
    if (k == xs.size()) k = xs.size() - 1;
    if (k > 0 && std::abs(xs[k - 1] - x) < std::abs(xs[k] - x)) --k;
    return ys[k];
}

DressedStates pair_modes(const SystemModel& model) {
    if (model.size() != 2) throw ModelError("dressed states are defined for emitter pairs only");
    return eigenmodes(model.emitters[0].omega, model.emitters[1].omega, model.J(0, 1), model);
}

// Fails before the generator is allocated rather than after.
void require_steady_state_capacity(const SystemModel& model) {
    const std::size_t d = hilbert_dim(std::min(model.size(), kMaxEmitters));
    if (model.size() > kMaxEmitters || d * d > kMaxSteadyStateDim)
        throw CapacityError("steady states are limited to " + std::to_string(kMaxSteadyStateDim) +
                            "-dimensional generators (" + std::to_string(model.size()) + " emitters requested)");
}

}  // namespace

// ---------------------------------------------------------------------------
// Spectra

void SpectrumTrace::validate() const {
    if (freqs.empty()) throw ShapeError("spectrum is empty");
    if (freqs.size() != signal.size()) throw ShapeError("spectrum axis and signal lengths differ");
    for (std::size_t k = 1; k < freqs.size(); ++k)
        if (!(freqs[k] > freqs[k - 1])) throw ShapeError("spectrum axis must be strictly increasing");
    for (double s : signal)
        if (!(s >= 0.0)) throw NumericalError("spectrum signal must be non-negative");
}

SpectrumTrace SpectrumTrace::normalized_copy() const {
    SpectrumTrace out = *this;
    const double m = *std::max_element(signal.begin(), signal.end());
    if (m > 0.0)
        for (double& s : out.signal) s /= m;
    out.normalized = true;
    return out;
}

double detected_rate(const SystemModel& model, const DensityOperator& rho) {
    return units::photons_per_second((1.0 - model.alpha) * model.gamma0) * std::max(0.0, rho.total_excitation());
}

DensityOperator driven_steady_state(const SystemModel& model, double rabi, double laser_freq) {
    require_steady_state_capacity(model);
    return steady_state(build_liouvillian(model, DriveParams::uniform(model.size(), rabi, laser_freq)));
}

SpectrumTrace excitation_spectrum(const SystemModel& model, double rabi, std::span<const double> laser_freqs,
                                  unsigned threads) {
    if (laser_freqs.empty()) throw ShapeError("scan must not be empty");
    model.validate();
    require_steady_state_capacity(model);
    SpectrumTrace trace;
    trace.freqs.assign(laser_freqs.begin(), laser_freqs.end());
    trace.signal.resize(laser_freqs.size());
    trace.rabi = rabi;
    for (const auto& e : model.emitters) trace.emitter_freqs.push_back(e.omega);

    parallel_for(laser_freqs.size(), threads, [&](std::size_t k) {
        trace.signal[k] = detected_rate(model, driven_steady_state(model, rabi, laser_freqs[k]));
    });
    trace.validate();
    return trace;
}

// ---------------------------------------------------------------------------
// Extinction

std::vector<double> dressed_scan_grid(const SystemModel& model, double coupling, double rabi,
                                      const ExtinctionOptions& options) {
    const DressedStates ds = eigenmodes(model.emitters[0].omega, model.emitters[1].omega, coupling, model);
    std::vector<double> grid;
    double min_step = std::numeric_limits<double>::infinity();
    for (const auto& [center, gamma] : {std::pair{ds.freq_minus, ds.gamma_minus}, std::pair{ds.freq_plus, ds.gamma_plus}}) {
        const double w0 = gamma + 2.0 * model.dephasing;
        const double w = std::sqrt(w0 * w0 + 2.0 * rabi * rabi);
        const double half = options.window_widths * w;
        const double step = w / options.points_per_width;
        min_step = std::min(min_step, step);
        const auto n = static_cast<int>(std::ceil(half / step));
        for (int k = -n; k <= n; ++k) grid.push_back(center + k * step);
    }
    std::sort(grid.begin(), grid.end());
    std::vector<double> merged;
    for (double f : grid)
        if (merged.empty() || f - merged.back() > 0.5 * min_step) merged.push_back(f);
    return merged;
}

ExtinctionPoint extinction_point(const PairSpec& pair, double rabi, const ExtinctionOptions& options) {
    PairSpec spec = pair;
    spec.detuning = std::abs(pair.detuning);
    const SystemModel model = make_pair_model(spec);
    const DressedStates ds = pair_modes(model);
    const auto grid = dressed_scan_grid(model, spec.coupling, rabi, options);
    const SpectrumTrace trace = excitation_spectrum(model, rabi, grid, 1);

    const double w_minus = ds.gamma_minus + 2.0 * model.dephasing;
    const double w_plus = ds.gamma_plus + 2.0 * model.dephasing;
    std::vector<Peak> init{
        {ds.freq_minus, nearest_value(trace.freqs, trace.signal, ds.freq_minus), w_minus},
        {ds.freq_plus, nearest_value(trace.freqs, trace.signal, ds.freq_plus), w_plus},
    };

    ExtinctionPoint out;
    out.detuning = spec.detuning;
    out.flagged = ds.delta_tilde < 0.5 * std::max(w_minus, w_plus);
    PeakFitOptions fit_opts;
    fit_opts.fit_baseline = false;
    fit_opts.fix_centers = out.flagged;
    fit_opts.center_window = std::max(std::min(0.25 * ds.delta_tilde, std::max(w_minus, w_plus)), 1e-3);
    fit_opts.width_factor = 2.0;
    const PeakSet peaks = peak_fit(trace, 2, init, fit_opts);

    const bool plus_super = ds.plus_is_superradiant();
    out.super_height = plus_super ? peaks.peaks[1].height : peaks.peaks[0].height;
    out.sub_height = plus_super ? peaks.peaks[0].height : peaks.peaks[1].height;
    if (!(out.super_height > 0.0)) throw NumericalError("superradiant peak has zero height");
    out.ratio = out.sub_height / out.super_height;
    return out;
}

std::vector<ExtinctionPoint> extinction_ratio_curve(const PairSpec& model_template, std::span<const double> detunings,
                                                    double rabi, const ExtinctionOptions& options) {
    std::vector<ExtinctionPoint> out(detunings.size());
    ExtinctionOptions inner = options;
    inner.threads = 1;
    parallel_for(detunings.size(), options.threads, [&](std::size_t k) {
        PairSpec spec = model_template;
        spec.detuning = detunings[k];
        out[k] = extinction_point(spec, rabi, inner);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Correlations

EigenstateSelector parse_selector(const std::string& name) {
    if (name == "plus") return EigenstateSelector::Plus;
    if (name == "minus") return EigenstateSelector::Minus;
    if (name == "single") return EigenstateSelector::Single;
    throw ModelError("unknown eigenstate selector '" + name + "' (expected plus, minus or single)");
}

std::string to_string(EigenstateSelector sel) {
    switch (sel) {
        case EigenstateSelector::Plus: return "plus";
        case EigenstateSelector::Minus: return "minus";
        case EigenstateSelector::Single: return "single";
    }
    return "single";
}

double resonant_laser(const SystemModel& model, EigenstateSelector sel) {
    if (sel == EigenstateSelector::Single) return model.emitters.at(0).omega;
    const DressedStates ds = pair_modes(model);
    return sel == EigenstateSelector::Plus ? ds.freq_plus : ds.freq_minus;
}

CorrelationTrace g2_curve(const SystemModel& model, const DriveParams& drive, std::span<const double> taus_ns) {
    require_steady_state_capacity(model);
    const Liouvillian L = build_liouvillian(model, drive);
    const DensityOperator rho = steady_state(L);
    const auto collapse = sideband_collapse_ops(model);
    const auto measure = sideband_measure_ops(model);

    double rate = 0.0;
    for (const auto& m : measure) rate += rho.expectation(m);
    if (!(rate > 0.0)) throw NumericalError("steady-state detected rate is zero; g2 cannot be normalised");

    std::vector<double> abs_taus;
    for (double t : taus_ns) abs_taus.push_back(std::abs(t));
    std::sort(abs_taus.begin(), abs_taus.end());
    abs_taus.erase(std::unique(abs_taus.begin(), abs_taus.end()), abs_taus.end());
    const auto g = regression_correlation(L, rho, collapse, measure, abs_taus);

    CorrelationTrace out;
    out.taus.assign(taus_ns.begin(), taus_ns.end());
    out.rate = rate * 1e6;
    for (double t : taus_ns) {
        const auto k = static_cast<std::size_t>(std::lower_bound(abs_taus.begin(), abs_taus.end(), std::abs(t)) -
                                                abs_taus.begin());
        out.g2.push_back(std::max(0.0, g[k] / (rate * rate)));
    }
    return out;
}

std::vector<double> symmetric_axis(double tau_max, std::size_t points) {
    std::vector<double> axis;
    const double step = tau_max / static_cast<double>(points);
    for (std::size_t k = points; k > 0; --k) axis.push_back(-step * static_cast<double>(k));
    axis.push_back(0.0);
    for (std::size_t k = 1; k <= points; ++k) axis.push_back(step * static_cast<double>(k));
    return axis;
}

OscillationFit fit_damped_oscillation(const CorrelationTrace& trace) {
    std::vector<double> t, y;
    for (std::size_t k = 0; k < trace.taus.size(); ++k) {
        if (trace.taus[k] < 0.0) continue;
        t.push_back(trace.taus[k]);
        y.push_back(trace.g2[k]);
    }
    if (t.size() < 8) throw FitError("too few non-negative delays for an oscillation fit");

    // First local maximum after zero delay seeds the oscillation frequency.
    std::size_t first_max = 0;
    for (std::size_t k = 1; k + 1 < y.size(); ++k)
        if (y[k] > y[k - 1] && y[k] >= y[k + 1] && y[k] > 1.0) {
            first_max = k;
            break;
        }
    if (first_max == 0) throw FitError("g2 shows no oscillation to fit");
    const double w0 = std::numbers::pi / t[first_max];
    const double overshoot = std::max(y[first_max] - 1.0, 1e-6);
    const double a0 = std::max(-std::log(overshoot) / t[first_max], 1e-3);

    const auto n = static_cast<Eigen::Index>(t.size());
    ResidualFn residuals = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double tk = t[static_cast<std::size_t>(k)];
            const double model = 1.0 - std::exp(-p(0) * tk) * (std::cos(p(1) * tk) + p(2) * std::sin(p(1) * tk));
            r(k) = model - y[static_cast<std::size_t>(k)];
        }
        return r;
    };
    Eigen::Vector3d x0(a0, w0, a0 / w0), lo(0.0, 0.2 * w0, -10.0), hi(50.0, 5.0 * w0, 10.0);
    const LmResult res = levenberg_marquardt(residuals, x0, lo, hi);
    if (res.status != LmStatus::Converged) throw FitError("oscillation fit did not converge");

    OscillationFit out;
    out.damping_per_ns = res.x(0);
    // Resonance fluorescence: W^2 = Omega^2 - (Gamma/4)^2 with a = 3 Gamma / 4.
    const double omega = std::sqrt(res.x(1) * res.x(1) + std::pow(res.x(0) / 3.0, 2));
    out.rabi_mhz = omega / units::kTwoPi * 1e3;
    out.sine_weight = res.x(2);
    out.residual_rms = std::sqrt(res.chi2 / static_cast<double>(n));
    return out;
}

// ---------------------------------------------------------------------------
// Lifetimes

DensityOperator single_excitation_state(const SystemModel& model, EigenstateSelector sel) {
    const std::size_t n = model.size();
    CVector psi = CVector::Zero(static_cast<Eigen::Index>(hilbert_dim(n)));
    if (sel == EigenstateSelector::Single) {
        psi(1) = 1.0;
    } else {
        const DressedStates ds = pair_modes(model);
        const Eigen::Vector2d v = sel == EigenstateSelector::Plus ? ds.plus_vector() : ds.minus_vector();
        psi(1) = v(0);  // |eg>: emitter 0 excited
        psi(2) = v(1);  // |ge>
    }
    return DensityOperator::pure(psi);
}

LifetimeResult lifetime_trace(const SystemModel& model, EigenstateSelector initial, std::span<const double> times_ns) {
    model.validate();
    double gamma_est = model.gamma0;
    if (initial != EigenstateSelector::Single) {
        const DressedStates ds = pair_modes(model);
        gamma_est = initial == EigenstateSelector::Plus ? ds.gamma_plus : ds.gamma_minus;
    }

    LifetimeResult out;
    out.tau_estimate_ns = units::lifetime_ns(gamma_est);
    out.window_lo_ns = 0.1 * out.tau_estimate_ns;
    out.window_hi_ns = 3.0 * out.tau_estimate_ns;

    const DensityOperator rho0 = single_excitation_state(model, initial);
    const Liouvillian L = build_liouvillian(model, DriveParams::uniform(model.size(), 0.0, mean_frequency(model)));
    const double per_excitation = units::photons_per_second(model.gamma0);

    auto rates_at = [&](std::span<const double> ts) {
        std::vector<double> r;
        for (const auto& rho : propagate(L, rho0, ts)) r.push_back(per_excitation * rho.total_excitation());
        return r;
    };

    constexpr std::size_t kWindowPoints = 81;
    std::vector<double> tw(kWindowPoints);
    for (std::size_t k = 0; k < kWindowPoints; ++k)
        tw[k] = out.window_lo_ns +
                (out.window_hi_ns - out.window_lo_ns) * static_cast<double>(k) / static_cast<double>(kWindowPoints - 1);
    const auto yw = rates_at(tw);

    // Log-linear seed, then relative-residual refinement.
    const auto n = static_cast<Eigen::Index>(kWindowPoints);
    Eigen::MatrixXd design(n, 2);
    Eigen::VectorXd logy(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        design(k, 0) = 1.0;
        design(k, 1) = -tw[static_cast<std::size_t>(k)];
        logy(k) = std::log(yw[static_cast<std::size_t>(k)]);
    }
    const Eigen::Vector2d seed = design.colPivHouseholderQr().solve(logy);
    ResidualFn single = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(n);
        for (Eigen::Index k = 0; k < n; ++k)
            r(k) = std::exp(p(0) - p(1) * tw[static_cast<std::size_t>(k)]) / yw[static_cast<std::size_t>(k)] - 1.0;
        return r;
    };
    const Eigen::Vector2d lo(seed(0) - 10.0, 1e-6), hi(seed(0) + 10.0, 100.0);
    const LmResult fit1 = levenberg_marquardt(single, seed, lo, hi);
    out.tau_ns = 1.0 / fit1.x(1);
    out.residual_rms = std::sqrt(fit1.chi2 / static_cast<double>(n));

    constexpr double kSingleExpTolerance = 2e-3;
    if (out.residual_rms > kSingleExpTolerance) {
        ResidualFn dbl = [&](const Eigen::VectorXd& p) {
            Eigen::VectorXd r(n);
            for (Eigen::Index k = 0; k < n; ++k) {
                const double t = tw[static_cast<std::size_t>(k)];
                r(k) = (std::exp(p(0) - p(1) * t) + std::exp(p(2) - p(3) * t)) / yw[static_cast<std::size_t>(k)] - 1.0;
            }
            return r;
        };
        const double k1 = fit1.x(1);
        Eigen::Vector4d x0(fit1.x(0) - std::log(2.0), 1.3 * k1, fit1.x(0) - std::log(2.0), 0.7 * k1);
        Eigen::Vector4d dlo(lo(0), 1e-6, lo(0), 1e-6), dhi(hi(0), 100.0, hi(0), 100.0);
        const LmResult fit2 = levenberg_marquardt(dbl, x0, dlo, dhi);
        out.multi_exponential = true;
        out.tau_fast_ns = 1.0 / std::max(fit2.x(1), fit2.x(3));
        out.tau_slow_ns = 1.0 / std::min(fit2.x(1), fit2.x(3));
        std::ostringstream msg;
        msg << "decay is not single-exponential (relative RMS residual " << out.residual_rms
            << "); two-component fit gives tau_fast = " << out.tau_fast_ns << " ns, tau_slow = " << out.tau_slow_ns
            << " ns";
        out.warning = msg.str();
    }

    if (times_ns.empty()) {
        out.times = tw;
        out.rate = yw;
    } else {
        out.times.assign(times_ns.begin(), times_ns.end());
        out.rate = rates_at(times_ns);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Saturation

std::vector<SaturationPoint> saturation_series(const SystemModel& model, std::span<const double> rabis,
                                               std::span<const double> laser_freqs,
                                               const SaturationOptions& options) {
    for (std::size_t k = 1; k < rabis.size(); ++k)
        if (!(rabis[k] > rabis[k - 1])) throw ModelError("drive amplitudes must be increasing");

    std::vector<double> expected;
    std::vector<std::string> names;
    if (model.size() == 2) {
        const DressedStates ds = pair_modes(model);
        expected = {ds.freq_minus, 0.5 * (ds.freq_minus + ds.freq_plus), ds.freq_plus};
        names = {"minus", "two-photon", "plus"};
    }

    std::vector<SaturationPoint> out(rabis.size());
    parallel_for(rabis.size(), options.threads, [&](std::size_t k) {
        SaturationPoint& pt = out[k];
        pt.rabi = rabis[k];
        pt.saturation = saturation_from_rabi(rabis[k], model.gamma0);
        pt.trace = excitation_spectrum(model, rabis[k], laser_freqs, 1);

        const auto found = detect_peaks(pt.trace, options.rel_prominence);
        pt.detected = found.size();
        const double ymin = *std::min_element(pt.trace.signal.begin(), pt.trace.signal.end());
        std::vector<Peak> init;
        if (options.fit_expected && !expected.empty()) {
            const DressedStates ds = pair_modes(model);
            const double broadening = std::sqrt(1.0 + pt.saturation);
            const double widths[3] = {(ds.gamma_minus + 2.0 * model.dephasing) * broadening,
                                      model.gamma0 + 2.0 * model.dephasing,
                                      (ds.gamma_plus + 2.0 * model.dephasing) * broadening};
            for (std::size_t j = 0; j < 3; ++j)
                init.push_back({expected[j],
                                std::max(nearest_value(pt.trace.freqs, pt.trace.signal, expected[j]) - ymin, 0.0),
                                widths[j]});
        } else {
            const std::size_t n_keep = std::min<std::size_t>(found.size(), expected.empty() ? found.size() : 3);
            std::vector<std::size_t> chosen(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(n_keep));
            std::sort(chosen.begin(), chosen.end());
            for (std::size_t idx : chosen) {
                const double half = ymin + 0.5 * (pt.trace.signal[idx] - ymin);
                std::size_t lo = idx, hi = idx;
                while (lo > 0 && pt.trace.signal[lo] > half) --lo;
                while (hi + 1 < pt.trace.signal.size() && pt.trace.signal[hi] > half) ++hi;
                init.push_back({pt.trace.freqs[idx], pt.trace.signal[idx] - ymin,
                                std::max(pt.trace.freqs[hi] - pt.trace.freqs[lo], 1e-9)});
            }
        }
        const std::size_t n_fit = init.size();
        if (n_fit == 0) {
            pt.message = "no peaks detected";
            return;
        }
        try {
            PeakFitOptions fit_opts;
            if (options.fit_expected) fit_opts.center_window = model.gamma0;
            pt.peaks = peak_fit(pt.trace, n_fit, init, fit_opts);
            pt.fit_ok = true;
        } catch (const FitError& e) {
            pt.message = e.what();
            return;
        }
        for (const auto& p : pt.peaks.peaks) {
            if (expected.empty()) {
                pt.labels.push_back("peak");
                continue;
            }
            std::size_t best = 0;
            for (std::size_t j = 1; j < expected.size(); ++j)
                if (std::abs(p.center - expected[j]) < std::abs(p.center - expected[best])) best = j;
            pt.labels.push_back(names[best]);
        }
    });
    return out;
}

}  // namespace coop
