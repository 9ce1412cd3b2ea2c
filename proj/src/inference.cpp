#include "coop/inference.hpp"

#include "coop/errors.hpp"
#include "coop/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

namespace coop {

namespace {

const std::set<std::string>& parameter_names() {
    static const std::set<std::string> names{"J", "delta", "gamma0", "alpha", "dephasing", "saturation"};
    return names;
}

// Model description plus drive multiplier for one evaluation.
struct Evaluation {
    PairSpec spec;
    double drive_factor{1.0};
};

Evaluation bind(const FitProblem& problem, const Eigen::VectorXd& values) {
    Evaluation ev{problem.fixed, 1.0};
    for (std::size_t k = 0; k < problem.free.size(); ++k) {
        const auto& name = problem.free[k].name;
        const double v = values(static_cast<Eigen::Index>(k));
        if (name == "saturation")
            ev.drive_factor = v / problem.blocks.front().drive;
        else
            apply_parameter(ev.spec, name, v);
    }
    return ev;
}

bool is_spectrum(ObservableKind kind) {
    return kind == ObservableKind::Spectrum || kind == ObservableKind::SaturationJoint;
}

std::vector<double> forward_block(ObservableKind kind, const Evaluation& ev, const DataBlock& block) {
    const SystemModel model = make_pair_model(ev.spec);
    const double s = block.drive * ev.drive_factor;
    switch (kind) {
        case ObservableKind::Spectrum:
        case ObservableKind::SaturationJoint: {
            const double center = pair_center(ev.spec);
            std::vector<double> freqs;
            for (double x : block.x) freqs.push_back(center + x);
            return excitation_spectrum(model, rabi_from_saturation(s, ev.spec.gamma0), freqs).signal;
        }
        case ObservableKind::G2: {
            const auto sel = parse_selector(block.setting);
            const DriveParams drive =
                DriveParams::uniform(2, rabi_from_saturation(s, ev.spec.gamma0), resonant_laser(model, sel));
            return g2_curve(model, drive, block.x).g2;
        }
        case ObservableKind::Lifetime: {
            const auto sel = parse_selector(block.setting);
            return {lifetime_trace(model, sel, {}).tau_ns};
        }
        case ObservableKind::Extinction: {
            std::vector<double> out;
            const double rabi = rabi_from_saturation(s, ev.spec.gamma0);
            for (double d : block.x) {
                PairSpec p = ev.spec;
                p.detuning = d;
                out.push_back(extinction_point(p, rabi).ratio);
            }
            return out;
        }
    }
    return {};
}

FitResult run_single(const FitProblem& problem, const Eigen::VectorXd& x0, const LmOptions& lm) {
    const auto n = static_cast<Eigen::Index>(problem.free.size());
    Eigen::VectorXd lo(n), hi(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        lo(k) = problem.free[static_cast<std::size_t>(k)].lower;
        hi(k) = problem.free[static_cast<std::size_t>(k)].upper;
    }
    const auto m = static_cast<Eigen::Index>(problem.data_size());
    ResidualFn residuals = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        try {
            return weighted_residuals(problem, x);
        } catch (const Error&) {
            return Eigen::VectorXd::Constant(m, std::numeric_limits<double>::quiet_NaN());
        }
    };
    const LmResult res = levenberg_marquardt(residuals, x0, lo, hi, lm);

    FitResult out;
    for (const auto& p : problem.free) out.names.push_back(p.name);
    out.values = res.x;
    out.chi2 = res.chi2;
    out.dof = problem.data_size() > problem.free.size() ? problem.data_size() - problem.free.size() : 0;
    out.status = res.status;
    out.singular = res.singular;
    out.iterations = res.iterations;
    out.evaluations = res.evaluations;
    if (!res.singular) {
        out.covariance = 0.5 * (res.covariance + res.covariance.transpose());
        out.std_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    }
    return out;
}

FitProblem fix_parameter(const FitProblem& problem, const std::string& name, double value) {
    FitProblem sub = problem;
    sub.free.erase(std::remove_if(sub.free.begin(), sub.free.end(), [&](const auto& p) { return p.name == name; }),
                   sub.free.end());
    if (name == "saturation") {
        const double factor = value / problem.blocks.front().drive;
        for (auto& b : sub.blocks) b.drive *= factor;
    } else {
        apply_parameter(sub.fixed, name, value);
    }
    return sub;
}

}  // namespace

ObservableKind parse_observable(const std::string& name) {
    if (name == "spectrum") return ObservableKind::Spectrum;
    if (name == "g2") return ObservableKind::G2;
    if (name == "lifetime") return ObservableKind::Lifetime;
    if (name == "extinction") return ObservableKind::Extinction;
    if (name == "saturation-joint") return ObservableKind::SaturationJoint;
    throw ModelError("unknown observable kind '" + name + "'");
}

std::string to_string(ObservableKind kind) {
    switch (kind) {
        case ObservableKind::Spectrum: return "spectrum";
        case ObservableKind::G2: return "g2";
        case ObservableKind::Lifetime: return "lifetime";
        case ObservableKind::Extinction: return "extinction";
        case ObservableKind::SaturationJoint: return "saturation-joint";
    }
    return "spectrum";
}

void apply_parameter(PairSpec& spec, const std::string& name, double value) {
    if (name == "J")
        spec.coupling = value;
    else if (name == "delta")
        spec.detuning = value;
    else if (name == "gamma0")
        spec.gamma0 = value;
    else if (name == "alpha")
        spec.alpha = value;
    else if (name == "dephasing")
        spec.dephasing = value;
    else
        throw ModelError("parameter '" + name + "' is not a model parameter");
}

double read_parameter(const PairSpec& spec, const std::string& name) {
    if (name == "J") return spec.coupling;
    if (name == "delta") return spec.detuning;
    if (name == "gamma0") return spec.gamma0;
    if (name == "alpha") return spec.alpha;
    if (name == "dephasing") return spec.dephasing;
    throw ModelError("parameter '" + name + "' is not a model parameter");
}

FreeParameter default_parameter(const std::string& name, double initial) {
    if (name == "J") return {name, initial, -5000.0, 5000.0};
    if (name == "delta") return {name, initial, -20000.0, 20000.0};
    if (name == "gamma0") return {name, initial, 1.0, 200.0};
    if (name == "alpha") return {name, initial, 0.01, 0.99};
    if (name == "dephasing") return {name, initial, 0.0, 100.0};
    if (name == "saturation") return {name, initial, 1e-6, 1000.0};
    throw ModelError("unknown fit parameter '" + name + "'");
}

void FitProblem::validate() const {
    if (blocks.empty()) throw ModelError("fit problem has no data");
    std::set<std::string> seen;
    for (const auto& p : free) {
        if (!parameter_names().count(p.name)) throw ModelError("unknown fit parameter '" + p.name + "'");
        if (!seen.insert(p.name).second) throw ModelError("parameter '" + p.name + "' listed twice");
        if (!(p.lower <= p.initial && p.initial <= p.upper))
            throw ModelError("initial value of '" + p.name + "' lies outside its bounds");
        if (p.name == "saturation" && !(blocks.front().drive > 0.0))
            throw ModelError("a free saturation needs a positive drive on the first block");
    }
    for (const auto& b : blocks) {
        if (b.y.empty()) throw ModelError("data block is empty");
        if (b.sigma.size() != b.y.size()) throw ShapeError("sigma and y lengths differ");
        if (kind == ObservableKind::Lifetime) {
            if (b.y.size() != 1) throw ShapeError("a lifetime block holds exactly one value");
        } else if (b.x.size() != b.y.size()) {
            throw ShapeError("x and y lengths differ");
        }
        for (double s : b.sigma)
            if (!(s > 0.0)) throw ModelError("sigma must be positive");
        if (kind == ObservableKind::G2 || kind == ObservableKind::Lifetime) parse_selector(b.setting);
        if (b.drive < 0.0) throw ModelError("drive must be non-negative");
    }
}

std::size_t FitProblem::data_size() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.y.size();
    return n;
}

double FitResult::value(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
        if (names[k] == name) return values(static_cast<Eigen::Index>(k));
    throw ModelError("parameter '" + name + "' was not fitted");
}

std::vector<std::vector<double>> forward(const FitProblem& problem, const Eigen::VectorXd& values) {
    const Evaluation ev = bind(problem, values);
    std::vector<std::vector<double>> out;
    for (const auto& b : problem.blocks) out.push_back(forward_block(problem.kind, ev, b));
    return out;
}

Eigen::VectorXd weighted_residuals(const FitProblem& problem, const Eigen::VectorXd& values) {
    const auto model = forward(problem, values);
    double amplitude = 1.0;
    if (is_spectrum(problem.kind)) {
        double fy = 0.0, ff = 0.0;
        for (std::size_t b = 0; b < problem.blocks.size(); ++b)
            for (std::size_t k = 0; k < model[b].size(); ++k) {
                const double w = 1.0 / (problem.blocks[b].sigma[k] * problem.blocks[b].sigma[k]);
                fy += w * model[b][k] * problem.blocks[b].y[k];
                ff += w * model[b][k] * model[b][k];
            }
        if (ff > 0.0) amplitude = fy / ff;
    }
    Eigen::VectorXd r(static_cast<Eigen::Index>(problem.data_size()));
    Eigen::Index i = 0;
    for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
        const auto& blk = problem.blocks[b];
        for (std::size_t k = 0; k < blk.y.size(); ++k) r(i++) = (amplitude * model[b][k] - blk.y[k]) / blk.sigma[k];
    }
    return r;
}

FitResult fit(const FitProblem& problem, const FitOptions& options) {
    problem.validate();
    const auto n = static_cast<Eigen::Index>(problem.free.size());
    if (n == 0) {
        FitResult out;
        out.values = Eigen::VectorXd();
        out.chi2 = weighted_residuals(problem, out.values).squaredNorm();
        out.dof = problem.data_size();
        out.status = LmStatus::Converged;
        return out;
    }

    std::vector<Eigen::VectorXd> starts;
    Eigen::VectorXd x0(n);
    for (Eigen::Index k = 0; k < n; ++k) x0(k) = problem.free[static_cast<std::size_t>(k)].initial;
    starts.push_back(x0);
    std::mt19937_64 rng(options.seed);
    for (std::size_t s = 0; s < options.extra_starts; ++s) {
        Eigen::VectorXd x(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto& p = problem.free[static_cast<std::size_t>(k)];
            x(k) = std::uniform_real_distribution<double>(p.lower, p.upper)(rng);
        }
        starts.push_back(x);
    }

    std::vector<std::optional<FitResult>> results(starts.size());
    std::vector<std::string> errors(starts.size());
    parallel_for(starts.size(), options.threads, [&](std::size_t s) {
        try {
            results[s] = run_single(problem, starts[s], options.lm);
            results[s]->start_index = s;
        } catch (const FitError& e) {
            errors[s] = e.what();
        }
    });

    std::optional<FitResult> best;
    for (auto& r : results) {
        if (!r) continue;
        const bool better = !best || (r->converged() && !best->converged()) ||
                            (r->converged() == best->converged() && r->chi2 < best->chi2);
        if (better) best = r;
    }
    if (!best) throw FitError("no start point produced a finite residual: " + errors.front());
    return *best;
}

FitProblem synthesize_data(const FitProblem& problem, const Eigen::VectorXd& truth, double noise_level,
                           std::uint64_t seed) {
    if (noise_level < 0.0) throw ModelError("noise level must be non-negative");
    FitProblem out = problem;
    const auto model = forward(problem, truth);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t b = 0; b < out.blocks.size(); ++b) {
        auto& blk = out.blocks[b];
        double peak = 0.0;
        for (double v : model[b]) peak = std::max(peak, std::abs(v));
        const double level = peak > 0.0 ? peak : 1.0;
        const double sigma = noise_level > 0.0 ? noise_level * level : 1e-3 * level;
        blk.y = model[b];
        blk.sigma.assign(blk.y.size(), sigma);
        if (noise_level > 0.0)
            for (double& v : blk.y) v += noise_level * level * normal(rng);
    }
    return out;
}

ProfileResult profile_scan(const FitProblem& problem, const std::string& parameter, const std::vector<double>& grid,
                           const FitOptions& options) {
    problem.validate();
    const auto it = std::find_if(problem.free.begin(), problem.free.end(),
                                 [&](const auto& p) { return p.name == parameter; });
    if (it == problem.free.end()) throw ModelError("profiled parameter '" + parameter + "' is not free");
    if (grid.empty()) throw ModelError("profile grid is empty");
    for (double v : grid)
        if (v < it->lower || v > it->upper) throw ModelError("profile grid leaves the bounds of '" + parameter + "'");

    ProfileResult out;
    out.parameter = parameter;
    out.points.resize(grid.size());
    FitOptions inner = options;
    inner.threads = 1;
    parallel_for(grid.size(), options.threads, [&](std::size_t k) {
        auto& pt = out.points[k];
        pt.value = grid[k];
        try {
            const FitResult r = fit(fix_parameter(problem, parameter, grid[k]), inner);
            pt.chi2 = r.chi2;
            pt.converged = r.converged();
            if (!pt.converged) pt.error = "inner fit hit the iteration cap";
        } catch (const Error& e) {
            pt.chi2 = std::numeric_limits<double>::quiet_NaN();
            pt.error = e.what();
        }
    });

    bool any = false;
    double chi2_max = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < out.points.size(); ++k) {
        const double c = out.points[k].chi2;
        if (!std::isfinite(c)) continue;
        if (!any || c < out.chi2_min) {
            out.chi2_min = c;
            out.best_index = k;
        }
        chi2_max = std::max(chi2_max, c);
        any = true;
    }
    if (!any) throw FitError("every profile point failed");
    out.flat = chi2_max - out.chi2_min < 1.0;

    const double level = out.chi2_min + 1.0;
    auto crossing = [&](std::size_t inside, std::size_t outside) {
        const auto& a = out.points[inside];
        const auto& b = out.points[outside];
        return a.value + (level - a.chi2) * (b.value - a.value) / (b.chi2 - a.chi2);
    };
    std::size_t k = out.best_index;
    while (k > 0 && std::isfinite(out.points[k - 1].chi2) && out.points[k - 1].chi2 <= level) --k;
    if (k > 0 && std::isfinite(out.points[k - 1].chi2)) {
        out.interval_lo = crossing(k, k - 1);
    } else {
        out.interval_lo = out.points[k].value;
        out.interval_clipped = true;
    }
    k = out.best_index;
    while (k + 1 < out.points.size() && std::isfinite(out.points[k + 1].chi2) && out.points[k + 1].chi2 <= level) ++k;
    if (k + 1 < out.points.size() && std::isfinite(out.points[k + 1].chi2)) {
        out.interval_hi = crossing(k, k + 1);
    } else {
        out.interval_hi = out.points[k].value;
        out.interval_clipped = true;
    }
    return out;
}

std::vector<StageResult> sequential_fit(std::vector<FitProblem> stages, const FitOptions& options) {
    std::vector<StageResult> out;
    PairSpec carried;
    std::set<std::string> known;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        FitProblem& stage = stages[s];
        for (const auto& name : known) apply_parameter(stage.fixed, name, read_parameter(carried, name));
        for (auto& p : stage.free)
            if (known.count(p.name)) p.initial = std::clamp(read_parameter(carried, p.name), p.lower, p.upper);

        StageResult r{fit(stage, options), stage.fixed};
        for (std::size_t k = 0; k < r.result.names.size(); ++k) {
            const auto& name = r.result.names[k];
            if (name == "saturation") continue;
            apply_parameter(r.fixed_after, name, r.result.values(static_cast<Eigen::Index>(k)));
        }
        carried = r.fixed_after;
        for (const auto& name : r.result.names)
            if (name != "saturation") known.insert(name);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace coop
