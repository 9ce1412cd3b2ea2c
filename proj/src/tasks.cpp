#include "coop/tasks.hpp"

#include "coop/csv.hpp"
#include "coop/errors.hpp"
#include "coop/units.hpp"

#include <chrono>
#include <cmath>

namespace coop {

namespace {

using nlohmann::json;

std::string units_line(const std::string& columns) { return "units: " + columns; }

std::string reference_line(double ref) {
    return "frequencies are offsets from the mean emitter frequency " + format_number(ref) + " MHz";
}

// Run-level state shared by the task handlers.
struct Context {
    const RunConfig& cfg;
    std::filesystem::path dir;
    unsigned threads;
    TaskOutcome out;

    void emit(const std::string& name, const std::string& text) {
        write_text(dir / name, text);
        out.files.push_back(dir / name);
    }
};

CsvTable spectrum_table(const SpectrumTrace& trace, double ref, const std::string& title) {
    CsvTable t;
    t.comments = {title, units_line(trace.normalized ? "freq_mhz in MHz; signal normalised to its maximum"
                                                     : "freq_mhz in MHz; signal in detected photons/s"),
                  reference_line(ref)};
    t.header = {"freq_mhz", "signal"};
    for (std::size_t k = 0; k < trace.freqs.size(); ++k) t.rows.push_back({trace.freqs[k] - ref, trace.signal[k]});
    return t;
}

void run_spectrum(Context& ctx, const SpectrumTask& task) {
    const SystemModel& model = *ctx.cfg.model;
    const double ref = ctx.cfg.reference_frequency();
    std::vector<double> freqs;
    for (double x : task.scan.values()) freqs.push_back(ref + x);
    const double rabi = task.drive.rabi_mhz(model.gamma0);
    SpectrumTrace trace = excitation_spectrum(model, rabi, freqs, ctx.threads);
    if (task.normalize) trace = trace.normalized_copy();
    ctx.emit("spectrum.csv", to_csv(spectrum_table(trace, ref, "excitation spectrum, rabi_mhz = " + format_number(rabi))));
    const auto peak = std::max_element(trace.signal.begin(), trace.signal.end());
    ctx.out.summary = {{"rabi_mhz", rabi},
                       {"points", trace.freqs.size()},
                       {"max_signal", *peak},
                       {"max_at_mhz", trace.freqs[static_cast<std::size_t>(peak - trace.signal.begin())] - ref}};
}

void run_g2(Context& ctx, const G2Task& task) {
    const SystemModel& model = *ctx.cfg.model;
    const double ref = ctx.cfg.reference_frequency();
    const double laser = task.laser_detuning ? ref + *task.laser_detuning : resonant_laser(model, parse_selector(task.laser));
    const double rabi = task.drive.rabi_mhz(model.gamma0);
    const auto taus = symmetric_axis(task.tau_max_ns, task.points);
    const CorrelationTrace trace = g2_curve(model, DriveParams::uniform(model.size(), rabi, laser), taus);

    CsvTable t;
    t.comments = {"intensity correlation, rabi_mhz = " + format_number(rabi) +
                      ", laser offset " + format_number(laser - ref) + " MHz",
                  units_line("tau_ns in ns; g2 dimensionless"), reference_line(ref)};
    t.header = {"tau_ns", "g2"};
    for (std::size_t k = 0; k < taus.size(); ++k) t.rows.push_back({trace.taus[k], trace.g2[k]});
    ctx.emit("g2.csv", to_csv(t));

    ctx.out.summary = {{"rabi_mhz", rabi},
                       {"laser_offset_mhz", laser - ref},
                       {"rate_photons_per_s", trace.rate},
                       {"g2_zero", trace.g2[task.points]}};
    try {
        const OscillationFit osc = fit_damped_oscillation(trace);
        ctx.out.summary["oscillation"] = {{"rabi_mhz", osc.rabi_mhz},
                                          {"damping_per_ns", osc.damping_per_ns},
                                          {"residual_rms", osc.residual_rms}};
    } catch (const FitError& e) {
        ctx.out.warnings.push_back(std::string("oscillation fit skipped: ") + e.what());
    }
}

void run_lifetime(Context& ctx, const LifetimeTask& task) {
    const SystemModel& model = *ctx.cfg.model;
    const auto sel = parse_selector(task.initial);
    // First pass only fixes the estimate used for the default time axis.
    const double tau_est = lifetime_trace(model, sel, std::vector<double>{0.0}).tau_estimate_ns;
    const double t_max = task.t_max_ns > 0.0 ? task.t_max_ns : 5.0 * tau_est;
    std::vector<double> times(task.points);
    for (std::size_t k = 0; k < task.points; ++k)
        times[k] = t_max * static_cast<double>(k) / static_cast<double>(task.points - 1);
    const LifetimeResult res = lifetime_trace(model, sel, times);

    CsvTable t;
    t.comments = {"free decay from the " + task.initial + " single-excitation state",
                  units_line("t_ns in ns; rate = 2 pi Gamma0 <sum n_i> in photons/s")};
    t.header = {"t_ns", "rate"};
    for (std::size_t k = 0; k < times.size(); ++k) t.rows.push_back({res.times[k], res.rate[k]});
    ctx.emit("lifetime.csv", to_csv(t));

    ctx.out.summary = {{"initial", task.initial},
                       {"tau_ns", res.tau_ns},
                       {"tau_estimate_ns", res.tau_estimate_ns},
                       {"fit_window_ns", {res.window_lo_ns, res.window_hi_ns}},
                       {"relative_residual_rms", res.residual_rms},
                       {"multi_exponential", res.multi_exponential}};
    if (res.multi_exponential) {
        ctx.out.summary["tau_fast_ns"] = res.tau_fast_ns;
        ctx.out.summary["tau_slow_ns"] = res.tau_slow_ns;
        ctx.out.warnings.push_back(res.warning);
    }
}

void run_extinction(Context& ctx, const ExtinctionTask& task) {
    const PairSpec& pair = *ctx.cfg.pair;
    const double rabi = task.drive.rabi_mhz(pair.gamma0);
    ExtinctionOptions opts;
    opts.threads = ctx.threads;
    const auto detunings = task.detunings.values();
    const auto curve = extinction_ratio_curve(pair, detunings, rabi, opts);

    CsvTable t;
    t.comments = {"subradiant / superradiant fitted peak-height ratio, J_mhz = " + format_number(pair.coupling) +
                      ", rabi_mhz = " + format_number(rabi),
                  units_line("delta_mhz = |detuning| in MHz; ratio dimensionless")};
    t.header = {"delta_mhz", "ratio"};
    json flagged = json::array();
    for (const auto& p : curve) {
        t.rows.push_back({p.detuning, p.ratio});
        if (p.flagged) flagged.push_back(p.detuning);
    }
    ctx.emit("extinction.csv", to_csv(t));
    ctx.out.summary = {{"rabi_mhz", rabi}, {"points", curve.size()}, {"unresolved_detunings_mhz", flagged}};
    if (!flagged.empty())
        ctx.out.warnings.push_back(std::to_string(flagged.size()) +
                                   " detunings have unresolved peaks; centers were held at the dressed frequencies");
}

double label_code(const std::string& label, std::size_t index) {
    if (label == "minus") return -1.0;
    if (label == "two-photon") return 0.0;
    if (label == "plus") return 1.0;
    return static_cast<double>(index);
}

void run_saturate(Context& ctx, const SaturateTask& task) {
    const SystemModel& model = *ctx.cfg.model;
    const double ref = ctx.cfg.reference_frequency();
    std::vector<double> freqs, rabis;
    for (double x : task.scan.values()) freqs.push_back(ref + x);
    for (double s : task.saturations) rabis.push_back(rabi_from_saturation(s, model.gamma0));
    SaturationOptions opts;
    opts.threads = ctx.threads;
    opts.fit_expected = task.fit_expected;
    opts.rel_prominence = task.rel_prominence;
    const auto series = saturation_series(model, rabis, freqs, opts);

    CsvTable summary;
    summary.comments = {"Lorentzian fits per drive power; peak = -1 lower dressed (minus), 0 two-photon, +1 upper "
                        "dressed (plus), or the peak index for other systems",
                        units_line("power = saturation parameter s; center_mhz, fwhm_mhz in MHz; height in photons/s"),
                        reference_line(ref)};
    summary.header = {"power", "peak", "center_mhz", "height", "fwhm_mhz"};
    json points = json::array();
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& pt = series[k];
        const std::string name = "spectrum_" + std::to_string(k) + ".csv";
        ctx.emit(name, to_csv(spectrum_table(pt.trace, ref, "saturation spectrum, s = " + format_number(task.saturations[k]))));
        if (!pt.fit_ok) ctx.out.warnings.push_back("s = " + format_number(task.saturations[k]) + ": " + pt.message);
        for (std::size_t j = 0; j < pt.peaks.peaks.size(); ++j) {
            const auto& p = pt.peaks.peaks[j];
            summary.rows.push_back({task.saturations[k], label_code(pt.labels[j], j), p.center - ref, p.height, p.fwhm});
        }
        points.push_back({{"saturation", task.saturations[k]},
                          {"file", name},
                          {"detected_peaks", pt.detected},
                          {"fit_ok", pt.fit_ok},
                          {"labels", pt.labels}});
    }
    ctx.emit("saturation_peaks.csv", to_csv(summary));
    ctx.out.summary = {{"powers", points}};
}

void run_fit(Context& ctx, const FitTask& task) {
    FitProblem problem = task.problem;
    const std::uint64_t seed = ctx.cfg.seed;

    if (task.synthesize) {
        FitProblem generator = problem;
        Eigen::VectorXd truth(static_cast<Eigen::Index>(problem.free.size()));
        for (std::size_t k = 0; k < problem.free.size(); ++k) {
            const auto& name = problem.free[k].name;
            truth(static_cast<Eigen::Index>(k)) =
                name == "saturation" ? problem.blocks.front().drive : read_parameter(problem.fixed, name);
        }
        for (const auto& [name, value] : task.synthesize->truth) {
            bool is_free = false;
            for (std::size_t k = 0; k < problem.free.size(); ++k)
                if (problem.free[k].name == name) {
                    truth(static_cast<Eigen::Index>(k)) = value;
                    is_free = true;
                }
            if (!is_free) apply_parameter(generator.fixed, name, value);
        }
        const FitProblem data =
            synthesize_data(generator, truth, task.synthesize->noise, task.synthesize->seed.value_or(seed));
        problem.blocks = data.blocks;
    }

    FitOptions opts;
    opts.extra_starts = task.extra_starts;
    opts.seed = seed;
    opts.threads = ctx.threads;
    const FitResult res = fit(problem, opts);
    ctx.out.fit_converged = res.converged();

    json params = json::array();
    for (std::size_t k = 0; k < res.names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        json p = {{"name", res.names[k]},
                  {"value", res.values(i)},
                  {"initial", problem.free[k].initial},
                  {"lower", problem.free[k].lower},
                  {"upper", problem.free[k].upper}};
        p["std_error"] = res.singular ? json(nullptr) : json(res.std_errors(i));
        params.push_back(p);
    }
    json cov = nullptr;
    if (!res.singular && res.covariance.size() > 0) {
        cov = json::array();
        for (Eigen::Index r = 0; r < res.covariance.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < res.covariance.cols(); ++c) row.push_back(res.covariance(r, c));
            cov.push_back(row);
        }
    }
    json result = {{"observable", to_string(problem.kind)},
                   {"status", std::string(to_string(res.status))},
                   {"converged", res.converged()},
                   {"chi2", res.chi2},
                   {"dof", res.dof},
                   {"iterations", res.iterations},
                   {"evaluations", res.evaluations},
                   {"singular_jacobian", res.singular},
                   {"start_index", res.start_index},
                   {"parameters", params},
                   {"covariance", cov}};

    // Data against the best-fit model (model = y + sigma * weighted residual).
    const Eigen::VectorXd r = weighted_residuals(problem, res.values);
    CsvTable curves;
    curves.comments = {"fit data and best-fit model for observable " + to_string(problem.kind),
                       units_line("x and y in the units of the observable (MHz, ns, photons/s or dimensionless)")};
    curves.header = {"block", "x", "y", "sigma", "model"};
    Eigen::Index i = 0;
    for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
        const auto& blk = problem.blocks[b];
        for (std::size_t k = 0; k < blk.y.size(); ++k, ++i) {
            const double x = blk.x.empty() ? 0.0 : blk.x[k];
            curves.rows.push_back({static_cast<double>(b), x, blk.y[k], blk.sigma[k], blk.y[k] + blk.sigma[k] * r(i)});
        }
    }
    ctx.emit("fit_curves.csv", to_csv(curves));

    if (task.profile) {
        const ProfileResult prof = profile_scan(problem, task.profile->parameter, task.profile->grid.values(), opts);
        CsvTable t;
        t.comments = {"profile of chi2 over " + prof.parameter, units_line("value in the parameter's units")};
        t.header = {"value", "chi2"};
        for (const auto& pt : prof.points) t.rows.push_back({pt.value, pt.chi2});
        ctx.emit("profile.csv", to_csv(t));
        result["profile"] = {{"parameter", prof.parameter},
                             {"chi2_min", prof.chi2_min},
                             {"best_value", prof.points[prof.best_index].value},
                             {"interval", {prof.interval_lo, prof.interval_hi}},
                             {"interval_clipped", prof.interval_clipped},
                             {"flat", prof.flat}};
        if (prof.flat) ctx.out.warnings.push_back("profile of " + prof.parameter + " is flat: parameter not identified");
    }
    ctx.emit("fit_result.json", result.dump(2) + "\n");
    ctx.out.summary = result;
    if (!res.converged()) ctx.out.warnings.push_back("fit stopped at the iteration cap");
    if (res.singular) ctx.out.warnings.push_back("Jacobian is singular at the optimum; covariance not reported");
}

void run_baseline(Context& ctx, const ResonanceTask& task) {
    ResonanceMcConfig mc = task;
    mc.seed = ctx.cfg.seed;
    mc.threads = ctx.threads;
    const ProbabilityEstimate est = baseline_resonance_probability(mc);

    CsvTable t;
    t.comments = {"probability that at least one pair is resonant (|Delta| < " + format_number(mc.threshold_factor) +
                      " |J|)",
                  "n_molecules = " + std::to_string(mc.n_molecules) + ", inhom_width_ghz = " +
                      format_number(mc.inhom_width_ghz) + ", crystal_size_nm = " + format_number(mc.crystal_size_nm) +
                      ", dipole_moment_debye = " + format_number(mc.dipole_moment_debye) +
                      ", epsilon_r = " + format_number(mc.epsilon_r) + ", seed = " + std::to_string(mc.seed),
                  units_line("n_samples count; p_hat and stderr dimensionless")};
    t.header = {"n_samples", "p_hat", "stderr"};
    t.rows.push_back({static_cast<double>(est.n_samples), est.p_hat, est.stderr_});
    ctx.emit("baseline_prob.csv", to_csv(t));
    ctx.out.summary = {{"hits", est.hits}, {"n_samples", est.n_samples}, {"p_hat", est.p_hat}, {"stderr", est.stderr_}};
}

}  // namespace

TaskOutcome run_task(const RunConfig& config, const std::filesystem::path& out_dir, unsigned threads) {
    Context ctx{config, out_dir, std::max(1u, threads), {}};
    const auto start = std::chrono::steady_clock::now();
    std::visit(
        [&](const auto& task) {
            using T = std::decay_t<decltype(task)>;
            if constexpr (std::is_same_v<T, SpectrumTask>) run_spectrum(ctx, task);
            else if constexpr (std::is_same_v<T, G2Task>) run_g2(ctx, task);
            else if constexpr (std::is_same_v<T, LifetimeTask>) run_lifetime(ctx, task);
            else if constexpr (std::is_same_v<T, ExtinctionTask>) run_extinction(ctx, task);
            else if constexpr (std::is_same_v<T, SaturateTask>) run_saturate(ctx, task);
            else if constexpr (std::is_same_v<T, FitTask>) run_fit(ctx, task);
            else run_baseline(ctx, task);
        },
        config.task);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    json outputs = json::array();
    for (const auto& f : ctx.out.files) outputs.push_back(f.filename().string());
    const json manifest = {{"tool", "coopspec"},
                           {"version", kVersion},
                           {"task", to_string(config.kind)},
                           {"seed", config.seed},
                           {"threads", ctx.threads},
                           {"config", config.echo},
                           {"outputs", outputs},
                           {"summary", ctx.out.summary},
                           {"warnings", ctx.out.warnings},
                           {"timings_s", {{"run", elapsed}}}};
    ctx.emit("manifest.json", manifest.dump(2) + "\n");
    return ctx.out;
}

std::vector<std::pair<std::string, json>> preset_configs(const std::string& name) {
    auto pair_model = [](double gamma0, double alpha, double dephasing, double detuning, double coupling) {
        return json{{"gamma0_mhz", gamma0},
                    {"alpha", alpha},
                    {"dephasing_mhz", dephasing},
                    {"pair", {{"detuning_mhz", detuning}, {"J_mhz", coupling}}}};
    };
    const json h_pair = pair_model(33.0, 0.11, 1.0, 2600.0, 1020.0);
    const json j_pair = pair_model(37.0, 0.135, 1.0, 0.0, -116.0);
    const json powers = {0.1, 0.3, 1.0, 3.0, 10.0, 27.0, 100.0};

    if (name == "fig2b")
        return {{"extinction",
                 {{"model", j_pair},
                  {"task",
                   {{"type", "extinction"},
                    {"saturation", 0.01},
                    {"detunings", {{"start_mhz", 0.0}, {"stop_mhz", 2320.0}, {"points", 59}}}}}}}};
    if (name == "fig2c") {
        std::vector<std::pair<std::string, json>> out;
        for (const char* laser : {"plus", "minus"})
            out.emplace_back(std::string("g2_") + laser,
                             json{{"model", h_pair},
                                  {"task",
                                   {{"type", "g2"},
                                    {"saturation", 27.0},
                                    {"laser", laser},
                                    {"tau_max_ns", 15.0},
                                    {"points", 300}}}});
        return out;
    }
    if (name == "fig2d") {
        std::vector<std::pair<std::string, json>> out;
        for (const char* state : {"plus", "minus"})
            out.emplace_back(std::string("lifetime_") + state,
                             json{{"model", h_pair}, {"task", {{"type", "lifetime"}, {"initial", state}}}});
        return out;
    }
    if (name == "fig3h")
        return {{"saturate",
                 {{"model", h_pair},
                  {"task",
                   {{"type", "saturate"},
                    {"saturations", powers},
                    {"scan", {{"start_mhz", -2400.0}, {"stop_mhz", 2400.0}, {"points", 961}}}}}}}};
    if (name == "fig3j")
        return {{"saturate",
                 {{"model", j_pair},
                  {"task",
                   {{"type", "saturate"},
                    {"saturations", powers},
                    {"scan", {{"start_mhz", -500.0}, {"stop_mhz", 500.0}, {"points", 401}}}}}}}};
    throw ConfigError("reproduce", "unknown preset '" + name + "'");
}

}  // namespace coop
