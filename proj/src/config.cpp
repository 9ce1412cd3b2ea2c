#include "coop/config.hpp"

#include "coop/csv.hpp"
#include "coop/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace coop {

namespace {

using nlohmann::json;

std::string fmt(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

// Schema walker over one JSON object. Defaults are written back into the
// document so the echo records every value the run used.
class Node {
public:
    Node(json& value, std::string path) : value_(value), path_(std::move(path)) {
        if (!value_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    const std::string& path() const { return path_; }
    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return value_.contains(key); }

    json& raw(const std::string& key) {
        seen_.insert(key);
        if (!value_.contains(key)) throw ConfigError(child(key), "required field is missing");
        return value_[key];
    }

    Node object(const std::string& key) { return Node(raw(key), child(key)); }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt,
                  double lo = -std::numeric_limits<double>::infinity(),
                  double hi = std::numeric_limits<double>::infinity(), bool open_lo = false) {
        seen_.insert(key);
        if (!value_.contains(key)) {
            if (!fallback) throw ConfigError(child(key), "required field is missing");
            value_[key] = *fallback;
            return *fallback;
        }
        const json& v = value_[key];
        if (!v.is_number()) throw ConfigError(child(key), "expected a number");
        const double x = v.get<double>();
        check_range(key, x, lo, hi, open_lo);
        return x;
    }

    std::uint64_t unsigned_integer(const std::string& key, std::optional<std::uint64_t> fallback, std::uint64_t lo,
                                   std::uint64_t hi = std::numeric_limits<std::uint64_t>::max()) {
        seen_.insert(key);
        if (!value_.contains(key)) {
            if (!fallback) throw ConfigError(child(key), "required field is missing");
            value_[key] = *fallback;
            return *fallback;
        }
        const json& v = value_[key];
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            throw ConfigError(child(key), "expected a non-negative integer");
        const auto x = v.get<std::uint64_t>();
        if (x < lo || x > hi)
            throw ConfigError(child(key), "value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                                              std::to_string(hi) + "]");
        return x;
    }

    bool boolean(const std::string& key, bool fallback) {
        seen_.insert(key);
        if (!value_.contains(key)) {
            value_[key] = fallback;
            return fallback;
        }
        if (!value_[key].is_boolean()) throw ConfigError(child(key), "expected true or false");
        return value_[key].get<bool>();
    }

    std::string string(const std::string& key, std::optional<std::string> fallback,
                       const std::vector<std::string>& allowed = {}) {
        seen_.insert(key);
        if (!value_.contains(key)) {
            if (!fallback) throw ConfigError(child(key), "required field is missing");
            value_[key] = *fallback;
            return *fallback;
        }
        if (!value_[key].is_string()) throw ConfigError(child(key), "expected a string");
        auto s = value_[key].get<std::string>();
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            throw ConfigError(child(key), "'" + s + "' is not one of: " + list);
        }
        return s;
    }

    std::vector<double> numbers(const std::string& key, std::optional<std::size_t> length = std::nullopt) {
        json& v = raw(key);
        if (!v.is_array()) throw ConfigError(child(key), "expected an array of numbers");
        if (length && v.size() != *length)
            throw ConfigError(child(key), "expected " + std::to_string(*length) + " entries");
        std::vector<double> out;
        for (std::size_t k = 0; k < v.size(); ++k) {
            if (!v[k].is_number()) throw ConfigError(child(key) + "[" + std::to_string(k) + "]", "expected a number");
            out.push_back(v[k].get<double>());
        }
        return out;
    }

    json& array(const std::string& key) {
        json& v = raw(key);
        if (!v.is_array()) throw ConfigError(child(key), "expected an array");
        return v;
    }

    void check_range(const std::string& key, double x, double lo, double hi, bool open_lo = false) const {
        if (!std::isfinite(x)) throw ConfigError(child(key), "value must be finite");
        const bool below = open_lo ? !(x > lo) : x < lo;
        if (below || x > hi)
            throw ConfigError(child(key), "value " + fmt(x) + " outside " + (open_lo ? "(" : "[") + fmt(lo) + ", " +
                                              fmt(hi) + "]");
    }

    // Rejects any key that no accessor asked for.
    void finish() const {
        for (auto it = value_.begin(); it != value_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(child(it.key()), "unknown field");
    }

private:
    json& value_;
    std::string path_;
    std::set<std::string> seen_;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec3 vec3(Node& n, const std::string& key, const Vec3& fallback) {
    if (!n.has(key)) return fallback;
    const auto v = n.numbers(key, 3);
    return Vec3(v[0], v[1], v[2]);
}

ScanSpec parse_scan(Node n) {
    ScanSpec s;
    s.start = n.number("start_mhz");
    s.stop = n.number("stop_mhz");
    s.points = n.unsigned_integer("points", std::nullopt, 2, 1'000'000);
    if (!(s.stop > s.start)) throw ConfigError(n.child("stop_mhz"), "must exceed start_mhz");
    n.finish();
    return s;
}

ScanSpec parse_grid(Node n) {
    ScanSpec s;
    s.start = n.number("start");
    s.stop = n.number("stop");
    s.points = n.unsigned_integer("points", std::nullopt, 2, 100'000);
    if (!(s.stop > s.start)) throw ConfigError(n.child("stop"), "must exceed start");
    n.finish();
    return s;
}

DriveSpec parse_drive(Node& n) {
    DriveSpec d;
    const bool s = n.has("saturation");
    const bool r = n.has("rabi_mhz");
    if (s == r) throw ConfigError(n.path(), "give exactly one of saturation or rabi_mhz");
    if (s) d.saturation = n.number("saturation", std::nullopt, 0.0, 1e6);
    if (r) d.rabi = n.number("rabi_mhz", std::nullopt, 0.0, 1e6);
    return d;
}

struct ParsedModel {
    SystemModel model;
    std::optional<PairSpec> pair;
};

ParsedModel parse_model(Node n) {
    ParsedModel out;
    const double gamma0 = n.number("gamma0_mhz", std::nullopt, 0.0, 1e5, true);
    const double alpha = n.number("alpha", 0.3, 0.0, 1.0);
    const double dephasing = n.number("dephasing_mhz", 0.0, 0.0, 1e5);

    const bool pair_form = n.has("pair");
    const bool emitter_form = n.has("emitters");
    if (pair_form == emitter_form) throw ConfigError(n.path(), "give exactly one of pair or emitters");

    try {
        if (pair_form) {
            Node p = n.object("pair");
            PairSpec spec;
            spec.gamma0 = gamma0;
            spec.alpha = alpha;
            spec.dephasing = dephasing;
            spec.center = p.number("center_mhz", 0.0, 0.0, kInf);
            spec.detuning = p.number("detuning_mhz", std::nullopt, -1e6, 1e6);
            spec.coupling = p.number("J_mhz", std::nullopt, -1e6, 1e6);
            spec.dipole_overlap = p.number("dipole_overlap", 1.0, -1.0, 1.0);
            p.finish();
            out.model = make_pair_model(spec);
            out.pair = spec;
            n.finish();
            return out;
        }

        json& arr = n.array("emitters");
        if (arr.empty()) throw ConfigError(n.child("emitters"), "needs at least one emitter");
        std::vector<EmitterParams> emitters;
        for (std::size_t k = 0; k < arr.size(); ++k) {
            Node e(arr[k], n.child("emitters") + "[" + std::to_string(k) + "]");
            EmitterParams em;
            em.omega = e.number("omega_mhz", std::nullopt, 0.0, kInf, true);
            em.position = vec3(e, "position_nm", Vec3::Zero());
            em.dipole = vec3(e, "dipole", Vec3::UnitZ());
            if (std::abs(em.dipole.norm() - 1.0) > 1e-9) {
                if (em.dipole.norm() == 0.0) throw ConfigError(e.child("dipole"), "must be non-zero");
                em.dipole.normalize();
            }
            em.dipole_moment = e.number("dipole_moment_debye", 1.0, 0.0, 1e3, true);
            e.finish();
            emitters.push_back(em);
        }

        const std::string decay = n.string("collective_decay", "point-dipole", {"point-dipole", "green-function"});
        const auto form = decay == "green-function" ? CollectiveDecayForm::GreenFunction : CollectiveDecayForm::PointDipole;

        MediumParams medium;
        std::optional<Eigen::MatrixXd> explicit_j;
        if (emitters.size() > 1 || n.has("coupling")) {
            Node c = n.object("coupling");
            const std::string mode = c.string("mode", std::nullopt, {"explicit", "geometric"});
            medium.epsilon_r = c.number("epsilon_r", 1.0, 0.0, 1e3, true);
            medium.wavelength = c.number("wavelength_nm", 785.0, 0.0, kInf, true);
            if (mode == "explicit") {
                json& rows = c.array("J_mhz");
                const auto n_e = static_cast<Eigen::Index>(emitters.size());
                if (rows.size() != emitters.size())
                    throw ConfigError(c.child("J_mhz"), "must be an N x N matrix for N emitters");
                Eigen::MatrixXd j(n_e, n_e);
                for (Eigen::Index r = 0; r < n_e; ++r) {
                    const std::string rp = c.child("J_mhz") + "[" + std::to_string(r) + "]";
                    const json& row = rows[static_cast<std::size_t>(r)];
                    if (!row.is_array() || row.size() != emitters.size())
                        throw ConfigError(rp, "must hold " + std::to_string(n_e) + " numbers");
                    for (Eigen::Index q = 0; q < n_e; ++q) {
                        if (!row[static_cast<std::size_t>(q)].is_number())
                            throw ConfigError(rp + "[" + std::to_string(q) + "]", "expected a number");
                        j(r, q) = row[static_cast<std::size_t>(q)].get<double>();
                    }
                }
                if (!j.isApprox(j.transpose(), 1e-12)) throw ConfigError(c.child("J_mhz"), "must be symmetric");
                if (j.diagonal().cwiseAbs().maxCoeff() != 0.0)
                    throw ConfigError(c.child("J_mhz"), "diagonal must be zero");
                explicit_j = j;
            }
            c.finish();
        }

        if (explicit_j) {
            SystemModel m;
            m.emitters = emitters;
            m.gamma0 = gamma0;
            m.alpha = alpha;
            m.dephasing = dephasing;
            m.J = *explicit_j;
            const auto n_e = static_cast<Eigen::Index>(emitters.size());
            m.gamma_coll.resize(n_e, n_e);
            for (Eigen::Index a = 0; a < n_e; ++a)
                for (Eigen::Index b = 0; b < n_e; ++b) {
                    const auto& ea = emitters[static_cast<std::size_t>(a)];
                    const auto& eb = emitters[static_cast<std::size_t>(b)];
                    m.gamma_coll(a, b) = (form == CollectiveDecayForm::GreenFunction && a != b)
                                             ? collective_decay_green(ea, eb, gamma0, alpha, medium)
                                             : collective_decay(ea, eb, m);
                }
            m.validate();
            out.model = m;
        } else {
            out.model = make_geometric_model(emitters, medium, gamma0, alpha, dephasing, form);
        }
        n.finish();
        return out;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(n.path(), e.what());
    }
}

DataBlock parse_block(Node b, ObservableKind kind, const std::filesystem::path& base_dir, bool synthetic) {
    DataBlock blk;
    const bool needs_setting = kind == ObservableKind::G2 || kind == ObservableKind::Lifetime;
    blk.setting = b.string("setting", needs_setting ? std::optional<std::string>() : std::string(),
                           needs_setting ? std::vector<std::string>{"plus", "minus", "single"}
                                         : std::vector<std::string>{""});
    blk.drive = kind == ObservableKind::Lifetime ? b.number("saturation", 0.0, 0.0, 1e6)
                                                 : b.number("saturation", std::nullopt, 0.0, 1e6);

    if (b.has("file")) {
        const std::filesystem::path file = base_dir / b.string("file", std::nullopt);
        CsvTable table;
        try {
            table = parse_csv(read_text(file));
        } catch (const Error& e) {
            throw ConfigError(b.child("file"), e.what());
        }
        if (table.header.size() < 2) throw ConfigError(b.child("file"), "needs x and y columns");
        std::optional<std::size_t> sigma_col;
        for (std::size_t k = 2; k < table.header.size(); ++k)
            if (table.header[k] == "sigma") sigma_col = k;
        for (const auto& row : table.rows) {
            blk.x.push_back(row[0]);
            blk.y.push_back(row[1]);
            if (sigma_col) blk.sigma.push_back(row[*sigma_col]);
        }
    } else {
        if (kind != ObservableKind::Lifetime) blk.x = b.numbers("x");
        if (!synthetic || b.has("y")) blk.y = b.numbers("y");
    }
    if (b.has("sigma")) {
        json& s = b.raw("sigma");
        if (s.is_number()) {
            b.check_range("sigma", s.get<double>(), 0.0, kInf, true);
            blk.sigma.assign(std::max(blk.y.size(), blk.x.size()), s.get<double>());
        } else {
            blk.sigma = b.numbers("sigma");
        }
    }
    if (synthetic) {
        const std::size_t n = kind == ObservableKind::Lifetime ? 1 : blk.x.size();
        if (blk.y.size() != n) blk.y.assign(n, 0.0);
        if (blk.sigma.size() != n) blk.sigma.assign(n, 1.0);
    }
    if (blk.sigma.empty()) throw ConfigError(b.child("sigma"), "required when the data has no sigma column");
    b.finish();
    return blk;
}

FitTask parse_fit(Node t, const ParsedModel& model, const std::filesystem::path& base_dir) {
    if (!model.pair) throw ConfigError("model", "fit tasks require the pair form of the model");
    FitTask task;
    auto& problem = task.problem;
    problem.kind = parse_observable(t.string("observable", std::nullopt,
                                             {"spectrum", "g2", "lifetime", "extinction", "saturation-joint"}));
    problem.fixed = *model.pair;

    if (t.has("synthesize")) {
        Node s = t.object("synthesize");
        SynthesisSpec spec;
        Node truth = s.object("truth");
        for (const auto& name : {"J", "delta", "gamma0", "alpha", "dephasing", "saturation"})
            if (truth.has(name)) spec.truth.emplace_back(name, truth.number(name));
        truth.finish();
        spec.noise = s.number("noise", 0.0, 0.0, 10.0);
        if (s.has("seed")) spec.seed = s.unsigned_integer("seed", std::nullopt, 0);
        s.finish();
        task.synthesize = spec;
    }

    json& blocks = t.array("data");
    if (blocks.empty()) throw ConfigError(t.child("data"), "needs at least one data block");
    for (std::size_t k = 0; k < blocks.size(); ++k)
        problem.blocks.push_back(parse_block(Node(blocks[k], t.child("data") + "[" + std::to_string(k) + "]"),
                                             problem.kind, base_dir, task.synthesize.has_value()));

    json& free = t.array("free");
    for (std::size_t k = 0; k < free.size(); ++k) {
        Node f(free[k], t.child("free") + "[" + std::to_string(k) + "]");
        const std::string name =
            f.string("name", std::nullopt, {"J", "delta", "gamma0", "alpha", "dephasing", "saturation"});
        const double fallback_initial =
            name == "saturation" ? problem.blocks.front().drive : read_parameter(problem.fixed, name);
        const double initial = f.number("initial", fallback_initial);
        FreeParameter p = default_parameter(name, initial);
        p.lower = f.number("lower", p.lower);
        p.upper = f.number("upper", p.upper);
        if (!(p.lower <= p.initial && p.initial <= p.upper))
            throw ConfigError(f.child("initial"), "value " + fmt(p.initial) + " outside [" + fmt(p.lower) + ", " +
                                                      fmt(p.upper) + "]");
        f.finish();
        problem.free.push_back(p);
    }
    if (task.synthesize) {
        for (const auto& [name, value] : task.synthesize->truth) {
            (void)value;
            if (name == "saturation" &&
                std::none_of(problem.free.begin(), problem.free.end(), [](const auto& p) { return p.name == "saturation"; }))
                throw ConfigError(t.child("synthesize.truth.saturation"),
                                  "only meaningful when saturation is a free parameter");
        }
    }

    task.extra_starts = t.unsigned_integer("extra_starts", 0, 0, 1000);
    if (t.has("profile")) {
        Node p = t.object("profile");
        ProfileSpec spec;
        spec.parameter = p.string("parameter", std::nullopt);
        const auto it = std::find_if(problem.free.begin(), problem.free.end(),
                                     [&](const auto& f) { return f.name == spec.parameter; });
        if (it == problem.free.end()) throw ConfigError(p.child("parameter"), "must name a free parameter");
        spec.grid = parse_grid(p.object("grid"));
        if (spec.grid.start < it->lower || spec.grid.stop > it->upper)
            throw ConfigError(p.child("grid"), "must lie within the bounds of " + spec.parameter);
        p.finish();
        task.profile = spec;
    }
    try {
        problem.validate();
    } catch (const Error& e) {
        throw ConfigError(t.path(), e.what());
    }
    t.finish();
    return task;
}

ResonanceTask parse_resonance(Node t) {
    ResonanceTask c;
    c.n_molecules = static_cast<int>(t.unsigned_integer("n_molecules", 2, 2, 1000));
    c.inhom_width_ghz = t.number("inhom_width_ghz", 100.0, 0.0, 1e6, true);
    c.crystal_size_nm = t.number("crystal_size_nm", 500.0, 0.0, 1e7, true);
    c.threshold_factor = t.number("threshold_factor", 2.0, 0.0, 1e6, true);
    c.n_samples = t.unsigned_integer("n_samples", 1'000'000, 10'000);
    c.dipole_moment_debye = t.number("dipole_moment_debye", 13.0, 0.0, 1e3, true);
    c.epsilon_r = t.number("epsilon_r", 2.4, 0.0, 1e3, true);
    c.batch_size = t.unsigned_integer("batch_size", 1u << 16, 1);
    t.finish();
    return c;
}

}  // namespace

TaskKind parse_task_kind(const std::string& name) {
    if (name == "spectrum") return TaskKind::Spectrum;
    if (name == "g2") return TaskKind::G2;
    if (name == "lifetime") return TaskKind::Lifetime;
    if (name == "extinction") return TaskKind::Extinction;
    if (name == "saturate") return TaskKind::Saturate;
    if (name == "fit") return TaskKind::Fit;
    if (name == "baseline-prob") return TaskKind::BaselineProb;
    throw ConfigError("task.type", "unknown task '" + name + "'");
}

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::Spectrum: return "spectrum";
        case TaskKind::G2: return "g2";
        case TaskKind::Lifetime: return "lifetime";
        case TaskKind::Extinction: return "extinction";
        case TaskKind::Saturate: return "saturate";
        case TaskKind::Fit: return "fit";
        case TaskKind::BaselineProb: return "baseline-prob";
    }
    return "spectrum";
}

std::vector<double> ScanSpec::values() const {
    std::vector<double> v(points);
    for (std::size_t k = 0; k < points; ++k)
        v[k] = start + (stop - start) * static_cast<double>(k) / static_cast<double>(points - 1);
    return v;
}

double DriveSpec::rabi_mhz(double gamma0) const {
    return rabi ? *rabi : rabi_from_saturation(saturation.value_or(0.0), gamma0);
}

double RunConfig::reference_frequency() const {
    if (!model) return 0.0;
    double s = 0.0;
    for (const auto& e : model->emitters) s += e.omega;
    return s / static_cast<double>(model->size());
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed JSON: ") + e.what());
    }
    return parse_config(doc, base_dir);
}

RunConfig parse_config(const json& input, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    cfg.echo = input;
    Node root(cfg.echo, "");
    Node task = root.object("task");
    cfg.kind = parse_task_kind(task.string("type", std::nullopt));

    ParsedModel model;
    if (root.has("model")) {
        model = parse_model(root.object("model"));
        cfg.model = model.model;
        cfg.pair = model.pair;
    } else if (cfg.kind != TaskKind::BaselineProb) {
        throw ConfigError("model", "required field is missing");
    }

    auto need_pair = [&](const char* what) {
        if (cfg.model->size() != 2) throw ConfigError("model", std::string(what) + " requires exactly two emitters");
    };

    switch (cfg.kind) {
        case TaskKind::Spectrum: {
            SpectrumTask t;
            t.drive = parse_drive(task);
            t.scan = parse_scan(task.object("scan"));
            t.normalize = task.boolean("normalize", false);
            cfg.task = t;
            break;
        }
        case TaskKind::G2: {
            G2Task t;
            t.drive = parse_drive(task);
            if (task.has("laser_detuning_mhz")) {
                if (task.has("laser")) throw ConfigError(task.path(), "give laser or laser_detuning_mhz, not both");
                t.laser_detuning = task.number("laser_detuning_mhz");
            } else {
                t.laser = task.string("laser", cfg.model->size() == 2 ? "plus" : "single", {"plus", "minus", "single"});
                if (t.laser != "single") need_pair("a dressed-state laser");
            }
            t.tau_max_ns = task.number("tau_max_ns", 20.0, 0.0, 1e6, true);
            t.points = task.unsigned_integer("points", 200, 2, 100'000);
            cfg.task = t;
            break;
        }
        case TaskKind::Lifetime: {
            LifetimeTask t;
            t.initial = task.string("initial", cfg.model->size() == 2 ? "plus" : "single", {"plus", "minus", "single"});
            if (t.initial != "single") need_pair("a dressed initial state");
            t.t_max_ns = task.number("t_max_ns", 0.0, 0.0, 1e6);
            t.points = task.unsigned_integer("points", 201, 2, 100'000);
            cfg.task = t;
            break;
        }
        case TaskKind::Extinction: {
            if (!cfg.pair) throw ConfigError("model", "extinction requires the pair form of the model");
            ExtinctionTask t;
            t.drive = parse_drive(task);
            Node d = task.object("detunings");
            t.detunings = parse_scan(d);
            cfg.task = t;
            break;
        }
        case TaskKind::Saturate: {
            SaturateTask t;
            t.saturations = task.numbers("saturations");
            if (t.saturations.empty()) throw ConfigError(task.child("saturations"), "needs at least one value");
            for (std::size_t k = 0; k < t.saturations.size(); ++k) {
                const std::string p = task.child("saturations") + "[" + std::to_string(k) + "]";
                if (!(t.saturations[k] > 0.0)) throw ConfigError(p, "must be positive");
                if (k > 0 && !(t.saturations[k] > t.saturations[k - 1])) throw ConfigError(p, "must be increasing");
            }
            t.scan = parse_scan(task.object("scan"));
            t.fit_expected = task.boolean("fit_expected", false);
            if (t.fit_expected) need_pair("fit_expected");
            t.rel_prominence = task.number("rel_prominence", 2e-3, 0.0, 1.0);
            cfg.task = t;
            break;
        }
        case TaskKind::Fit: cfg.task = parse_fit(task, model, base_dir); break;
        case TaskKind::BaselineProb: cfg.task = parse_resonance(task); break;
    }
    if (cfg.kind != TaskKind::Fit && cfg.kind != TaskKind::BaselineProb) task.finish();

    if (root.has("output")) {
        Node out = root.object("output");
        cfg.output_dir = out.string("dir", "out");
        out.finish();
    }
    cfg.seed = root.unsigned_integer("seed", 1, 0);
    root.finish();
    return cfg;
}

}  // namespace coop
