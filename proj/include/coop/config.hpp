#pragma once

#include "coop/inference.hpp"
#include "coop/model.hpp"
#include "coop/observables.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace coop {

enum class TaskKind { Spectrum, G2, Lifetime, Extinction, Saturate, Fit, BaselineProb };

TaskKind parse_task_kind(const std::string& name);
std::string to_string(TaskKind kind);

// Evenly spaced axis, inclusive of both ends.
struct ScanSpec {
    double start{0.0};
    double stop{0.0};
    std::size_t points{0};

    std::vector<double> values() const;
};

// Drive given either as a saturation parameter or as a Rabi frequency in MHz.
struct DriveSpec {
    std::optional<double> saturation;
    std::optional<double> rabi;

    double rabi_mhz(double gamma0) const;
};

struct SpectrumTask {
    DriveSpec drive;
    ScanSpec scan;  // laser detuning from the mean emitter frequency, MHz
    bool normalize{false};
};

struct G2Task {
    DriveSpec drive;
    std::string laser;  // plus | minus | single, empty when a detuning is given
    std::optional<double> laser_detuning;
    double tau_max_ns{20.0};
    std::size_t points{200};  // per side of zero
};

struct LifetimeTask {
    std::string initial{"plus"};
    double t_max_ns{0.0};  // 0 selects five lifetime estimates
    std::size_t points{201};
};

struct ExtinctionTask {
    DriveSpec drive;
    ScanSpec detunings;
};

struct SaturateTask {
    std::vector<double> saturations;
    ScanSpec scan;
    bool fit_expected{false};
    double rel_prominence{2e-3};
};

struct ProfileSpec {
    std::string parameter;
    ScanSpec grid;
};

struct SynthesisSpec {
    std::vector<std::pair<std::string, double>> truth;
    double noise{0.0};
    std::optional<std::uint64_t> seed;
};

struct FitTask {
    FitProblem problem;
    std::size_t extra_starts{0};
    std::optional<ProfileSpec> profile;
    std::optional<SynthesisSpec> synthesize;
};

using ResonanceTask = ResonanceMcConfig;

struct RunConfig {
    TaskKind kind{TaskKind::Spectrum};
    std::optional<SystemModel> model;
    std::optional<PairSpec> pair;  // set when the model was given in pair form
    std::variant<SpectrumTask, G2Task, LifetimeTask, ExtinctionTask, SaturateTask, FitTask, ResonanceTask> task;
    std::string output_dir{"out"};
    std::uint64_t seed{1};
    nlohmann::json echo;  // the input document with defaults filled in

    double reference_frequency() const;  // mean emitter frequency, MHz
};

// Parses and validates a JSON run configuration. Relative data-file paths are
// resolved against base_dir. Throws ConfigError naming the offending field.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

}  // namespace coop
