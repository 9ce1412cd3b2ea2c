#pragma once

#include "coop/levmar.hpp"
#include "coop/model.hpp"
#include "coop/observables.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace coop {

enum class ObservableKind { Spectrum, G2, Lifetime, Extinction, SaturationJoint };

ObservableKind parse_observable(const std::string& name);
std::string to_string(ObservableKind kind);

// One measured curve.
//   spectrum / saturation-joint: x = laser detuning from the pair center (MHz), y = photons/s
//   g2:         x = delay (ns), setting = plus | minus | single
//   lifetime:   one point, y = fitted lifetime (ns), setting = plus | minus | single
//   extinction: x = |Delta| (MHz), y = subradiant / superradiant height ratio
// `drive` is the nominal saturation parameter s of the block (unused for lifetimes).
struct DataBlock {
    std::string setting;
    double drive{0.0};
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> sigma;
};

// Recognised names: J, delta, gamma0, alpha, dephasing, saturation.
// A free `saturation` multiplies every block drive by saturation / blocks[0].drive,
// so for a single block it is the block's s itself.
struct FreeParameter {
    std::string name;
    double initial{0.0};
    double lower{0.0};
    double upper{0.0};
};

// Default box for a named parameter.
FreeParameter default_parameter(const std::string& name, double initial);

struct FitProblem {
    ObservableKind kind{ObservableKind::Spectrum};
    PairSpec fixed;  // values of every parameter not listed in `free`
    std::vector<DataBlock> blocks;
    std::vector<FreeParameter> free;

    void validate() const;
    std::size_t data_size() const;
};

struct FitResult {
    std::vector<std::string> names;
    Eigen::VectorXd values;
    Eigen::MatrixXd covariance;  // empty when the Jacobian is singular
    Eigen::VectorXd std_errors;
    double chi2{0.0};
    std::size_t dof{0};
    LmStatus status{LmStatus::MaxIterations};
    bool singular{false};
    int iterations{0};
    int evaluations{0};
    std::size_t start_index{0};  // which start produced the result

    bool converged() const { return status == LmStatus::Converged; }
    double value(const std::string& name) const;
};

struct FitOptions {
    LmOptions lm{};
    std::size_t extra_starts{0};  // additional uniformly drawn starts inside the bounds
    std::uint64_t seed{1};
    unsigned threads{1};
};

// Forward model evaluated at parameter values (ordered as problem.free), one
// vector per block.
std::vector<std::vector<double>> forward(const FitProblem& problem, const Eigen::VectorXd& values);

// Weighted residuals (model - y) / sigma. For spectra, a common amplitude is
// solved for in closed form at every evaluation.
Eigen::VectorXd weighted_residuals(const FitProblem& problem, const Eigen::VectorXd& values);

FitResult fit(const FitProblem& problem, const FitOptions& options = {});

// Replaces y with the forward model at `truth` plus Gaussian noise of standard
// deviation noise_level * max|model| per block; sigma is set to that level
// (or to 1e-3 * max|model| when noiseless).
FitProblem synthesize_data(const FitProblem& problem, const Eigen::VectorXd& truth, double noise_level,
                           std::uint64_t seed);

struct ProfilePoint {
    double value{0.0};
    double chi2{0.0};  // NaN when the inner fit failed
    bool converged{false};
    std::string error;
};

struct ProfileResult {
    std::string parameter;
    std::vector<ProfilePoint> points;
    std::size_t best_index{0};
    double chi2_min{0.0};
    // Interval where chi2 <= chi2_min + 1, linearly interpolated; clipped to the grid.
    double interval_lo{0.0};
    double interval_hi{0.0};
    bool interval_clipped{false};
    // chi2 rises by less than one unit across the whole grid.
    bool flat{false};
};

ProfileResult profile_scan(const FitProblem& problem, const std::string& parameter, const std::vector<double>& grid,
                           const FitOptions& options = {});

// Fits stages in order; each stage's best-fit values replace the fixed values
// and initial guesses of later stages. Stages with no free parameters are only evaluated.
struct StageResult {
    FitResult result;
    PairSpec fixed_after;
};

std::vector<StageResult> sequential_fit(std::vector<FitProblem> stages, const FitOptions& options = {});

// Sets a named parameter on the pair description.
void apply_parameter(PairSpec& spec, const std::string& name, double value);
double read_parameter(const PairSpec& spec, const std::string& name);

}  // namespace coop
