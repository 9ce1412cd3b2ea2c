#pragma once

#include "coop/lindblad.hpp"
#include "coop/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coop {

// Detected sideband photon rate versus laser frequency.
struct SpectrumTrace {
    std::vector<double> freqs;   // laser frequency, MHz, strictly increasing
    std::vector<double> signal;  // photons/s, or max-normalised when `normalized`
    bool normalized{false};
    double rabi{0.0};                  // drive snapshot, MHz
    std::vector<double> emitter_freqs;  // model snapshot, MHz

    void validate() const;
    SpectrumTrace normalized_copy() const;
};

struct CorrelationTrace {
    std::vector<double> taus;  // ns
    std::vector<double> g2;
    double rate{0.0};          // steady-state detected rate, photons/s
};

struct Peak {
    double center{0.0};  // MHz
    double height{0.0};  // signal units, above baseline
    double fwhm{0.0};    // MHz
};

// Parameters ordered (height, center, fwhm) per peak, then the baseline.
struct PeakSet {
    std::vector<Peak> peaks;
    double baseline{0.0};
    Eigen::MatrixXd covariance;
    double residual_norm{0.0};  // RMS residual, signal units
    double max_residual{0.0};
    bool converged{false};
    int iterations{0};
};

// ---------------------------------------------------------------------------
// Spectra

// Photons/s on the sideband detector for a given state.
double detected_rate(const SystemModel& model, const DensityOperator& rho);

SpectrumTrace excitation_spectrum(const SystemModel& model, double rabi, std::span<const double> laser_freqs,
                                  unsigned threads = 1);

// Symmetric drive at `rabi` tuned to `laser_freq`.
DensityOperator driven_steady_state(const SystemModel& model, double rabi, double laser_freq);

// ---------------------------------------------------------------------------
// Peak extraction

struct PeakFitOptions {
    bool fit_baseline{true};
    bool fix_centers{false};
    // Maximum excursion of each center from its initial guess, MHz. Infinite by default.
    double center_window{0.0};
    // When > 1, each width stays within [w / f, w * f] of its initial guess.
    double width_factor{0.0};
    int max_iterations{400};
};

// Local maxima whose prominence is at least rel_prominence * max(signal), highest first.
std::vector<std::size_t> detect_peaks(const SpectrumTrace& trace, double rel_prominence);

// Sum of A_k / (1 + 4 (nu - nu_k)^2 / w_k^2) plus a constant baseline.
double lorentzian_sum(const std::vector<Peak>& peaks, double baseline, double nu);

// Least-squares multi-Lorentzian fit. Throws FitError if the iteration cap is hit.
PeakSet peak_fit(const SpectrumTrace& trace, std::size_t n_peaks,
                 const std::optional<std::vector<Peak>>& init = std::nullopt, const PeakFitOptions& options = {});

// ---------------------------------------------------------------------------
// Subradiant extinction

struct ExtinctionPoint {
    double detuning{0.0};     // |Delta|, MHz
    double ratio{0.0};        // subradiant / superradiant fitted height
    double sub_height{0.0};
    double super_height{0.0};
    bool flagged{false};      // peaks unresolved; centers held at the dressed frequencies
};

struct ExtinctionOptions {
    double window_widths{8.0};      // half-width of each scan window, in linewidths
    double points_per_width{8.0};
    unsigned threads{1};
};

// Scan grid covering both dressed resonances of a pair.
std::vector<double> dressed_scan_grid(const SystemModel& model, double coupling, double rabi,
                                      const ExtinctionOptions& options = {});

ExtinctionPoint extinction_point(const PairSpec& pair, double rabi, const ExtinctionOptions& options = {});

std::vector<ExtinctionPoint> extinction_ratio_curve(const PairSpec& model_template, std::span<const double> detunings,
                                                    double rabi, const ExtinctionOptions& options = {});

// ---------------------------------------------------------------------------
// Correlations and lifetimes

enum class EigenstateSelector { Plus, Minus, Single };

EigenstateSelector parse_selector(const std::string& name);
std::string to_string(EigenstateSelector sel);

// Dressed-state (pair) or bare (single) resonance frequency, MHz.
double resonant_laser(const SystemModel& model, EigenstateSelector sel);

// Normalised g2 of the summed sideband intensity. Negative taus use g2(-tau) = g2(tau).
CorrelationTrace g2_curve(const SystemModel& model, const DriveParams& drive, std::span<const double> taus_ns);

// Symmetric axis [-tau_max, tau_max] with `points` samples on each side of zero.
std::vector<double> symmetric_axis(double tau_max, std::size_t points);

struct OscillationFit {
    double rabi_mhz{0.0};     // effective Rabi frequency, ordinary MHz
    double damping_per_ns{0.0};
    double sine_weight{0.0};
    double residual_rms{0.0};
};

// Fits 1 - exp(-a tau) (cos(W tau) + b sin(W tau)) over tau >= 0.
OscillationFit fit_damped_oscillation(const CorrelationTrace& trace);

struct LifetimeResult {
    std::vector<double> times;  // ns
    std::vector<double> rate;   // total emission rate 2 pi Gamma0 <sum n_i>, photons/s
    double tau_ns{0.0};
    double tau_estimate_ns{0.0};
    double window_lo_ns{0.0};
    double window_hi_ns{0.0};
    double residual_rms{0.0};   // relative residual of the single-exponential fit
    bool multi_exponential{false};
    double tau_fast_ns{0.0};
    double tau_slow_ns{0.0};
    std::string warning;
};

// Prepares the selected single-excitation state and records its undriven decay.
// The single-exponential fit uses [0.1, 3] x the dressed-state lifetime estimate.
LifetimeResult lifetime_trace(const SystemModel& model, EigenstateSelector initial, std::span<const double> times_ns);

DensityOperator single_excitation_state(const SystemModel& model, EigenstateSelector sel);

// ---------------------------------------------------------------------------
// Saturation

struct SaturationPoint {
    double rabi{0.0};
    double saturation{0.0};
    SpectrumTrace trace;
    PeakSet peaks;
    std::vector<std::string> labels;  // "minus", "two-photon", "plus" per fitted peak
    std::size_t detected{0};
    bool fit_ok{false};
    std::string message;
};

struct SaturationOptions {
    double rel_prominence{2e-3};
    // Pairs only: always fit three peaks seeded at the dressed and two-photon
    // frequencies, so sub-threshold two-photon heights are still measured.
    bool fit_expected{false};
    unsigned threads{1};
};

std::vector<SaturationPoint> saturation_series(const SystemModel& model, std::span<const double> rabis,
                                               std::span<const double> laser_freqs,
                                               const SaturationOptions& options = {});

// ---------------------------------------------------------------------------
// Random-resonance Monte Carlo

struct ResonanceMcConfig {
    int n_molecules{2};
    double inhom_width_ghz{100.0};
    double crystal_size_nm{500.0};
    double threshold_factor{2.0};  // pair resonant when |Delta| < factor * |J(r)|
    std::uint64_t n_samples{1'000'000};
    std::uint64_t seed{1};
    double dipole_moment_debye{13.0};
    double epsilon_r{2.4};
    std::uint64_t batch_size{1u << 16};
    unsigned threads{1};

    void validate() const;
};

struct ProbabilityEstimate {
    double p_hat{0.0};
    double stderr_{0.0};
    std::uint64_t hits{0};
    std::uint64_t n_samples{0};
};

// Uniform positions in a cube of side crystal_size, uniform frequencies over
// the inhomogeneous width, all dipoles aligned along z. Bit-identical for a
// fixed seed regardless of the thread count.
ProbabilityEstimate baseline_resonance_probability(const ResonanceMcConfig& config);

// |J| in MHz for two aligned dipoles at separation vector r (nm).
double aligned_coupling_mhz(const Vec3& r_nm, double dipole_moment_debye, double epsilon_r);

}  // namespace coop
