#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace coop {

using Vec3 = Eigen::Vector3d;

// A single two-level molecule. Positions in nm, omega in MHz, dipole_moment in Debye.
struct EmitterParams {
    double omega{0.0};
    Vec3 position{Vec3::Zero()};
    Vec3 dipole{Vec3::UnitZ()};
    double dipole_moment{1.0};

    void validate() const;
};

struct MediumParams {
    double epsilon_r{1.0};
    double wavelength{785.0};  // vacuum wavelength, nm

    void validate() const;
};

enum class CollectiveDecayForm {
    PointDipole,    // alpha * Gamma0 * (d_i . d_j)
    GreenFunction,  // imaginary part of the free-space dyadic Green's function
};

// Rates in MHz. J has zero diagonal; gamma_coll carries the zero-phonon-line
// channel only, so its diagonal is alpha * gamma0.
struct SystemModel {
    std::vector<EmitterParams> emitters;
    double gamma0{0.0};
    double alpha{0.3};
    double dephasing{0.0};
    Eigen::MatrixXd J;
    Eigen::MatrixXd gamma_coll;

    std::size_t size() const noexcept { return emitters.size(); }

    // Throws ModelError naming the broken invariant.
    void validate() const;
};

struct DriveParams {
    std::vector<double> rabi;  // MHz, one per emitter
    double laser_freq{0.0};    // MHz

    static DriveParams uniform(std::size_t n, double rabi, double laser_freq);

    void validate(std::size_t n) const;
};

// Single-excitation eigenstates of a coupled pair, using
//   |+> = sin(theta)|eg> + cos(theta)|ge>,  |-> = cos(theta)|eg> - sin(theta)|ge>
// with tan(theta) = 2J / (Delta + Delta~) and Delta = omega2 - omega1, so |+> is
// always the upper state. Which one is superradiant follows from sign(J).
struct DressedStates {
    double freq_plus{0.0};
    double freq_minus{0.0};
    double theta{0.0};
    double delta_tilde{0.0};
    double gamma_plus{0.0};
    double gamma_minus{0.0};

    // Amplitudes on (|eg>, |ge>).
    Eigen::Vector2d plus_vector() const;
    Eigen::Vector2d minus_vector() const;

    bool plus_is_superradiant() const noexcept { return gamma_plus > gamma_minus; }
};

// Near-field dipole-dipole exchange J_ij in MHz.
double dipole_coupling(const EmitterParams& e_i, const EmitterParams& e_j, const MediumParams& medium);

// Zero-phonon-line cross decay rate Gamma_ij in MHz (point-dipole limit).
double collective_decay(const EmitterParams& e_i, const EmitterParams& e_j, const SystemModel& model);

// Same quantity from the full free-space Green's function at wavevector
// k = 2 pi sqrt(epsilon_r) / wavelength. Reduces to collective_decay as kr -> 0.
double collective_decay_green(const EmitterParams& e_i, const EmitterParams& e_j, double gamma0,
                              double alpha, const MediumParams& medium);

DressedStates eigenmodes(double omega1, double omega2, double coupling, const SystemModel& model);

// Fills J and gamma_coll from the emitter geometry.
SystemModel make_geometric_model(std::vector<EmitterParams> emitters, const MediumParams& medium,
                                 double gamma0, double alpha, double dephasing,
                                 CollectiveDecayForm form = CollectiveDecayForm::PointDipole);

// Two-emitter model parameterised directly by coupling and detuning, the way
// spectra are fitted. omega1 = center - detuning/2, omega2 = center + detuning/2.
struct PairSpec {
    double gamma0{33.0};
    double alpha{0.3};
    double dephasing{0.0};
    double coupling{0.0};
    double detuning{0.0};
    double center{0.0};  // 0 selects the 785 nm optical frequency
    double dipole_overlap{1.0};  // d_1 . d_2, scales Gamma_12
};

SystemModel make_pair_model(const PairSpec& spec);

double pair_center(const PairSpec& spec);

// Saturation parameter s = 2 Omega^2 / Gamma0^2 and its inverse.
double rabi_from_saturation(double saturation, double gamma0);
double saturation_from_rabi(double rabi, double gamma0);

}  // namespace coop
