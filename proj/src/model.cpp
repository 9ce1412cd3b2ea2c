#include "coop/model.hpp"

#include "coop/errors.hpp"
#include "coop/units.hpp"

#include <cmath>
#include <string>

namespace coop {

namespace {

constexpr double kMinSeparationNm = 0.1;

std::string emitter_label(std::size_t i) { return "emitter " + std::to_string(i); }

}  // namespace

void EmitterParams::validate() const {
    if (!(omega > 0.0)) throw ModelError("emitter frequency must be positive");
    if (std::abs(dipole.norm() - 1.0) > 1e-12) throw ModelError("dipole orientation must be a unit vector");
    if (!(dipole_moment >= 0.0)) throw ModelError("dipole moment must be non-negative");
}

void MediumParams::validate() const {
    if (!(epsilon_r >= 1.0)) throw ModelError("relative permittivity must be >= 1");
    if (!(wavelength > 0.0)) throw ModelError("wavelength must be positive");
}

void SystemModel::validate() const {
    const auto n = static_cast<Eigen::Index>(size());
    if (n == 0) throw ModelError("model has no emitters");
    for (std::size_t i = 0; i < size(); ++i) {
        try {
            emitters[i].validate();
        } catch (const ModelError& e) {
            throw ModelError(emitter_label(i) + ": " + e.what());
        }
    }
    if (!(gamma0 > 0.0)) throw ModelError("gamma0 must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ModelError("alpha must lie in [0, 1]");
    if (!(dephasing >= 0.0)) throw ModelError("dephasing must be non-negative");
    if (J.rows() != n || J.cols() != n) throw ModelError("coupling matrix has wrong shape");
    if (gamma_coll.rows() != n || gamma_coll.cols() != n)
        throw ModelError("collective decay matrix has wrong shape");

    const double zpl = alpha * gamma0;
    const double tol = 1e-12 * std::max(1.0, gamma0);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (J(i, i) != 0.0) throw ModelError("coupling matrix must have zero diagonal");
        if (std::abs(gamma_coll(i, i) - zpl) > tol)
            throw ModelError("collective decay diagonal must equal alpha * gamma0");
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (J(i, j) != J(j, i)) throw ModelError("coupling matrix must be symmetric");
            if (gamma_coll(i, j) != gamma_coll(j, i)) throw ModelError("collective decay matrix must be symmetric");
            if (std::abs(gamma_coll(i, j)) > zpl + tol)
                throw ModelError("|Gamma_ij| exceeds alpha * gamma0");
        }
    }
    if (n > 1) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gamma_coll, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-9 * std::max(1.0, zpl))
            throw ModelError("collective decay matrix is not positive semidefinite");
    }
}

DriveParams DriveParams::uniform(std::size_t n, double rabi, double laser_freq) {
    return DriveParams{std::vector<double>(n, rabi), laser_freq};
}

void DriveParams::validate(std::size_t n) const {
    if (rabi.size() != n) throw ModelError("drive needs one Rabi frequency per emitter");
    for (double r : rabi)
        if (!(r >= 0.0)) throw ModelError("Rabi frequencies must be non-negative");
}

Eigen::Vector2d DressedStates::plus_vector() const { return {std::sin(theta), std::cos(theta)}; }

Eigen::Vector2d DressedStates::minus_vector() const { return {std::cos(theta), -std::sin(theta)}; }

double dipole_coupling(const EmitterParams& e_i, const EmitterParams& e_j, const MediumParams& medium) {
    medium.validate();
    const Vec3 sep = e_j.position - e_i.position;
    const double r_nm = sep.norm();
    if (!(r_nm > kMinSeparationNm))
        throw DegenerateGeometryError("emitters are closer than 0.1 nm");
    const Vec3 rhat = sep / r_nm;
    const double angular = e_i.dipole.dot(e_j.dipole) - 3.0 * e_i.dipole.dot(rhat) * e_j.dipole.dot(rhat);

    const double d2 = e_i.dipole_moment * e_j.dipole_moment * units::kDebye * units::kDebye;
    const double r = r_nm * units::kNanometre;
    const double energy =
        d2 * angular / (4.0 * std::numbers::pi * units::kVacuumPermittivity * medium.epsilon_r * r * r * r);
    return energy / units::kPlanck * 1e-6;
}

double collective_decay(const EmitterParams& e_i, const EmitterParams& e_j, const SystemModel& model) {
    return model.alpha * model.gamma0 * e_i.dipole.dot(e_j.dipole);
}

double collective_decay_green(const EmitterParams& e_i, const EmitterParams& e_j, double gamma0,
                              double alpha, const MediumParams& medium) {
    medium.validate();
    const Vec3 sep = e_j.position - e_i.position;
    const double r = sep.norm();
    const double zpl = alpha * gamma0;
    if (r == 0.0) return zpl * e_i.dipole.dot(e_j.dipole);

    const Vec3 rhat = sep / r;
    const double k = units::kTwoPi * std::sqrt(medium.epsilon_r) / medium.wavelength;
    const double x = k * r;
    const double pp = e_i.dipole.dot(e_j.dipole);
    const double pr = e_i.dipole.dot(rhat) * e_j.dipole.dot(rhat);

    // Series form below x ~ 1e-3 avoids cancellation in the 1/x^3 terms.
    double far, near;
    if (x < 1e-3) {
        const double x2 = x * x;
        far = 1.0 - x2 / 6.0;
        near = -1.0 / 3.0 + x2 / 30.0;
    } else {
        far = std::sin(x) / x;
        near = std::cos(x) / (x * x) - std::sin(x) / (x * x * x);
    }
    return 1.5 * zpl * ((pp - pr) * far + (pp - 3.0 * pr) * near);
}

DressedStates eigenmodes(double omega1, double omega2, double coupling, const SystemModel& model) {
    const double delta = omega2 - omega1;
    DressedStates out;
    out.delta_tilde = std::hypot(delta, 2.0 * coupling);

    if (coupling == 0.0) {
        out.theta = delta >= 0.0 ? 0.0 : std::numbers::pi / 2.0;
    } else if (delta >= 0.0) {
        out.theta = std::atan(2.0 * coupling / (delta + out.delta_tilde));
    } else {
        // delta + delta~ = 4J^2 / (delta~ - delta) without cancellation.
        out.theta = std::atan((out.delta_tilde - delta) / (2.0 * coupling));
    }

    const double mean = 0.5 * (omega1 + omega2);
    out.freq_plus = mean + 0.5 * out.delta_tilde;
    out.freq_minus = mean - 0.5 * out.delta_tilde;

    const double gamma12 = model.size() >= 2 ? model.gamma_coll(0, 1) : model.alpha * model.gamma0;
    const double s2t = std::sin(2.0 * out.theta);
    out.gamma_plus = model.gamma0 + s2t * gamma12;
    out.gamma_minus = model.gamma0 - s2t * gamma12;
    return out;
}

SystemModel make_geometric_model(std::vector<EmitterParams> emitters, const MediumParams& medium,
                                 double gamma0, double alpha, double dephasing, CollectiveDecayForm form) {
    SystemModel model;
    model.emitters = std::move(emitters);
    model.gamma0 = gamma0;
    model.alpha = alpha;
    model.dephasing = dephasing;

    const auto n = static_cast<Eigen::Index>(model.size());
    model.J = Eigen::MatrixXd::Zero(n, n);
    model.gamma_coll = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        model.gamma_coll(i, i) = alpha * gamma0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const auto& a = model.emitters[static_cast<std::size_t>(i)];
            const auto& b = model.emitters[static_cast<std::size_t>(j)];
            const double jij = dipole_coupling(a, b, medium);
            const double gij = form == CollectiveDecayForm::PointDipole
                                   ? collective_decay(a, b, model)
                                   : collective_decay_green(a, b, gamma0, alpha, medium);
            model.J(i, j) = model.J(j, i) = jij;
            model.gamma_coll(i, j) = model.gamma_coll(j, i) = gij;
        }
    }
    model.validate();
    return model;
}

double pair_center(const PairSpec& spec) {
    return spec.center > 0.0 ? spec.center : units::optical_frequency_mhz(785.0);
}

SystemModel make_pair_model(const PairSpec& spec) {
    if (std::abs(spec.dipole_overlap) > 1.0) throw ModelError("dipole overlap must lie in [-1, 1]");
    const double center = pair_center(spec);

    SystemModel model;
    model.gamma0 = spec.gamma0;
    model.alpha = spec.alpha;
    model.dephasing = spec.dephasing;
    EmitterParams a, b;
    a.omega = center - 0.5 * spec.detuning;
    b.omega = center + 0.5 * spec.detuning;
    // Geometry is not used when J is given directly; keep the positions distinct
    // and encode the dipole overlap in the orientation of the second emitter.
    b.position = Vec3(10.0, 0.0, 0.0);
    const double c = spec.dipole_overlap;
    b.dipole = Vec3(std::sqrt(std::max(0.0, 1.0 - c * c)), 0.0, c);
    model.emitters = {a, b};

    const double zpl = spec.alpha * spec.gamma0;
    model.J = Eigen::MatrixXd::Zero(2, 2);
    model.J(0, 1) = model.J(1, 0) = spec.coupling;
    model.gamma_coll = Eigen::MatrixXd::Constant(2, 2, zpl * c);
    model.gamma_coll(0, 0) = model.gamma_coll(1, 1) = zpl;
    model.validate();
    return model;
}

double rabi_from_saturation(double saturation, double gamma0) {
    if (saturation < 0.0) throw ModelError("saturation parameter must be non-negative");
    return gamma0 * std::sqrt(0.5 * saturation);
}

double saturation_from_rabi(double rabi, double gamma0) { return 2.0 * rabi * rabi / (gamma0 * gamma0); }

}  // namespace coop
