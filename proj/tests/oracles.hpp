#pragma once

// Closed-form and quadrature reference values, written independently of the
// library implementation. Rates are angular (rad/us) unless a name says MHz.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

namespace oracle {

inline constexpr double kPi = std::numbers::pi;

// Driven two-level emitter with pure dephasing gamma_phi (coherence decays at
// gamma/2 + gamma_phi). Omega is the Rabi frequency in H = Omega/2 (sigma + sigma^dag).
inline double two_level_population(double detuning, double omega, double gamma, double gamma_phi) {
    const double g2 = gamma / 2.0 + gamma_phi;
    const double pump = omega * omega * g2 / (2.0 * gamma);
    return pump / (detuning * detuning + g2 * g2 + omega * omega * g2 / gamma);
}

// Resonant resonance fluorescence in the underdamped regime, tau in us.
inline double resonance_fluorescence_g2(double tau, double omega, double gamma) {
    const double w = std::sqrt(omega * omega - gamma * gamma / 16.0);
    return 1.0 - std::exp(-0.75 * gamma * tau) * (std::cos(w * tau) + 0.75 * gamma / w * std::sin(w * tau));
}

// Eigenvalues of the symmetric 2x2 single-excitation block [[w1, J], [J, w2]], ascending.
inline std::array<double, 2> pair_levels(double w1, double w2, double coupling) {
    Eigen::Matrix2d h;
    h << w1, coupling, coupling, w2;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(h);
    return {es.eigenvalues()(0), es.eigenvalues()(1)};
}

// Decay rates of the two single-excitation eigenvectors of the pair block,
// Gamma_k = Gamma0 + 2 v1 v2 Gamma12, ordered like pair_levels.
inline std::array<double, 2> pair_rates(double w1, double w2, double coupling, double gamma0, double gamma12) {
    Eigen::Matrix2d h;
    h << w1, coupling, coupling, w2;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(h);
    std::array<double, 2> out{};
    for (int k = 0; k < 2; ++k) {
        const auto v = es.eigenvectors().col(k);
        out[k] = gamma0 + 2.0 * v(0) * v(1) * gamma12;
    }
    return out;
}

// Undriven pair restricted to the single-excitation block {|eg>, |ge>}. With no
// drive this 2x2 block of rho evolves on its own: coherent exchange, the
// non-Hermitian decay matrix Gamma0 + Gamma12 sigma_x and projector dephasing
// at rate 2 gamma_phi. Returns the four eigenvalues of that 4x4 map (angular),
// inputs in MHz.
inline Eigen::Vector4cd single_excitation_sector(double w1, double w2, double coupling, double gamma0,
                                                 double gamma12, double gamma_phi) {
    using C = std::complex<double>;
    const double tp = 2.0 * kPi;
    Eigen::Matrix2cd h;
    h << tp * w1, tp * coupling, tp * coupling, tp * w2;
    Eigen::Matrix2cd g;
    g << tp * gamma0, tp * gamma12, tp * gamma12, tp * gamma0;
    const Eigen::Matrix2cd heff = h - C(0.0, 0.5) * g;
    Eigen::Matrix4cd map = Eigen::Matrix4cd::Zero();
    for (int col = 0; col < 4; ++col) {
        Eigen::Matrix2cd rho = Eigen::Matrix2cd::Zero();
        rho(col % 2, col / 2) = 1.0;
        Eigen::Matrix2cd out = C(0.0, -1.0) * (heff * rho - rho * heff.adjoint());
        for (int i = 0; i < 2; ++i) {
            Eigen::Matrix2cd p = Eigen::Matrix2cd::Zero();
            p(i, i) = 1.0;
            out += 2.0 * tp * gamma_phi * (p * rho * p - 0.5 * (p * rho + rho * p));
        }
        for (int k = 0; k < 4; ++k) map(k, col) = out(k % 2, k / 2);
    }
    return Eigen::ComplexEigenSolver<Eigen::Matrix4cd>(map).eigenvalues();
}

// Near-field coupling prefactor d^2 / (4 pi eps0 eps_r h) in MHz nm^3.
inline double coupling_constant_mhz_nm3(double dipole_debye, double epsilon_r) {
    const double debye = 1e-21 / 299792458.0;
    const double eps0 = 8.8541878128e-12;
    const double h = 6.62607015e-34;
    const double d = dipole_debye * debye;
    const double hz_m3 = d * d / (4.0 * kPi * eps0 * epsilon_r) / h;
    return hz_m3 * 1e-6 * 1e27;
}

// Probability that two molecules, uniform in a cube of side L (nm) with
// frequencies uniform over a width W (MHz) and dipoles along z, satisfy
// |Delta| < factor |J|. The separation density is prod_k (L - |u_k|) / L^6;
// P(|Delta| < x) = 2x/W - x^2/W^2 for x < W. Integrated in spherical
// coordinates over one octant with ln r as the radial variable.
inline double resonance_probability_quadrature(double crystal_nm, double width_mhz, double factor,
                                               double dipole_debye, double epsilon_r) {
    using boost::math::quadrature::gauss_kronrod;
    const double L = crystal_nm;
    const double W = width_mhz;
    const double k = factor * coupling_constant_mhz_nm3(dipole_debye, epsilon_r);
    const double tol = 1e-9;

    auto angular = [&](double c, double phi) {
        const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        const double n[3] = {s * std::cos(phi), s * std::sin(phi), c};
        const double nmax = std::max({n[0], n[1], n[2]});
        const double r_max = L / nmax;
        const double a = k * std::abs(1.0 - 3.0 * c * c);
        auto density = [&](double r) {
            return (L - r * n[0]) * (L - r * n[1]) * (L - r * n[2]) / std::pow(L, 6);
        };
        // Inside r_star every pair is resonant.
        const double r_star = std::min(r_max, std::cbrt(a / W));
        double inner = 0.0;
        if (r_star > 0.0) {
            inner = gauss_kronrod<double, 31>::integrate(
                [&](double r) { return r * r * density(r); }, 0.0, r_star, 15, tol);
        }
        double outer = 0.0;
        if (r_star < r_max) {
            outer = gauss_kronrod<double, 31>::integrate(
                [&](double t) {
                    const double r = std::exp(t);
                    const double x = a / (r * r * r);
                    const double p = 2.0 * x / W - x * x / (W * W);
                    return r * r * r * density(r) * p;
                },
                std::log(std::max(r_star, 1e-12 * r_max)), std::log(r_max), 15, tol);
        }
        return inner + outer;
    };
    auto over_phi = [&](double c) {
        auto f = [&](double phi) { return angular(c, phi); };
        return gauss_kronrod<double, 31>::integrate(f, 0.0, kPi / 4.0, 15, tol) +
               gauss_kronrod<double, 31>::integrate(f, kPi / 4.0, kPi / 2.0, 15, tol);
    };
    const double magic = 1.0 / std::sqrt(3.0);
    const double octant = gauss_kronrod<double, 31>::integrate(over_phi, 0.0, magic, 15, tol) +
                          gauss_kronrod<double, 31>::integrate(over_phi, magic, 1.0, 15, tol);
    return 8.0 * octant;
}

}  // namespace oracle
