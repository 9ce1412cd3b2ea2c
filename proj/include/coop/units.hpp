#pragma once

#include <numbers>

// Unit conventions
// ----------------
// User-facing frequencies and rates are ordinary frequencies in MHz, times are
// in ns. Dynamics run on angular rates in rad/us, i.e. 2*pi*(value in MHz),
// so a time in ns enters the propagators as t * 1e-3.
//
// Physical constants are CODATA 2018 (h and c exact).
namespace coop::units {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr double kPlanck = 6.62607015e-34;              // J s
inline constexpr double kSpeedOfLight = 299792458.0;           // m / s
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F / m
inline constexpr double kDebye = 1e-21 / kSpeedOfLight;        // C m

inline constexpr double kNanometre = 1e-9;

constexpr double angular(double mhz) { return kTwoPi * mhz; }

constexpr double ns_to_us(double ns) { return ns * 1e-3; }

// 1 / (2 pi Gamma) expressed in ns for Gamma in MHz.
constexpr double lifetime_ns(double rate_mhz) { return 1e3 / (kTwoPi * rate_mhz); }

// Inverse of lifetime_ns.
constexpr double rate_from_lifetime_mhz(double tau_ns) { return 1e3 / (kTwoPi * tau_ns); }

// Emission rate in photons/s for an angular decay rate 2 pi Gamma (Gamma in MHz)
// acting on a unit population.
constexpr double photons_per_second(double rate_mhz) { return kTwoPi * rate_mhz * 1e6; }

// Optical frequency in MHz of a vacuum wavelength in nm.
constexpr double optical_frequency_mhz(double wavelength_nm) {
    return kSpeedOfLight / (wavelength_nm * kNanometre) * 1e-6;
}

}  // namespace coop::units
