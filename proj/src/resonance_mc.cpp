#include "coop/errors.hpp"
#include "coop/observables.hpp"
#include "coop/parallel.hpp"
#include "coop/units.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace coop {

namespace {

constexpr double kMinSeparationNm = 0.1;

// h * MHz per (D^2 / nm^3) for aligned dipoles in a medium of permittivity eps_r.
double coupling_prefactor(double dipole_moment_debye, double epsilon_r) {
    const double d = dipole_moment_debye * units::kDebye;
    const double nm3 = std::pow(units::kNanometre, 3);
    return d * d / (4.0 * std::numbers::pi * units::kVacuumPermittivity * epsilon_r * nm3) / units::kPlanck * 1e-6;
}

}  // namespace

void ResonanceMcConfig::validate() const {
    if (n_molecules < 2) throw ModelError("at least two molecules are needed for a resonance");
    if (!(inhom_width_ghz > 0.0)) throw ModelError("inhomogeneous width must be positive");
    if (!(crystal_size_nm > 0.0)) throw ModelError("crystal size must be positive");
    if (!(threshold_factor > 0.0)) throw ModelError("threshold factor must be positive");
    if (n_samples < 10'000) throw ModelError("at least 10^4 samples are required");
    if (!(dipole_moment_debye > 0.0)) throw ModelError("dipole moment must be positive");
    if (!(epsilon_r > 0.0)) throw ModelError("relative permittivity must be positive");
    if (batch_size == 0) throw ModelError("batch size must be positive");
}

double aligned_coupling_mhz(const Vec3& r_nm, double dipole_moment_debye, double epsilon_r) {
    const double r2 = r_nm.squaredNorm();
    const double r = std::sqrt(r2);
    return std::abs(coupling_prefactor(dipole_moment_debye, epsilon_r) * (1.0 - 3.0 * r_nm.z() * r_nm.z() / r2) /
                    (r2 * r));
}

ProbabilityEstimate baseline_resonance_probability(const ResonanceMcConfig& config) {
    config.validate();
    const double k0 = coupling_prefactor(config.dipole_moment_debye, config.epsilon_r);
    const double width_mhz = config.inhom_width_ghz * 1e3;
    const auto n = static_cast<std::size_t>(config.n_molecules);
    const std::uint64_t n_batches = (config.n_samples + config.batch_size - 1) / config.batch_size;
    std::vector<std::uint64_t> hits(n_batches, 0);

    parallel_for(n_batches, config.threads, [&](std::size_t b) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(std::uint64_t{b} >> 32)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> pos(0.0, config.crystal_size_nm);
        std::uniform_real_distribution<double> freq(0.0, width_mhz);

        const std::uint64_t begin = b * config.batch_size;
        const std::uint64_t end = std::min(config.n_samples, begin + config.batch_size);
        std::vector<Vec3> r(n);
        std::vector<double> f(n);
        std::uint64_t count = 0;
        for (std::uint64_t s = begin; s < end; ++s) {
            for (auto& p : r) p = Vec3(pos(rng), pos(rng), pos(rng));
            for (auto& v : f) v = freq(rng);
            bool hit = false;
            for (std::size_t i = 0; i < n && !hit; ++i)
                for (std::size_t j = i + 1; j < n && !hit; ++j) {
                    const Vec3 d = r[j] - r[i];
                    const double r2 = d.squaredNorm();
                    if (r2 <= kMinSeparationNm * kMinSeparationNm) {
                        hit = true;
                        break;
                    }
                    const double coupling = std::abs(k0 * (1.0 - 3.0 * d.z() * d.z() / r2) / (r2 * std::sqrt(r2)));
                    hit = std::abs(f[i] - f[j]) < config.threshold_factor * coupling;
                }
            count += hit ? 1 : 0;
        }
        hits[b] = count;
    });

    ProbabilityEstimate out;
    out.n_samples = config.n_samples;
    for (auto h : hits) out.hits += h;
    out.p_hat = static_cast<double>(out.hits) / static_cast<double>(out.n_samples);
    out.stderr_ = std::sqrt(out.p_hat * (1.0 - out.p_hat) / static_cast<double>(out.n_samples));
    return out;
}

}  // namespace coop
