#include "coop/errors.hpp"
#include "coop/lindblad.hpp"
#include "coop/observables.hpp"
#include "coop/units.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <random>

using namespace coop;

namespace {

constexpr double kCenter = 4.0e8;

SystemModel single_model(double gamma0, double alpha, double dephasing, double omega = kCenter) {
    SystemModel m;
    EmitterParams e;
    e.omega = omega;
    m.emitters = {e};
    m.gamma0 = gamma0;
    m.alpha = alpha;
    m.dephasing = dephasing;
    m.J = Eigen::MatrixXd::Zero(1, 1);
    m.gamma_coll = Eigen::MatrixXd::Constant(1, 1, alpha * gamma0);
    return m;
}

SystemModel pair(double gamma0, double alpha, double dephasing, double coupling, double detuning,
                 double overlap = 1.0) {
    PairSpec s;
    s.gamma0 = gamma0;
    s.alpha = alpha;
    s.dephasing = dephasing;
    s.coupling = coupling;
    s.detuning = detuning;
    s.center = kCenter;
    s.dipole_overlap = overlap;
    return make_pair_model(s);
}

CMatrix random_density(Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    CMatrix a(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) a(i, j) = {g(rng), g(rng)};
    CMatrix rho = a * a.adjoint();
    return rho / rho.trace();
}

double max_abs(const CMatrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Liouvillian, SingleEmitterSpectrum) {
    const auto model = single_model(33.0, 0.3, 0.0);
    const auto L = build_liouvillian(model, DriveParams::uniform(1, 0.0, kCenter));
    const auto ev = generator_eigenvalues(L);
    const double gamma = units::angular(33.0);
    bool zero = false, decay = false;
    for (const auto& z : ev) {
        if (std::abs(z) < 1e-9) zero = true;
        if (std::abs(z + gamma) < 1e-9 * gamma) decay = true;
    }
    EXPECT_TRUE(zero);
    EXPECT_TRUE(decay);
    EXPECT_NEAR(spectral_abscissa(L), 0.0, 1e-9);
}

TEST(Liouvillian, IndependentEmittersFactorise) {
    const auto model = pair(33.0, 0.3, 0.7, 0.0, 180.0, 0.0);
    const double laser = kCenter + 40.0;
    const auto drive = DriveParams::uniform(2, 12.0, laser);
    const auto L2 = build_liouvillian(model, drive);
    const auto L0 = build_liouvillian(single_model(33.0, 0.3, 0.7, model.emitters[0].omega),
                                      DriveParams::uniform(1, 12.0, laser));
    const auto L1 = build_liouvillian(single_model(33.0, 0.3, 0.7, model.emitters[1].omega),
                                      DriveParams::uniform(1, 12.0, laser));
    // Emitter 1 is the more significant bit, so product operators are rho1 (x) rho0.
    double worst = 0.0;
    for (int k = 0; k < 16; ++k) {
        CMatrix a = CMatrix::Zero(2, 2), b = CMatrix::Zero(2, 2);
        a(k % 2, (k / 2) % 2) = 1.0;
        b((k / 4) % 2, k / 8) = 1.0;
        const CMatrix rho = Eigen::kroneckerProduct(b, a).eval();
        const CMatrix expected = Eigen::kroneckerProduct(L1.apply(b), a).eval() +
                                 Eigen::kroneckerProduct(b, L0.apply(a)).eval();
        worst = std::max(worst, max_abs(L2.apply(rho) - expected));
    }
    EXPECT_LT(worst, 1e-12 * max_abs(L2.generator));
}

TEST(Liouvillian, PreservesTraceAndHermiticity) {
    const auto model = pair(33.0, 0.11, 1.0, 1020.0, 2600.0);
    const auto L = build_liouvillian(model, DriveParams::uniform(2, 60.0, kCenter + 300.0));
    const DensityOperator rho0(random_density(4, 3));
    const std::vector<double> times{0.5, 2.0, 10.0};
    for (const auto& rho : propagate(L, rho0, times)) {
        EXPECT_NEAR(rho.matrix().trace().real(), 1.0, 1e-12);
        EXPECT_NO_THROW(rho.validate());
    }
    // Column sums over the diagonal vanish: trace functional annihilates the generator.
    CVector tr = CVector::Zero(16);
    for (int k = 0; k < 4; ++k) tr(k * 4 + k) = 1.0;
    EXPECT_LT((tr.transpose() * L.generator).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Liouvillian, RejectsOversizedSystems) {
    SystemModel m = single_model(33.0, 0.3, 0.0);
    m.emitters.resize(kMaxEmitters + 1, m.emitters[0]);
    EXPECT_THROW(build_liouvillian(m, DriveParams::uniform(m.size(), 0.0, kCenter)), CapacityError);
}

TEST(SteadyState, UndrivenIsGround) {
    const auto model = pair(33.0, 0.11, 1.0, 1020.0, 2600.0);
    const auto rho = steady_state(build_liouvillian(model, DriveParams::uniform(2, 0.0, kCenter)));
    EXPECT_NEAR(std::abs(rho.matrix()(0, 0)), 1.0, 1e-12);
    EXPECT_LT(rho.total_excitation(), 1e-12);
}

TEST(SteadyState, MatchesTwoLevelOracle) {
    for (double deph : {0.0, 1.0, 5.0}) {
        const auto model = single_model(33.0, 0.2, deph);
        for (double delta : {-60.0, 0.0, 17.0, 150.0}) {
            for (double rabi : {1.0, 20.0, 90.0}) {
                const auto L = build_liouvillian(model, DriveParams::uniform(1, rabi, kCenter + delta));
                const auto rho = steady_state(L);
                const double expected = oracle::two_level_population(
                    units::angular(delta), units::angular(rabi), units::angular(33.0), units::angular(deph));
                EXPECT_NEAR(rho.excited_population(0), expected, 1e-8) << deph << " " << delta << " " << rabi;
                EXPECT_LT(max_abs(L.apply(rho.matrix())), 1e-10 * max_abs(L.generator));
            }
        }
    }
}

TEST(SteadyState, IndependentDetunedEmitters) {
    const auto model = pair(33.0, 0.3, 0.0, 0.0, 2000.0, 0.0);
    const double rabi = 0.05 * 33.0;
    const double laser = model.emitters[0].omega + 10.0;
    const auto rho = steady_state(build_liouvillian(model, DriveParams::uniform(2, rabi, laser)));
    for (std::size_t i = 0; i < 2; ++i) {
        const double expected = oracle::two_level_population(units::angular(laser - model.emitters[i].omega),
                                                             units::angular(rabi), units::angular(33.0), 0.0);
        EXPECT_NEAR(rho.excited_population(i), expected, 1e-8);
    }
}

TEST(Propagate, ExcitedEmitterDecaysExponentially) {
    const auto model = single_model(33.0, 0.3, 0.0);
    const auto L = build_liouvillian(model, DriveParams::uniform(1, 0.0, kCenter));
    CVector psi = CVector::Zero(2);
    psi(1) = 1.0;
    const double t = units::lifetime_ns(33.0);
    const std::vector<double> times{t};
    for (auto method : {PropagationMethod::Exponential, PropagationMethod::Ode}) {
        const auto out = propagate(L, DensityOperator::pure(psi), times, method);
        EXPECT_NEAR(out[0].excited_population(0) / std::exp(-1.0), 1.0, 1e-8);
    }
}

TEST(Propagate, ExponentialAndOdeAgree) {
    const auto model = pair(33.0, 0.11, 1.0, 1020.0, 2600.0);
    const auto L = build_liouvillian(model, DriveParams::uniform(2, 50.0, kCenter - 900.0));
    const DensityOperator rho0(random_density(4, 9));
    std::vector<double> times;
    for (int k = 1; k <= 20; ++k) times.push_back(0.37 * k);
    const auto a = propagate(L, rho0, times, PropagationMethod::Exponential);
    const auto b = propagate(L, rho0, times, PropagationMethod::Ode);
    for (std::size_t k = 0; k < times.size(); ++k) EXPECT_LT(max_abs(a[k].matrix() - b[k].matrix()), 1e-8);
}

TEST(Propagate, ApproachesSteadyState) {
    const auto model = pair(33.0, 0.11, 1.0, 1020.0, 2600.0);
    const auto L = build_liouvillian(model, DriveParams::uniform(2, 40.0, kCenter + 1652.4));
    const auto ss = steady_state(L);
    const std::vector<double> times{50.0 * units::lifetime_ns(33.0)};
    const auto out = propagate(L, DensityOperator::ground(2), times);
    EXPECT_LT(max_abs(out[0].matrix() - ss.matrix()), 1e-6);
}

TEST(Propagate, SymmetricStateDecaysWithEnhancedRate) {
    const double alpha = 0.11;
    const auto model = pair(33.0, alpha, 0.0, 300.0, 0.0);
    const auto L = build_liouvillian(model, DriveParams::uniform(2, 0.0, kCenter));
    CVector psi = CVector::Zero(4);
    psi(1) = psi(2) = 1.0 / std::sqrt(2.0);
    std::vector<double> times{1.0, 3.0, 7.0};
    const auto out = propagate(L, DensityOperator::pure(psi), times);
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double expected = std::exp(-units::angular(33.0 * (1.0 + alpha)) * units::ns_to_us(times[k]));
        EXPECT_NEAR(out[k].total_excitation() / expected, 1.0, 1e-8);
    }
}

TEST(Propagate, RejectsUnsortedTimes) {
    const auto model = single_model(33.0, 0.3, 0.0);
    const auto L = build_liouvillian(model, DriveParams::uniform(1, 0.0, kCenter));
    const std::vector<double> times{2.0, 1.0};
    EXPECT_THROW(propagate(L, DensityOperator::ground(1), times), Error);
}

TEST(Spectrum, DressedDecayRatesWithoutDephasing) {
    const auto model = pair(33.0, 0.11, 0.0, 1020.0, 2600.0);
    const auto modes = eigenmodes(model.emitters[0].omega, model.emitters[1].omega, 1020.0, model);
    const auto ev = generator_eigenvalues(build_liouvillian(model, DriveParams::uniform(2, 0.0, kCenter)));
    for (double g : {modes.gamma_plus, modes.gamma_minus}) {
        bool found = false;
        for (const auto& z : ev)
            if (std::abs(z.imag()) < 1e-6 && std::abs(-z.real() / units::angular(g) - 1.0) < 0.01) found = true;
        EXPECT_TRUE(found) << g;
    }
}

TEST(Spectrum, SingleExcitationSectorWithDephasing) {
    for (double deph : {0.0, 1.0, 4.0}) {
        const auto model = pair(33.0, 0.11, deph, 1020.0, 2600.0);
        const auto ev = generator_eigenvalues(build_liouvillian(model, DriveParams::uniform(2, 0.0, kCenter)));
        const auto sector = oracle::single_excitation_sector(-1300.0, 1300.0, 1020.0, 33.0, 3.63, deph);
        for (const auto& want : sector) {
            double best = 1e300;
            for (const auto& z : ev) best = std::min(best, std::abs(z - want));
            EXPECT_LT(best, 1e-8 * std::abs(want)) << deph << " " << want;
        }
    }
}

TEST(Correlation, SingleEmitterAntibunches) {
    const auto model = single_model(33.0, 0.3, 0.0);
    const std::vector<double> taus{0.0, 200.0};
    const auto trace = g2_curve(model, DriveParams::uniform(1, 0.05 * 33.0, kCenter), taus);
    EXPECT_LT(trace.g2[0], 1e-8);
    const auto L = build_liouvillian(model, DriveParams::uniform(1, 0.05 * 33.0, kCenter));
    const auto ss = steady_state(L);
    const auto c = sideband_collapse_ops(model);
    const auto m = sideband_measure_ops(model);
    const auto raw = regression_correlation(L, ss, c, m, taus);
    EXPECT_LT(std::abs(raw[0]), 1e-10 * raw[1]);
}

TEST(Correlation, ResonanceFluorescenceOracle) {
    const double gamma0 = 33.0;
    const double rabi = 5.0 * gamma0;
    const auto model = single_model(gamma0, 0.3, 0.0);
    const double gamma = units::angular(gamma0);
    std::vector<double> taus;
    const double tau_max = 20.0 / gamma * 1e3;
    for (int k = 0; k <= 400; ++k) taus.push_back(tau_max * k / 400.0);
    const auto trace = g2_curve(model, DriveParams::uniform(1, rabi, kCenter), taus);
    double worst = 0.0;
    for (std::size_t k = 0; k < taus.size(); ++k) {
        const double expected = oracle::resonance_fluorescence_g2(units::ns_to_us(taus[k]), units::angular(rabi), gamma);
        worst = std::max(worst, std::abs(trace.g2[k] - expected));
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(Correlation, TwoIndependentEmittersHalfBunching) {
    const auto model = pair(33.0, 0.3, 0.0, 0.0, 0.0, 0.0);
    const auto drive = DriveParams::uniform(2, 0.05 * 33.0, kCenter);
    const std::vector<double> taus{0.0};
    EXPECT_NEAR(g2_curve(model, drive, taus).g2[0], 0.5, 1e-6);

    // Brute force on the product space: <:I^2:> / <I>^2 with I = sum_i n_i.
    const auto ss = steady_state(build_liouvillian(model, drive));
    const CMatrix s0 = lowering_operator(0, 2), s1 = lowering_operator(1, 2);
    double num = 0.0, den = 0.0;
    for (const CMatrix* a : {&s0, &s1}) {
        den += ss.expectation(a->adjoint() * *a);
        for (const CMatrix* b : {&s0, &s1}) num += ss.expectation(a->adjoint() * b->adjoint() * *b * *a);
    }
    EXPECT_NEAR(num / (den * den), 0.5, 1e-6);
}

TEST(Correlation, DecorrelatesAtLongDelay) {
    const std::vector<double> taus{100.0 / units::angular(33.0) * 1e3};
    const auto single = single_model(33.0, 0.3, 1.0);
    EXPECT_NEAR(g2_curve(single, DriveParams::uniform(1, 40.0, kCenter + 10.0), taus).g2[0], 1.0, 1e-4);
    const auto h = pair(33.0, 0.11, 1.0, 1020.0, 2600.0);
    EXPECT_NEAR(g2_curve(h, DriveParams::uniform(2, 121.2, kCenter + 1652.4), taus).g2[0], 1.0, 1e-4);
    const auto j = pair(37.0, 0.135, 1.0, -116.0, 0.0);
    EXPECT_NEAR(g2_curve(j, DriveParams::uniform(2, 30.0, kCenter - 116.0), taus).g2[0], 1.0, 1e-4);
}
