#include "coop/lindblad.hpp"

#include "coop/errors.hpp"
#include "coop/units.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>
#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <string>

namespace coop {

namespace {

using cd = std::complex<double>;
constexpr cd kI{0.0, 1.0};

void check_times(std::span<const double> times) {
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (!(times[k] >= 0.0)) throw ShapeError("propagation times must be non-negative");
        if (k > 0 && times[k] < times[k - 1]) throw ShapeError("propagation times must be sorted");
    }
}

CVector vec(const CMatrix& m) { return Eigen::Map<const CVector>(m.data(), m.size()); }

CMatrix unvec(const CVector& v, Eigen::Index d) { return Eigen::Map<const CMatrix>(v.data(), d, d); }

std::vector<CVector> evolve_exponential(const CMatrix& gen, const CVector& v0, std::span<const double> times_ns) {
    std::map<double, CMatrix> cache;
    std::vector<CVector> out;
    out.reserve(times_ns.size());
    CVector v = v0;
    double t_prev = 0.0;
    for (double t : times_ns) {
        const double dt = t - t_prev;
        if (dt > 0.0) {
            auto it = cache.find(dt);
            if (it == cache.end()) {
                const CMatrix scaled = gen * cd(units::ns_to_us(dt), 0.0);
                it = cache.emplace(dt, CMatrix(scaled.exp())).first;
            }
            v = it->second * v;
        }
        out.push_back(v);
        t_prev = t;
    }
    return out;
}

std::vector<CVector> evolve_ode(const CMatrix& gen, const CVector& v0, std::span<const double> times_ns) {
    namespace odeint = boost::numeric::odeint;
    using State = std::vector<double>;
    const Eigen::Index n = v0.size();

    // Real/imaginary split keeps the stepper on plain doubles.
    State y(static_cast<std::size_t>(2 * n));
    for (Eigen::Index k = 0; k < n; ++k) {
        y[static_cast<std::size_t>(k)] = v0(k).real();
        y[static_cast<std::size_t>(k + n)] = v0(k).imag();
    }
    auto rhs = [&](const State& s, State& ds, double) {
        CVector z(n);
        for (Eigen::Index k = 0; k < n; ++k)
            z(k) = cd(s[static_cast<std::size_t>(k)], s[static_cast<std::size_t>(k + n)]);
        const CVector dz = gen * z;
        for (Eigen::Index k = 0; k < n; ++k) {
            ds[static_cast<std::size_t>(k)] = dz(k).real();
            ds[static_cast<std::size_t>(k + n)] = dz(k).imag();
        }
    };

    // integrate_times takes its first entry as the start time, so anchor at t = 0.
    std::vector<double> t_us{0.0};
    for (double t : times_ns) t_us.push_back(units::ns_to_us(t));
    bool skip_anchor = true;

    std::vector<CVector> out;
    out.reserve(times_ns.size());
    auto observer = [&](const State& s, double) {
        if (skip_anchor) {
            skip_anchor = false;
            return;
        }
        CVector z(n);
        for (Eigen::Index k = 0; k < n; ++k)
            z(k) = cd(s[static_cast<std::size_t>(k)], s[static_cast<std::size_t>(k + n)]);
        out.push_back(std::move(z));
    };
    if (times_ns.empty()) return out;

    auto stepper = odeint::make_dense_output(1e-13, 1e-11, odeint::runge_kutta_dopri5<State>());
    double dt0 = 1e-4 / std::max(1.0, gen.cwiseAbs().maxCoeff());
    try {
        odeint::integrate_times(stepper, rhs, y, t_us.begin(), t_us.end(), dt0, observer,
                                odeint::max_step_checker(10'000'000));
    } catch (const std::exception& e) {
        throw NumericalError(std::string("ODE integration failed: ") + e.what());
    }
    if (out.size() != times_ns.size()) throw NumericalError("ODE integration did not reach all output times");
    return out;
}

std::vector<CVector> evolve(const CMatrix& gen, const CVector& v0, std::span<const double> times_ns,
                            PropagationMethod method) {
    check_times(times_ns);
    return method == PropagationMethod::Exponential ? evolve_exponential(gen, v0, times_ns)
                                                    : evolve_ode(gen, v0, times_ns);
}

}  // namespace

std::size_t hilbert_dim(std::size_t n_emitters) { return std::size_t{1} << n_emitters; }

CMatrix lowering_operator(std::size_t site, std::size_t n_emitters) {
    const auto d = static_cast<Eigen::Index>(hilbert_dim(n_emitters));
    const Eigen::Index bit = Eigen::Index{1} << site;
    CMatrix op = CMatrix::Zero(d, d);
    for (Eigen::Index s = 0; s < d; ++s)
        if (s & bit) op(s & ~bit, s) = 1.0;
    return op;
}

CMatrix number_operator(std::size_t site, std::size_t n_emitters) {
    const auto d = static_cast<Eigen::Index>(hilbert_dim(n_emitters));
    const Eigen::Index bit = Eigen::Index{1} << site;
    CMatrix op = CMatrix::Zero(d, d);
    for (Eigen::Index s = 0; s < d; ++s)
        if (s & bit) op(s, s) = 1.0;
    return op;
}

DensityOperator::DensityOperator(CMatrix matrix) : matrix_(std::move(matrix)) {
    if (matrix_.rows() != matrix_.cols()) throw ShapeError("density operator must be square");
    const auto d = static_cast<std::size_t>(matrix_.rows());
    if (d == 0 || (d & (d - 1)) != 0) throw ShapeError("density operator dimension must be a power of two");
    while ((std::size_t{1} << emitters_) < d) ++emitters_;
}

DensityOperator DensityOperator::ground(std::size_t n_emitters) {
    const auto d = static_cast<Eigen::Index>(hilbert_dim(n_emitters));
    CMatrix m = CMatrix::Zero(d, d);
    m(0, 0) = 1.0;
    return DensityOperator(std::move(m));
}

DensityOperator DensityOperator::pure(const CVector& state) {
    const CVector psi = state / state.norm();
    return DensityOperator(psi * psi.adjoint());
}

double DensityOperator::expectation(const CMatrix& op) const { return (op * matrix_).trace().real(); }

double DensityOperator::excited_population(std::size_t site) const {
    const Eigen::Index bit = Eigen::Index{1} << site;
    double p = 0.0;
    for (Eigen::Index s = 0; s < matrix_.rows(); ++s)
        if (s & bit) p += matrix_(s, s).real();
    return p;
}

double DensityOperator::total_excitation() const {
    double p = 0.0;
    for (std::size_t i = 0; i < emitters_; ++i) p += excited_population(i);
    return p;
}

void DensityOperator::validate(double tol, double positivity_tol) const {
    const double herm = (matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff();
    if (herm > tol) throw NumericalError("density operator is not Hermitian (deviation " + std::to_string(herm) + ")");
    const double tr_err = std::abs(matrix_.trace() - cd(1.0, 0.0));
    if (tr_err > tol) throw NumericalError("density operator trace deviates from 1 by " + std::to_string(tr_err));
    const CMatrix h = 0.5 * (matrix_ + matrix_.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -positivity_tol)
        throw NumericalError("density operator has a negative eigenvalue");
}

CMatrix Liouvillian::apply(const CMatrix& rho) const {
    const auto d = static_cast<Eigen::Index>(hilbert_dim());
    if (rho.rows() != d || rho.cols() != d) throw ShapeError("operator does not match the Liouvillian dimension");
    return unvec(generator * vec(rho), d);
}

Liouvillian build_liouvillian(const SystemModel& model, const DriveParams& drive) {
    const std::size_t n = model.size();
    if (n > kMaxEmitters)
        throw CapacityError("dense Liouvillian supports at most " + std::to_string(kMaxEmitters) + " emitters");
    model.validate();
    drive.validate(n);

    const auto d = static_cast<Eigen::Index>(hilbert_dim(n));
    std::vector<CMatrix> sigma;
    std::vector<CMatrix> num;
    for (std::size_t i = 0; i < n; ++i) {
        sigma.push_back(lowering_operator(i, n));
        num.push_back(number_operator(i, n));
    }

    // Hamiltonian in the frame rotating at the laser frequency, rad/us.
    CMatrix h = CMatrix::Zero(d, d);
    for (std::size_t i = 0; i < n; ++i) {
        h += units::angular(model.emitters[i].omega - drive.laser_freq) * num[i];
        h += units::angular(0.5 * drive.rabi[i]) * (sigma[i] + sigma[i].adjoint());
        for (std::size_t j = 0; j < n; ++j) {
            const double jij = model.J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (i != j && jij != 0.0) h += units::angular(jij) * sigma[i].adjoint() * sigma[j];
        }
    }

    // Jump terms G_ij A_j rho A_i^dag plus the anticommutator folded into h_eff.
    CMatrix h_eff = h;
    CMatrix jumps = CMatrix::Zero(d * d, d * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double g = units::angular(model.gamma_coll(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            if (g == 0.0) continue;
            jumps += g * Eigen::kroneckerProduct(sigma[i].conjugate(), sigma[j]).eval();
            h_eff -= cd(0.0, 0.5 * g) * sigma[i].adjoint() * sigma[j];
        }
    }
    const double sideband = units::angular((1.0 - model.alpha) * model.gamma0);
    // Dephasing channel rate 2*gamma_phi gives coherence decay gamma_phi.
    const double dephase = 2.0 * units::angular(model.dephasing);
    for (std::size_t i = 0; i < n; ++i) {
        if (sideband > 0.0) {
            jumps += sideband * Eigen::kroneckerProduct(sigma[i].conjugate(), sigma[i]).eval();
            h_eff -= cd(0.0, 0.5 * sideband) * sigma[i].adjoint() * sigma[i];
        }
        if (dephase > 0.0) {
            jumps += dephase * Eigen::kroneckerProduct(num[i], num[i]).eval();
            h_eff -= cd(0.0, 0.5 * dephase) * num[i];
        }
    }

    const CMatrix id = CMatrix::Identity(d, d);
    Liouvillian L;
    L.emitters = n;
    L.frame_freq = drive.laser_freq;
    L.generator = -kI * Eigen::kroneckerProduct(id, h_eff).eval() +
                  kI * Eigen::kroneckerProduct(h_eff.conjugate(), id).eval() + jumps;
    return L;
}

DensityOperator steady_state(const Liouvillian& L) {
    const auto d = static_cast<Eigen::Index>(L.hilbert_dim());
    const Eigen::Index dd = d * d;
    if (L.generator.rows() != dd || L.generator.cols() != dd) throw ShapeError("generator has wrong shape");
    if (static_cast<std::size_t>(dd) > kMaxSteadyStateDim)
        throw CapacityError("steady-state solver supports generators up to 4096 x 4096");

    // Trace preservation makes the rows of L linearly dependent with weight one
    // on every diagonal element, so replacing the |0><0| row by the trace
    // functional leaves a system that is regular iff the kernel is 1-dimensional.
    CMatrix bordered = L.generator;
    bordered.row(0).setZero();
    for (Eigen::Index k = 0; k < d; ++k) bordered(0, k * d + k) = 1.0;
    CVector rhs = CVector::Zero(dd);
    rhs(0) = 1.0;

    Eigen::FullPivLU<CMatrix> lu(bordered);
    lu.setThreshold(1e-11);
    if (lu.rank() < dd)
        throw NonUniqueSteadyStateError("steady state is not unique (generator kernel dimension > 1)");
    const CVector x = lu.solve(rhs);

    CMatrix rho = unvec(x, d);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    rho /= rho.trace().real();
    return DensityOperator(std::move(rho));
}

std::vector<DensityOperator> propagate(const Liouvillian& L, const DensityOperator& rho0,
                                       std::span<const double> times_ns, PropagationMethod method) {
    auto mats = evolve_operator(L, rho0.matrix(), times_ns, method);
    std::vector<DensityOperator> out;
    out.reserve(mats.size());
    for (auto& m : mats) {
        m = 0.5 * (m + m.adjoint()).eval();
        out.emplace_back(std::move(m));
    }
    return out;
}

std::vector<CMatrix> evolve_operator(const Liouvillian& L, const CMatrix& x0, std::span<const double> times_ns,
                                     PropagationMethod method) {
    const auto d = static_cast<Eigen::Index>(L.hilbert_dim());
    if (x0.rows() != d || x0.cols() != d) throw ShapeError("initial operator does not match the Liouvillian");
    const auto vs = evolve(L.generator, vec(x0), times_ns, method);
    std::vector<CMatrix> out;
    out.reserve(vs.size());
    for (const auto& v : vs) out.push_back(unvec(v, d));
    return out;
}

std::vector<double> regression_correlation(const Liouvillian& L, const DensityOperator& rho_ss,
                                           std::span<const CMatrix> collapse_ops,
                                           std::span<const CMatrix> measure_ops,
                                           std::span<const double> taus_ns) {
    const auto d = static_cast<Eigen::Index>(L.hilbert_dim());
    if (rho_ss.matrix().rows() != d) throw ShapeError("steady state does not match the Liouvillian");
    auto check = [d](const CMatrix& op) {
        if (op.rows() != d || op.cols() != d) throw ShapeError("correlation operator has wrong dimension");
    };

    // Linearity lets the conditional states be summed before propagation.
    CMatrix conditioned = CMatrix::Zero(d, d);
    for (const auto& c : collapse_ops) {
        check(c);
        conditioned += c * rho_ss.matrix() * c.adjoint();
    }
    CMatrix intensity = CMatrix::Zero(d, d);
    for (const auto& m : measure_ops) {
        check(m);
        intensity += m;
    }

    const auto states = evolve_operator(L, conditioned, taus_ns);
    std::vector<double> g2;
    g2.reserve(states.size());
    for (const auto& x : states) g2.push_back((intensity * x).trace().real());
    return g2;
}

Eigen::VectorXcd generator_eigenvalues(const Liouvillian& L) {
    Eigen::ComplexEigenSolver<CMatrix> es(L.generator, false);
    if (es.info() != Eigen::Success) throw NumericalError("generator eigendecomposition failed");
    return es.eigenvalues();
}

double spectral_abscissa(const Liouvillian& L) { return generator_eigenvalues(L).real().maxCoeff(); }

std::vector<CMatrix> sideband_collapse_ops(const SystemModel& model) {
    const double amp = std::sqrt(units::angular((1.0 - model.alpha) * model.gamma0));
    std::vector<CMatrix> ops;
    for (std::size_t i = 0; i < model.size(); ++i) ops.push_back(amp * lowering_operator(i, model.size()));
    return ops;
}

std::vector<CMatrix> sideband_measure_ops(const SystemModel& model) {
    const double rate = units::angular((1.0 - model.alpha) * model.gamma0);
    std::vector<CMatrix> ops;
    for (std::size_t i = 0; i < model.size(); ++i) ops.push_back(rate * number_operator(i, model.size()));
    return ops;
}

}  // namespace coop
