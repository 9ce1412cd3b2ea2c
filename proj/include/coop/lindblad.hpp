#pragma once

#include "coop/model.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace coop {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

// Basis index bit i set <=> emitter i excited; index 0 is |g...g>.
std::size_t hilbert_dim(std::size_t n_emitters);

CMatrix lowering_operator(std::size_t site, std::size_t n_emitters);
CMatrix number_operator(std::size_t site, std::size_t n_emitters);

class DensityOperator {
public:
    DensityOperator() = default;
    explicit DensityOperator(CMatrix matrix);

    static DensityOperator ground(std::size_t n_emitters);
    static DensityOperator pure(const CVector& state);

    const CMatrix& matrix() const noexcept { return matrix_; }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }
    std::size_t emitters() const noexcept { return emitters_; }

    double expectation(const CMatrix& op) const;
    double excited_population(std::size_t site) const;
    double total_excitation() const;

    // Throws NumericalError if Hermiticity, trace or positivity is violated.
    void validate(double tol = 1e-10, double positivity_tol = 1e-8) const;

private:
    CMatrix matrix_;
    std::size_t emitters_{0};
};

// Column-stacking vectorisation: vec(A rho B) = (B^T kron A) vec(rho).
// The generator is in angular units (rad/us) in the frame rotating at frame_freq.
struct Liouvillian {
    CMatrix generator;
    double frame_freq{0.0};
    std::size_t emitters{0};

    std::size_t hilbert_dim() const noexcept { return std::size_t{1} << emitters; }

    CMatrix apply(const CMatrix& rho) const;
};

inline constexpr std::size_t kMaxEmitters = 10;
inline constexpr std::size_t kMaxSteadyStateDim = 4096;

Liouvillian build_liouvillian(const SystemModel& model, const DriveParams& drive);

DensityOperator steady_state(const Liouvillian& L);

enum class PropagationMethod {
    Exponential,  // exp(L dt) by scaling and squaring, cached per step size
    Ode,          // adaptive Dormand-Prince
};

std::vector<DensityOperator> propagate(const Liouvillian& L, const DensityOperator& rho0,
                                       std::span<const double> times_ns,
                                       PropagationMethod method = PropagationMethod::Exponential);

// Evolves an arbitrary (not necessarily physical) operator; used by the regression theorem.
std::vector<CMatrix> evolve_operator(const Liouvillian& L, const CMatrix& x0, std::span<const double> times_ns,
                                     PropagationMethod method = PropagationMethod::Exponential);

// G2(tau) = sum_{i,j} Tr[m_j e^{L tau}(c_i rho c_i^dag)].
std::vector<double> regression_correlation(const Liouvillian& L, const DensityOperator& rho_ss,
                                           std::span<const CMatrix> collapse_ops,
                                           std::span<const CMatrix> measure_ops,
                                           std::span<const double> taus_ns);

// Largest real part over the generator spectrum (rad/us).
double spectral_abscissa(const Liouvillian& L);

Eigen::VectorXcd generator_eigenvalues(const Liouvillian& L);

// Sideband detection: collapse sqrt((1-alpha) Gamma0) sigma_i and intensity
// (1-alpha) Gamma0 n_i in angular units, one per emitter, summed incoherently.
std::vector<CMatrix> sideband_collapse_ops(const SystemModel& model);
std::vector<CMatrix> sideband_measure_ops(const SystemModel& model);

}  // namespace coop
