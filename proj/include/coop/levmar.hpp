#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string_view>

namespace coop {

enum class LmStatus {
    Converged,
    MaxIterations,
};

std::string_view to_string(LmStatus status);

struct LmOptions {
    int max_iterations{200};
    double ftol{1e-10};      // relative chi2 reduction
    double xtol{1e-10};      // relative step size
    double gtol{1e-14};      // scaled gradient
    double jac_step{1e-4};   // forward-difference step, relative to max(|x|, jac_floor)
    double jac_floor{1e-2};
    double initial_lambda{1e-3};
    double rank_tol{1e-8};   // singular-value ratio below which J is flagged singular
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LmResult {
    Eigen::VectorXd x;
    Eigen::VectorXd residuals;
    Eigen::MatrixXd jacobian;
    Eigen::MatrixXd covariance;  // (J^T J)^-1 of the weighted residuals; empty if singular
    double chi2{0.0};
    LmStatus status{LmStatus::MaxIterations};
    int iterations{0};
    int evaluations{0};
    bool singular{false};
};

// Minimises |r(x)|^2 inside the box [lower, upper]; trial points are projected
// onto the box, and the Jacobian is taken by one-sided differences that stay inside it.
LmResult levenberg_marquardt(const ResidualFn& residuals, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const LmOptions& options = {});

Eigen::MatrixXd numeric_jacobian(const ResidualFn& residuals, const Eigen::VectorXd& x, const Eigen::VectorXd& r0,
                                 const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                 const LmOptions& options);

}  // namespace coop
