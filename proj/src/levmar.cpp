#include "coop/levmar.hpp"

#include "coop/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coop {

std::string_view to_string(LmStatus status) {
    switch (status) {
        case LmStatus::Converged: return "converged";
        case LmStatus::MaxIterations: return "max_iterations";
    }
    return "unknown";
}

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    return x.cwiseMax(lo).cwiseMin(hi);
}

double sum_sq(const Eigen::VectorXd& r) {
    const double s = r.squaredNorm();
    return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
}

// Zero the gradient components that point out of the box at an active bound.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& g, const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi) {
    Eigen::VectorXd pg = g;
    for (Eigen::Index k = 0; k < g.size(); ++k) {
        if (x(k) <= lo(k) && g(k) > 0.0) pg(k) = 0.0;
        if (x(k) >= hi(k) && g(k) < 0.0) pg(k) = 0.0;
    }
    return pg;
}

}  // namespace

Eigen::MatrixXd numeric_jacobian(const ResidualFn& residuals, const Eigen::VectorXd& x, const Eigen::VectorXd& r0,
                                 const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                 const LmOptions& options) {
    Eigen::MatrixXd jac(r0.size(), x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        double h = options.jac_step * std::max(std::abs(x(k)), options.jac_floor);
        if (x(k) + h > upper(k)) {
            if (x(k) - h >= lower(k))
                h = -h;
            else
                h = (upper(k) - x(k) >= x(k) - lower(k)) ? upper(k) - x(k) : lower(k) - x(k);
        }
        if (h == 0.0) {
            jac.col(k).setZero();
            continue;
        }
        Eigen::VectorXd xp = x;
        xp(k) += h;
        const Eigen::VectorXd rp = residuals(xp);
        if (rp.size() != r0.size()) throw ShapeError("residual length changed between evaluations");
        jac.col(k) = (rp - r0) / (xp(k) - x(k));
    }
    return jac;
}

LmResult levenberg_marquardt(const ResidualFn& residuals, const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, const LmOptions& options) {
    const Eigen::Index n = x0.size();
    if (lower.size() != n || upper.size() != n) throw ShapeError("bounds do not match the parameter vector");
    if ((lower.array() > upper.array()).any()) throw FitError("lower bound exceeds upper bound");

    LmResult res;
    res.x = project(x0, lower, upper);
    res.residuals = residuals(res.x);
    res.evaluations = 1;
    res.chi2 = sum_sq(res.residuals);
    if (!std::isfinite(res.chi2)) throw FitError("residuals are not finite at the initial point");

    double lambda = options.initial_lambda;
    bool done = false;
    while (!done && res.iterations < options.max_iterations) {
        ++res.iterations;
        const Eigen::MatrixXd jac = numeric_jacobian(residuals, res.x, res.residuals, lower, upper, options);
        res.evaluations += static_cast<int>(n);
        const Eigen::MatrixXd a = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * res.residuals;

        const Eigen::VectorXd pg = projected_gradient(g, res.x, lower, upper);
        if (res.chi2 == 0.0 || pg.cwiseAbs().maxCoeff() <= options.gtol * std::max(res.chi2, 1e-300)) {
            res.status = LmStatus::Converged;
            break;
        }

        Eigen::VectorXd diag = a.diagonal();
        const double dmax = std::max(diag.maxCoeff(), 1e-300);
        diag = diag.cwiseMax(1e-12 * dmax);

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd damped = a;
            damped.diagonal() += lambda * diag;
            const Eigen::VectorXd step = damped.ldlt().solve(-g);
            const Eigen::VectorXd x_new = project(res.x + step, lower, upper);
            Eigen::VectorXd r_new;
            double chi2_new = std::numeric_limits<double>::infinity();
            if (x_new != res.x) {
                r_new = residuals(x_new);
                ++res.evaluations;
                chi2_new = sum_sq(r_new);
            }
            if (chi2_new < res.chi2) {
                const double drop = res.chi2 - chi2_new;
                const double dx = (x_new - res.x).norm();
                const bool small_f = drop <= options.ftol * res.chi2;
                const bool small_x = dx <= options.xtol * (res.x.norm() + options.xtol);
                res.x = x_new;
                res.residuals = std::move(r_new);
                res.chi2 = chi2_new;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (small_f || small_x) {
                    res.status = LmStatus::Converged;
                    done = true;
                }
            } else {
                lambda *= 10.0;
                if (lambda > 1e16) {
                    // No descent even along the steepest-descent limit: numerically stationary.
                    res.status = LmStatus::Converged;
                    done = true;
                    break;
                }
            }
        }
    }

    res.jacobian = numeric_jacobian(residuals, res.x, res.residuals, lower, upper, options);
    res.evaluations += static_cast<int>(n);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(res.jacobian, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv.size() < n || sv(0) == 0.0 || sv(sv.size() - 1) < options.rank_tol * sv(0)) {
        res.singular = true;
    } else {
        const Eigen::MatrixXd& v = svd.matrixV();
        res.covariance = v * sv.cwiseAbs2().cwiseInverse().asDiagonal() * v.transpose();
    }
    return res;
}

}  // namespace coop
