#pragma once

// The empirical DPD objective H_n, its estimating function, and the
// Jacobian of the estimating function.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "mdpde/errors.hpp"
#include "mdpde/families.hpp"
#include "mdpde/model.hpp"

namespace mdpde {

enum class EvalLevel { Objective, Gradient, Jacobian };

struct Evaluation {
    double objective = 0.0;
    Eigen::VectorXd estimating;  // empty below EvalLevel::Gradient
    Eigen::MatrixXd jacobian;    // empty below EvalLevel::Jacobian
};

namespace detail {

inline double log_add_exp(double a, double b) {
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

inline void require_params(const ModelSpec& spec, const Eigen::VectorXd& theta) {
    if (theta.size() != spec.dim()) throw InputError("parameter vector has the wrong length");
    if (!theta.allFinite()) throw DomainError("non-finite parameter");
    if (spec.scale_free()) require_scale(theta(spec.p()));
}

inline Evaluation evaluate_core(const ModelSpec& spec, const Eigen::VectorXd& theta, double alpha,
                                EvalLevel level, const PoissonSeriesPolicy& policy) {
    require_alpha(alpha);
    require_params(spec, theta);
    const auto par = unpack(spec, theta);
    const auto p = spec.p();
    const auto d = spec.dim();
    const bool want_grad = level != EvalLevel::Objective;
    const bool want_jac = level == EvalLevel::Jacobian && !spec.scale_free();
    const bool scale = spec.scale_free();

    Evaluation ev;
    double h = 0.0;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(want_grad ? d : 0);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(want_jac ? p : 0, want_jac ? p : 0);
    const Eigen::VectorXd eta = spec.X * par.beta;

    for (Eigen::Index i = 0; i < spec.n(); ++i) {
        const auto obs = observation_terms(spec, i);
        const auto& fam = obs.family;
        const double e = eta(i);
        require_finite(e, "linear predictor");
        const double a = dispersion(fam, par.phi);
        const double v = variance_function(fam, e) / a;
        const double mu = mean_value(fam, e);

        if (alpha == 0.0) {
            double s1 = 0.0, s2 = 0.0, cw = 0.0;
            for (int k = 0; k < obs.npoints; ++k) {
                const auto [y, c] = obs.points[static_cast<std::size_t>(k)];
                if (c == 0.0) continue;
                h -= c * log_density(fam, y, e, par.phi);
                if (want_grad) {
                    s1 += c * (y - mu) / a;
                    if (scale) s2 += c * k2(fam, y, e, par.phi);
                }
                cw += c;
            }
            if (want_grad) {
                u.head(p).noalias() -= s1 * spec.X.row(i).transpose();
                if (scale) u(p) -= s2;
            }
            if (want_jac) jac.noalias() += cw * v * spec.X.row(i).transpose() * spec.X.row(i);
            continue;
        }

        const auto g = gamma_set(fam, e, par.phi, alpha, policy);
        h += obs.weight * g.integral;
        double s1 = 0.0, s2 = 0.0, sj = 0.0;
        for (int k = 0; k < obs.npoints; ++k) {
            const auto [y, c] = obs.points[static_cast<std::size_t>(k)];
            if (c == 0.0) continue;
            const double fa = std::exp(alpha * log_density(fam, y, e, par.phi));
            h -= (1.0 + 1.0 / alpha) * c * fa;
            if (want_grad) {
                const double kk = (y - mu) / a;
                s1 += c * kk * fa;
                if (scale) s2 += c * k2(fam, y, e, par.phi) * fa;
                if (want_jac) sj += c * fa * (-v + alpha * kk * kk);
            }
        }
        if (want_grad) {
            u.head(p).noalias() += (obs.weight * g.gamma1 - s1) * spec.X.row(i).transpose();
            if (scale) u(p) += obs.weight * g.gamma2 - s2;
        }
        if (want_jac) {
            const double w = obs.weight * (-v * g.integral + (1.0 + alpha) * g.gamma11) - sj;
            jac.noalias() += w * spec.X.row(i).transpose() * spec.X.row(i);
        }
    }
    const double total = total_weight(spec);
    ev.objective = h / total;
    if (want_grad) ev.estimating = u / total;
    if (want_jac) ev.jacobian = jac / total;
    return ev;
}

}  // namespace detail

/// H_n at the packed parameter vector (beta, [phi]).  At alpha = 0 this is
/// the negative mean log-likelihood.
inline double objective(const ModelSpec& spec, const Eigen::VectorXd& theta, double alpha,
                        const PoissonSeriesPolicy& policy = {}) {
    return detail::evaluate_core(spec, theta, alpha, EvalLevel::Objective, policy).objective;
}

/// The estimating function (gradient of H_n divided by 1 + alpha).
inline Eigen::VectorXd estimating_function(const ModelSpec& spec, const Eigen::VectorXd& theta, double alpha,
                                           const PoissonSeriesPolicy& policy = {}) {
    return detail::evaluate_core(spec, theta, alpha, EvalLevel::Gradient, policy).estimating;
}

/// Objective, estimating function and its Jacobian in one pass.  The Jacobian is
/// analytic for fixed-scale families and a central difference otherwise.
inline Evaluation evaluate(const ModelSpec& spec, const Eigen::VectorXd& theta, double alpha,
                           EvalLevel level = EvalLevel::Jacobian, const PoissonSeriesPolicy& policy = {}) {
    auto ev = detail::evaluate_core(spec, theta, alpha, level, policy);
    if (level == EvalLevel::Jacobian && spec.scale_free()) {
        const auto d = spec.dim();
        ev.jacobian.resize(d, d);
        for (Eigen::Index j = 0; j < d; ++j) {
            double step = 1e-6 * (1.0 + std::abs(theta(j)));
            if (j == spec.p()) step = std::min(step, 0.5 * theta(j));
            Eigen::VectorXd tp = theta, tm = theta;
            tp(j) += step;
            tm(j) -= step;
            ev.jacobian.col(j) = (estimating_function(spec, tp, alpha, policy) -
                                  estimating_function(spec, tm, alpha, policy)) /
                                 (2.0 * step);
        }
        ev.jacobian = 0.5 * (ev.jacobian + ev.jacobian.transpose()).eval();
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Family-specific written-out forms, used as cross-checks of the general code.

/// Logistic estimating function written with gamma1 and the Bernoulli f^alpha.
inline Eigen::VectorXd logistic_estimating_general(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                                   const Eigen::VectorXd& beta, double alpha) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double e = X.row(i).dot(beta);
        const double sp = detail::softplus(e);
        double gamma1 = 0.0;
        if (alpha > 0.0) {
            // e^eta (e^{alpha eta} - 1) / (1 + e^eta)^{2+alpha}
            const double mag = std::exp(e + std::log(std::abs(std::expm1(alpha * e))) - (2.0 + alpha) * sp);
            gamma1 = e > 0.0 ? mag : (e < 0.0 ? -mag : 0.0);
        }
        const double mu = detail::expit(e);
        const double fa = std::exp(alpha * e * y(i) - alpha * sp);
        u += (gamma1 - (y(i) - mu) * fa) * X.row(i).transpose();
    }
    return u / static_cast<double>(X.rows());
}

/// The same estimating function after algebraic simplification:
/// (1 - 2y) e^{eta (1 - y)} (e^{alpha eta} + e^eta) / (1 + e^eta)^{2+alpha}.
inline Eigen::VectorXd logistic_estimating_simplified(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                                      const Eigen::VectorXd& beta, double alpha) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double e = X.row(i).dot(beta);
        const double lw = e * (1.0 - y(i)) + detail::log_add_exp(alpha * e, e) - (2.0 + alpha) * detail::softplus(e);
        u += (1.0 - 2.0 * y(i)) * std::exp(lw) * X.row(i).transpose();
    }
    return u / static_cast<double>(X.rows());
}

/// Gaussian beta-equation when int f^{1+alpha} does not depend on the mean:
/// (1/n) sum (y - mu)/phi f(y)^alpha x, with the sign of the estimating function.
inline Eigen::VectorXd gaussian_simplified_estimating(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                                      const Eigen::VectorXd& beta, double phi, double alpha) {
    const auto fam = FamilyDescriptor::gaussian();
    Eigen::VectorXd u = Eigen::VectorXd::Zero(X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double e = X.row(i).dot(beta);
        const double fa = std::exp(alpha * log_density(fam, y(i), e, phi));
        u -= (y(i) - e) / phi * fa * X.row(i).transpose();
    }
    return u / static_cast<double>(X.rows());
}

}  // namespace mdpde
