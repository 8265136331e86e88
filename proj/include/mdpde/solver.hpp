#pragma once

// Minimum DPD fitting: damped Newton on H_n with backtracking line search,
// and warm-started continuation over a path of alphas.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mdpde/asymptotics.hpp"
#include "mdpde/errors.hpp"
#include "mdpde/families.hpp"
#include "mdpde/model.hpp"
#include "mdpde/objective.hpp"

namespace mdpde {

struct SolverOptions {
    int max_iter = 200;
    double grad_tol = 1e-8;
    double step_tol = 1e-10;
    bool cold_start = false;
    /// When false, a non-converged fit is returned with converged = false
    /// instead of throwing ConvergenceError.
    bool throw_on_failure = true;
    /// A bounded-support fit whose largest |eta| exceeds this has run off to
    /// a separating direction and is reported as not converged.
    double max_abs_eta = 500.0;
    OmegaConvention omega = OmegaConvention::Standard;
    PoissonSeriesPolicy series{};
};

enum class StartSource { ColdStart, WarmStart };

enum class StepKind { Newton, Scoring, Gradient };

struct FitResult {
    double alpha = 0.0;
    Eigen::VectorXd beta;
    std::optional<double> phi;
    double objective = 0.0;
    double grad_norm = 0.0;
    Eigen::MatrixXd vcov;  // AV / N; empty if inference failed
    Eigen::VectorXd se;
    std::string inference_error;
    double psi_rcond = 0.0;
    int iterations = 0;
    bool converged = false;
    StartSource start_source = StartSource::ColdStart;
    std::optional<double> warm_from;
    std::vector<IterationRecord> trace;

    /// Packed parameter vector (beta, [phi]).
    Eigen::VectorXd theta() const {
        Eigen::VectorXd t(beta.size() + (phi ? 1 : 0));
        t.head(beta.size()) = beta;
        if (phi) t(beta.size()) = *phi;
        return t;
    }
    bool has_inference() const { return vcov.size() > 0; }
};

namespace detail {

/// One step of the textbook GLM start: regress the working response built from
/// a shrunken mean on X with IRLS weights.
inline Eigen::VectorXd glm_start(const ModelSpec& spec) {
    const auto n = spec.n();
    Eigen::VectorXd z(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto fam = spec.family.kind == FamilyKind::Binomial
                             ? spec.family.with_trials(spec.trials[static_cast<std::size_t>(i)])
                             : spec.family;
        const double y = spec.y(i);
        double mu = y;
        switch (fam.kind) {
            case FamilyKind::Poisson: mu = y + 0.1; break;
            case FamilyKind::Bernoulli: mu = (y + 0.5) / 2.0; break;
            case FamilyKind::Binomial: mu = fam.trials * (y + 0.5) / (fam.trials + 1.0); break;
            case FamilyKind::Gaussian: break;
        }
        const double eta = link(fam, mu);
        const double gd = link_derivative(fam, mu);
        const double var = variance_function(fam, eta);
        z(i) = eta + (y - mu) * gd;
        w(i) = 1.0 / (gd * gd * var);
    }
    const Eigen::MatrixXd xtw = spec.X.transpose() * w.asDiagonal();
    return (xtw * spec.X).ldlt().solve(xtw * z);
}

inline Eigen::VectorXd initial_theta(const ModelSpec& spec) {
    Eigen::VectorXd theta(spec.dim());
    const Eigen::VectorXd beta = glm_start(spec);
    theta.head(spec.p()) = beta;
    if (spec.scale_free()) {
        const Eigen::VectorXd r = spec.y - spec.X * beta;
        theta(spec.p()) = std::max(r.squaredNorm() / static_cast<double>(spec.n()), 1e-8);
    }
    return theta;
}

inline double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

inline double safe_objective(const ModelSpec& spec, const Eigen::VectorXd& theta, double alpha,
                             const PoissonSeriesPolicy& policy) {
    try {
        const double h = objective(spec, theta, alpha, policy);
        return std::isfinite(h) ? h : std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
        return std::numeric_limits<double>::infinity();
    }
}

inline void attach_inference(const ModelSpec& spec, double alpha, const SolverOptions& opt, FitResult& r) {
    try {
        const auto s = sandwich(spec, r.theta(), alpha, opt.omega, opt.series);
        r.vcov = s.av / total_weight(spec);
        r.se = r.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
        r.psi_rcond = s.psi_rcond;
    } catch (const InferenceError& e) {
        r.inference_error = e.what();
    } catch (const UnsupportedOperation& e) {
        r.inference_error = e.what();
    }
}

}  // namespace detail

/// Solves the MDPDE estimating equations at one alpha from the given start
/// (or the default start when none is given).
inline FitResult fit_from(const ModelSpec& spec, double alpha, const Eigen::VectorXd& start,
                          const SolverOptions& opt = {}) {
    detail::require_alpha(alpha);
    if (opt.max_iter < 1 || !(opt.grad_tol > 0.0) || !(opt.step_tol > 0.0) || !(opt.max_abs_eta > 0.0)) {
        throw InputError("invalid solver options");
    }
    Eigen::VectorXd theta = start;
    FitResult r;
    r.alpha = alpha;
    const auto p = spec.p();
    double last_step = std::numeric_limits<double>::infinity();
    bool converged = false;
    bool diverging = false;
    Evaluation ev;
    int iter = 0;

    for (;; ++iter) {
        ev = evaluate(spec, theta, alpha, EvalLevel::Jacobian, opt.series);
        const double gnorm = detail::inf_norm(ev.estimating);
        const double gtol = opt.grad_tol * (1.0 + std::abs(ev.objective));
        r.grad_norm = gnorm;
        if (gnorm < gtol && last_step < opt.step_tol) {
            converged = true;
            break;
        }
        if (iter >= opt.max_iter) break;

        // Search directions, best first.
        std::vector<Eigen::VectorXd> dirs;
        {
            Eigen::LLT<Eigen::MatrixXd> llt(ev.jacobian);
            if (llt.info() == Eigen::Success) {
                Eigen::VectorXd d = -llt.solve(ev.estimating);
                if (d.allFinite()) dirs.push_back(d);
            }
        }
        if (dirs.empty()) {
            try {
                const auto s = sandwich(spec, theta, alpha, OmegaConvention::Standard, opt.series);
                Eigen::LLT<Eigen::MatrixXd> llt(s.psi);
                if (llt.info() == Eigen::Success) {
                    Eigen::VectorXd d = -llt.solve(ev.estimating);
                    if (d.allFinite()) dirs.push_back(d);
                }
            } catch (const Error&) {
            }
        }
        const bool second_order = !dirs.empty();
        dirs.push_back(-ev.estimating);

        // Tiny Newton step at a point that already satisfies the gradient test.
        if (second_order && gnorm < gtol && detail::inf_norm(dirs.front()) < opt.step_tol) {
            theta += dirs.front();
            last_step = detail::inf_norm(dirs.front());
            continue;
        }

        const double h0 = ev.objective;
        const double u0 = ev.estimating.norm();
        bool moved = false;
        IterationRecord rec{iter + 1, h0, gnorm, 0.0, 0.0};
        for (std::size_t di = 0; di < dirs.size(); ++di) {
            Eigen::VectorXd d = dirs[di];
            const bool gradient_step = di + 1 == dirs.size();
            // Keep the scale positive.
            if (spec.scale_free() && theta(p) + d(p) <= 0.0) d *= 0.9 * theta(p) / (-d(p));
            const double slope = (1.0 + alpha) * ev.estimating.dot(d);
            if (!(slope < 0.0)) continue;
            double t = 1.0;
            for (int k = 0; k < 60; ++k, t *= 0.5) {
                const Eigen::VectorXd cand = theta + t * d;
                const double h = detail::safe_objective(spec, cand, alpha, opt.series);
                bool ok = h <= h0 + 1e-4 * t * slope;
                const double dh = std::abs(h - h0);
                if (!ok && std::isfinite(h) && dh <= 1e-9 * (1.0 + std::abs(h0))) {
                    // Objective flat to rounding: accept if the equations improve,
                    // by half for a second-order step above the last few digits.
                    const double un = estimating_function(spec, cand, alpha, opt.series).norm();
                    ok = dh <= 1e-13 * (1.0 + std::abs(h0)) ? un < u0 : !gradient_step && un < 0.5 * u0;
                }
                if (ok) {
                    last_step = gradient_step ? std::numeric_limits<double>::infinity() : detail::inf_norm(d);
                    rec.objective = h;
                    rec.step_norm = t * detail::inf_norm(d);
                    rec.step_length = t;
                    theta = cand;
                    moved = true;
                    break;
                }
            }
            if (moved) break;
        }
        r.trace.push_back(rec);
        if (!moved) {
            // No descent possible; converged only if the equations are solved
            // and the Newton correction is negligible.
            if (gnorm < gtol && second_order && detail::inf_norm(dirs.front()) < 1e-6 * (1.0 + detail::inf_norm(theta))) {
                converged = true;
            } else if (gnorm < gtol && spec.family.bounded_support()) {
                diverging = true;
            }
            break;
        }
    }

    const auto par = unpack(spec, theta);
    r.beta = par.beta;
    if (spec.scale_free()) r.phi = par.phi;
    r.objective = ev.objective;
    r.iterations = iter;
    bool diverged = diverging;
    if (spec.family.bounded_support()) {
        const Eigen::VectorXd abs_eta = (spec.X * r.beta).cwiseAbs();
        if (converged) diverged = !(abs_eta.maxCoeff() <= opt.max_abs_eta);
        // Stalled on a flat objective with saturated fitted probabilities: a separating direction.
        if (!converged && r.grad_norm < opt.grad_tol * (1.0 + std::abs(r.objective)) && abs_eta.maxCoeff() > 30.0) {
            diverged = true;
        }
        converged = converged && !diverged;
    }
    r.converged = converged;
    if (!converged && opt.throw_on_failure) {
        std::ostringstream os;
        if (diverged) {
            os << "MDPDE estimates diverge at alpha = " << alpha << " (separated fit, max |eta| = "
               << (spec.X * r.beta).cwiseAbs().maxCoeff() << ")";
        } else {
            os << "MDPDE solver did not converge at alpha = " << alpha << " (gradient norm " << r.grad_norm << ")";
        }
        throw ConvergenceError(os.str(), r.trace, r.grad_norm);
    }
    detail::attach_inference(spec, alpha, opt, r);
    return r;
}

/// Fit at one alpha.  alpha = 0 starts from the GLM start; alpha > 0 starts
/// from the maximum likelihood fit.
inline FitResult fit(const ModelSpec& spec, double alpha, const SolverOptions& opt = {}) {
    validate(spec);
    detail::require_alpha(alpha);
    Eigen::VectorXd start = detail::initial_theta(spec);
    if (alpha > 0.0) {
        SolverOptions mle_opt = opt;
        mle_opt.throw_on_failure = true;
        start = fit_from(spec, 0.0, start, mle_opt).theta();
    }
    auto r = fit_from(spec, alpha, start, opt);
    r.start_source = StartSource::ColdStart;
    return r;
}

/// Sequential fits over ascending alphas, each warm-started from the previous
/// optimum (unless cold_start is set).
inline std::vector<FitResult> fit_path(const ModelSpec& spec, const std::vector<double>& alphas,
                                       const SolverOptions& opt = {}) {
    validate(spec);
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        detail::require_alpha(alphas[k]);
        if (k > 0 && alphas[k] < alphas[k - 1]) throw InputError("alpha path must be ascending");
    }
    std::vector<FitResult> out;
    out.reserve(alphas.size());
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        try {
            if (k == 0 || opt.cold_start) {
                out.push_back(fit(spec, alphas[k], opt));
            } else {
                const auto& prev = out.back();
                auto r = fit_from(spec, alphas[k], prev.theta(), opt);
                r.start_source = StartSource::WarmStart;
                r.warm_from = prev.alpha;
                out.push_back(std::move(r));
            }
        } catch (const ConvergenceError& e) {
            std::ostringstream os;
            os << "fit path failed at alpha = " << alphas[k] << ": " << e.what();
            throw ConvergenceError(os.str(), e.trace(), e.achieved());
        }
    }
    return out;
}

inline std::vector<std::string> parameter_names(const ModelSpec& spec) {
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < spec.dim(); ++j) names.push_back(spec.coef_name(j));
    return names;
}

/// Wald table of a fit, t reference with rows - p degrees of freedom by default.
inline WaldTable wald_table(const ModelSpec& spec, const FitResult& fit,
                            ReferenceDistribution ref = ReferenceDistribution::StudentT) {
    if (!fit.has_inference()) throw InferenceError("fit has no covariance: " + fit.inference_error);
    return wald_table(parameter_names(spec), fit.theta(), fit.se, static_cast<double>(spec.n() - spec.p()), ref);
}

}  // namespace mdpde
