#pragma once

// Sandwich covariance of the MDPDE, Wald tables and relative efficiency.

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mdpde/errors.hpp"
#include "mdpde/families.hpp"
#include "mdpde/model.hpp"

namespace mdpde {

/// Standard: Omega uses gamma11 at order 1 + 2 alpha minus gamma1^2.
/// PublishedLogistic: for Bernoulli rows, the per-row Omega weight
///   e^eta (e^{alpha eta} + e^eta)^2 / (1 + e^eta)^{4+alpha},
/// which is what the published logistic standard errors were computed with.
enum class OmegaConvention { Standard, PublishedLogistic };

struct SandwichMatrices {
    Eigen::MatrixXd psi;
    Eigen::MatrixXd omega;
    Eigen::MatrixXd av;
    double psi_rcond = 0.0;  // reciprocal condition estimate of psi
};

namespace detail {

inline double published_logistic_omega_weight(double eta, double alpha) {
    const double m = std::max(alpha * eta, eta);
    const double lse = m + std::log1p(std::exp(-std::abs(alpha * eta - eta)));
    return std::exp(eta + 2.0 * lse - (4.0 + alpha) * softplus(eta));
}

/// Rows of the N, M blocks for one observation at order 1 + a.
inline void accumulate_moments(const ModelSpec& spec, const Eigen::VectorXd& x, const GammaSet& g, double w,
                               Eigen::MatrixXd& m_acc, Eigen::VectorXd* n_vec) {
    const auto p = spec.p();
    m_acc.topLeftCorner(p, p).noalias() += w * g.gamma11 * x * x.transpose();
    if (spec.scale_free()) {
        m_acc.block(0, p, p, 1).noalias() += w * g.gamma12 * x;
        m_acc.block(p, 0, 1, p).noalias() += w * g.gamma12 * x.transpose();
        m_acc(p, p) += w * g.gamma22;
    }
    if (n_vec != nullptr) {
        n_vec->head(p) = g.gamma1 * x;
        if (spec.scale_free()) (*n_vec)(p) = g.gamma2;
    }
}

}  // namespace detail

/// Psi_n, Omega_n and AV = Psi^{-1} Omega Psi^{-1}.  Throws InferenceError when
/// Psi_n is numerically singular.
inline SandwichMatrices sandwich(const ModelSpec& spec, const Eigen::VectorXd& theta, double alpha,
                                 OmegaConvention convention = OmegaConvention::Standard,
                                 const PoissonSeriesPolicy& policy = {}) {
    detail::require_alpha(alpha);
    const auto par = unpack(spec, theta);
    const auto d = spec.dim();
    SandwichMatrices s;
    s.psi = Eigen::MatrixXd::Zero(d, d);
    s.omega = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd nv(d);
    for (Eigen::Index i = 0; i < spec.n(); ++i) {
        const auto obs = observation_terms(spec, i);
        const Eigen::VectorXd x = spec.X.row(i).transpose();
        const double eta = x.dot(par.beta);
        const auto g1 = gamma_set(obs.family, eta, par.phi, alpha, policy);
        detail::accumulate_moments(spec, x, g1, obs.weight, s.psi, &nv);
        if (convention == OmegaConvention::PublishedLogistic) {
            if (obs.family.kind != FamilyKind::Bernoulli) {
                throw UnsupportedOperation("published logistic Omega applies to Bernoulli rows only");
            }
            s.omega.noalias() += obs.weight * detail::published_logistic_omega_weight(eta, alpha) * x * x.transpose();
        } else {
            const auto g2 = gamma_set(obs.family, eta, par.phi, 2.0 * alpha, policy);
            detail::accumulate_moments(spec, x, g2, obs.weight, s.omega, nullptr);
            s.omega.noalias() -= obs.weight * nv * nv.transpose();
        }
    }
    const double total = total_weight(spec);
    s.psi /= total;
    s.omega /= total;
    s.psi = 0.5 * (s.psi + s.psi.transpose()).eval();
    s.omega = 0.5 * (s.omega + s.omega.transpose()).eval();

    Eigen::LDLT<Eigen::MatrixXd> ldlt(s.psi);
    s.psi_rcond = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
    if (!(s.psi_rcond > 1e-15)) throw InferenceError("Psi_n is singular; no sandwich covariance");
    const Eigen::MatrixXd a = ldlt.solve(s.omega);
    s.av = ldlt.solve(a.transpose());
    s.av = 0.5 * (s.av + s.av.transpose()).eval();
    if (!s.av.allFinite()) throw InferenceError("sandwich covariance is not finite");
    return s;
}

enum class ReferenceDistribution { StudentT, Normal };

struct WaldRow {
    std::string coef;
    double estimate = 0.0;
    double se = 0.0;
    double statistic = 0.0;
    double p_value = 1.0;
};

struct WaldTable {
    std::vector<WaldRow> rows;
    ReferenceDistribution reference = ReferenceDistribution::StudentT;
    double df = 0.0;  // degrees of freedom of the t reference
};

/// Two-sided p-value for a Wald statistic.
inline double wald_p_value(double statistic, ReferenceDistribution ref, double df) {
    const double z = std::abs(statistic);
    if (ref == ReferenceDistribution::Normal) {
        return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal_distribution<>(), z));
    }
    if (!(df > 0.0)) throw InferenceError("t reference needs positive degrees of freedom");
    return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<>(df), z));
}

inline WaldTable wald_table(const std::vector<std::string>& names, const Eigen::VectorXd& estimate,
                            const Eigen::VectorXd& se, double df,
                            ReferenceDistribution ref = ReferenceDistribution::StudentT) {
    WaldTable t;
    t.reference = ref;
    t.df = df;
    for (Eigen::Index j = 0; j < estimate.size(); ++j) {
        if (!(se(j) > 0.0)) throw InferenceError("zero standard error for " + names.at(static_cast<std::size_t>(j)));
        WaldRow r;
        r.coef = names.at(static_cast<std::size_t>(j));
        r.estimate = estimate(j);
        r.se = se(j);
        r.statistic = r.estimate / r.se;
        r.p_value = std::min(1.0, wald_p_value(r.statistic, ref, df));
        t.rows.push_back(r);
    }
    return t;
}

/// 100 * diag(av_ref) / diag(av_alpha), per coordinate.
inline Eigen::VectorXd relative_efficiency(const Eigen::MatrixXd& av_ref, const Eigen::MatrixXd& av_alpha) {
    if (av_ref.rows() != av_alpha.rows() || av_ref.cols() != av_alpha.cols()) {
        throw InputError("relative efficiency needs matrices of matching size");
    }
    Eigen::VectorXd re(av_ref.rows());
    for (Eigen::Index j = 0; j < re.size(); ++j) {
        if (!(av_alpha(j, j) > 0.0)) throw InferenceError("zero asymptotic variance");
        re(j) = 100.0 * (av_ref(j, j) / av_alpha(j, j));
    }
    return re;
}

inline Eigen::VectorXd relative_efficiency(const SandwichMatrices& ref, const SandwichMatrices& alt) {
    return relative_efficiency(ref.av, alt.av);
}

}  // namespace mdpde
