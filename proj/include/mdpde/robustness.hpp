#pragma once

// Influence function of the MDPDE functional for contamination in one
// direction, and the gross-error / self-standardized sensitivities.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mdpde/asymptotics.hpp"
#include "mdpde/data.hpp"
#include "mdpde/errors.hpp"
#include "mdpde/families.hpp"
#include "mdpde/model.hpp"
#include "mdpde/solver.hpp"

namespace mdpde {

/// Everything the influence function needs at one (theta, alpha, i0).
class InfluenceContext {
public:
    InfluenceContext(const ModelSpec& spec, const Eigen::VectorXd& theta, double alpha, Eigen::Index i0,
                     const PoissonSeriesPolicy& policy = {})
        : spec_(spec), theta_(theta), alpha_(alpha), i0_(i0) {
        if (i0 < 0 || i0 >= spec.n()) throw InputError("contamination direction out of range");
        const auto s = sandwich(spec, theta, alpha, OmegaConvention::Standard, policy);
        psi_ = s.psi;
        omega_ = s.omega;
        psi_ldlt_.compute(psi_);
        omega_ldlt_.compute(omega_);
        const auto par = unpack(spec, theta);
        fam_ = spec.family_at(i0);
        phi_ = par.phi;
        x_ = spec.X.row(i0).transpose();
        eta_ = x_.dot(par.beta);
        gamma_ = gamma_set(fam_, eta_, phi_, alpha, policy);
        total_ = total_weight(spec);
    }

    const FamilyDescriptor& family() const { return fam_; }
    double eta() const { return eta_; }
    double mean() const { return mean_value(fam_, eta_); }
    double alpha() const { return alpha_; }
    const GammaSet& gamma() const { return gamma_; }

    /// f(t)^alpha u(t) - N, the bracket of the influence function.
    Eigen::VectorXd bracket(double t) const {
        const auto d = spec_.dim();
        const auto p = spec_.p();
        const double fa = alpha_ == 0.0 ? 1.0 : std::exp(alpha_ * log_density(fam_, t, eta_, phi_));
        const double a = dispersion(fam_, phi_);
        Eigen::VectorXd b(d);
        b.head(p) = (fa * (t - mean()) / a - gamma_.gamma1) * x_;
        if (spec_.scale_free()) b(p) = fa * k2(fam_, t, eta_, phi_) - gamma_.gamma2;
        return b;
    }

    /// Psi_n^{-1} (1/N) [f(t)^alpha u(t) - N].
    Eigen::VectorXd influence(double t) const { return psi_ldlt_.solve(bracket(t)) / total_; }

    /// (1/N) sqrt(b' Omega^{-1} b), the self-standardized norm of the influence.
    double standardized_norm(double t) const {
        const Eigen::VectorXd b = bracket(t);
        return std::sqrt(std::max(0.0, b.dot(omega_ldlt_.solve(b)))) / total_;
    }

private:
    const ModelSpec& spec_;
    Eigen::VectorXd theta_;
    double alpha_;
    Eigen::Index i0_;
    Eigen::MatrixXd psi_, omega_;
    Eigen::LDLT<Eigen::MatrixXd> psi_ldlt_, omega_ldlt_;
    FamilyDescriptor fam_;
    double phi_ = 1.0, eta_ = 0.0, total_ = 1.0;
    Eigen::VectorXd x_;
    GammaSet gamma_;
};

/// Influence function at contamination point t in direction i0 (0-based).
inline Eigen::VectorXd influence(const ModelSpec& spec, const Eigen::VectorXd& theta, double alpha, Eigen::Index i0,
                                 double t) {
    return InfluenceContext(spec, theta, alpha, i0).influence(t);
}

inline Eigen::VectorXd influence(const ModelSpec& spec, const FitResult& fit, Eigen::Index i0, double t) {
    return influence(spec, fit.theta(), fit.alpha, i0, t);
}

/// Default contamination grid: integers 0..max(10 mu + 100, max y + 50) for
/// counts, the full support for bounded families, and +-40 sd for the Gaussian.
inline std::vector<double> contamination_grid(const ModelSpec& spec, const Eigen::VectorXd& theta, Eigen::Index i0) {
    const auto par = unpack(spec, theta);
    const auto fam = spec.family_at(i0);
    const double eta = spec.X.row(i0).dot(par.beta);
    const double mu = mean_value(fam, eta);
    std::vector<double> grid;
    switch (fam.kind) {
        case FamilyKind::Poisson: {
            const double top = std::max(std::ceil(10.0 * mu + 100.0), spec.y.maxCoeff() + 50.0);
            for (double t = 0.0; t <= top; t += 1.0) grid.push_back(t);
            break;
        }
        case FamilyKind::Bernoulli: grid = {0.0, 1.0}; break;
        case FamilyKind::Binomial:
            for (int t = 0; t <= fam.trials; ++t) grid.push_back(t);
            break;
        case FamilyKind::Gaussian: {
            const double sd = std::sqrt(par.phi);
            for (int k = -2000; k <= 2000; ++k) grid.push_back(mu + sd * k / 50.0);
            break;
        }
    }
    return grid;
}

struct InfluenceReport {
    Eigen::Index direction = 0;  // 0-based
    double alpha = 0.0;
    std::vector<double> grid;
    std::vector<Eigen::VectorXd> if_values;
    double sup_norm = 0.0;
    Eigen::Index argmax = 0;  // grid index of sup_norm
    double gross_error_sensitivity = 0.0;
    double self_standardized_sensitivity = 0.0;
};

/// Influence curve over a grid and the two sensitivities.  At alpha = 0 the
/// sensitivities are +infinity for families with unbounded support; bounded
/// supports report the computed (finite) supremum.
inline InfluenceReport influence_report(const ModelSpec& spec, const Eigen::VectorXd& theta, double alpha,
                                        Eigen::Index i0, std::vector<double> grid = {}) {
    InfluenceContext ctx(spec, theta, alpha, i0);
    if (grid.empty()) grid = contamination_grid(spec, theta, i0);
    InfluenceReport rep;
    rep.direction = i0;
    rep.alpha = alpha;
    rep.grid = grid;
    double self_std = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        rep.if_values.push_back(ctx.influence(grid[k]));
        const double nrm = rep.if_values.back().norm();
        if (nrm > rep.sup_norm) {
            rep.sup_norm = nrm;
            rep.argmax = static_cast<Eigen::Index>(k);
        }
        self_std = std::max(self_std, ctx.standardized_norm(grid[k]));
    }
    if (alpha == 0.0 && !ctx.family().bounded_support()) {
        rep.gross_error_sensitivity = std::numeric_limits<double>::infinity();
        rep.self_standardized_sensitivity = std::numeric_limits<double>::infinity();
    } else {
        rep.gross_error_sensitivity = rep.sup_norm;
        rep.self_standardized_sensitivity = self_std;
    }
    return rep;
}

struct Sensitivities {
    double gross_error = 0.0;
    double self_standardized = 0.0;
};

inline Sensitivities sensitivities(const ModelSpec& spec, const FitResult& fit, Eigen::Index i0,
                                   std::vector<double> grid = {}) {
    const auto rep = influence_report(spec, fit.theta(), fit.alpha, i0, std::move(grid));
    return {rep.gross_error_sensitivity, rep.self_standardized_sensitivity};
}

// ---------------------------------------------------------------------------
// Long-format export for plotting.

struct InfluenceRow {
    double alpha = 0.0;
    Eigen::Index i0 = 0;  // 1-based in the exported table
    double t = 0.0;
    std::string coef;
    double value = 0.0;
};

/// One row per (alpha, i0, t, coefficient), in input order.  Each parameter
/// vector in `thetas` goes with the alpha at the same position.
inline std::vector<InfluenceRow> influence_grid_export(const ModelSpec& spec, const std::vector<double>& alphas,
                                                       const std::vector<Eigen::VectorXd>& thetas,
                                                       const std::vector<Eigen::Index>& directions,
                                                       const std::vector<double>& grid) {
    if (alphas.size() != thetas.size()) throw InputError("one parameter vector per alpha is required");
    std::vector<InfluenceRow> rows;
    const auto names = parameter_names(spec);
    for (std::size_t a = 0; a < alphas.size(); ++a) {
        for (const auto i0 : directions) {
            InfluenceContext ctx(spec, thetas[a], alphas[a], i0 - 1);
            for (const double t : grid) {
                const Eigen::VectorXd v = ctx.influence(t);
                for (Eigen::Index j = 0; j < v.size(); ++j) {
                    rows.push_back({alphas[a], i0, t, names[static_cast<std::size_t>(j)], v(j)});
                }
            }
        }
    }
    return rows;
}

inline std::string influence_csv(const std::vector<InfluenceRow>& rows) {
    std::ostringstream os;
    os << "alpha,i0,t,coef,if_value\n";
    for (const auto& r : rows) {
        os << format_sig(r.alpha) << ',' << r.i0 << ',' << format_sig(r.t) << ",\"" << r.coef << "\","
           << format_sig(r.value) << '\n';
    }
    return os.str();
}

inline std::vector<InfluenceRow> parse_influence_csv(const std::string& text) {
    const auto recs = detail::parse_csv_records(text, "influence");
    if (recs.empty() || recs[0].fields != std::vector<std::string>{"alpha", "i0", "t", "coef", "if_value"}) {
        throw InputError("influence table: unexpected header");
    }
    std::vector<InfluenceRow> rows;
    for (std::size_t r = 1; r < recs.size(); ++r) {
        const auto& f = recs[r].fields;
        if (f.size() != 5) throw InputError("influence table:" + std::to_string(recs[r].line) + ": wrong field count");
        const std::string where = "influence table:" + std::to_string(recs[r].line);
        rows.push_back({detail::parse_number(f[0], where), static_cast<Eigen::Index>(detail::parse_number(f[1], where)),
                        detail::parse_number(f[2], where), f[3], detail::parse_number(f[4], where)});
    }
    return rows;
}

}  // namespace mdpde
