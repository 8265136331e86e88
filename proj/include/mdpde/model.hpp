#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mdpde/errors.hpp"
#include "mdpde/families.hpp"

namespace mdpde {

/// How a Binomial response with m_i trials enters the divergence.
///  Grouped: one observation with support 0..m_i.
///  ReplicatedBernoulli: m_i Bernoulli observations, y_i of them successes.
enum class BinomialMode { Grouped, ReplicatedBernoulli };

struct ModelSpec {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<int> trials;  // Binomial only, one per row
    FamilyDescriptor family = FamilyDescriptor::poisson();
    bool estimate_scale = false;
    BinomialMode binomial_mode = BinomialMode::Grouped;
    double phi = 1.0;  // scale used when it is not estimated
    std::vector<std::string> coef_names;

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index p() const { return X.cols(); }
    /// Number of free parameters: p, plus one for a free scale.
    Eigen::Index dim() const { return p() + (scale_free() ? 1 : 0); }
    bool scale_free() const { return estimate_scale && !family.scale_fixed; }

    FamilyDescriptor family_at(Eigen::Index i) const {
        if (family.kind == FamilyKind::Binomial) {
            if (binomial_mode == BinomialMode::ReplicatedBernoulli) return FamilyDescriptor::bernoulli();
            return family.with_trials(trials.at(static_cast<std::size_t>(i)));
        }
        return family;
    }

    std::string coef_name(Eigen::Index j) const {
        if (static_cast<std::size_t>(j) < coef_names.size()) return coef_names[static_cast<std::size_t>(j)];
        if (j == p()) return "phi";
        return "b" + std::to_string(j);
    }
};

/// One row of the model as it enters H_n: the integral term carries `weight`,
/// and each observed point y carries a count.
struct ObservationTerms {
    FamilyDescriptor family;
    double weight = 1.0;
    std::array<std::pair<double, double>, 2> points{};  // (y, count)
    int npoints = 1;
};

inline ObservationTerms observation_terms(const ModelSpec& spec, Eigen::Index i) {
    ObservationTerms t;
    t.family = spec.family_at(i);
    const double yi = spec.y(i);
    if (spec.family.kind == FamilyKind::Binomial && spec.binomial_mode == BinomialMode::ReplicatedBernoulli) {
        const double m = spec.trials.at(static_cast<std::size_t>(i));
        t.weight = m;
        t.points[0] = {1.0, yi};
        t.points[1] = {0.0, m - yi};
        t.npoints = 2;
    } else {
        t.points[0] = {yi, 1.0};
    }
    return t;
}

/// Total weight N: n, or the number of Bernoulli trials in replicated mode.
inline double total_weight(const ModelSpec& spec) {
    if (spec.family.kind == FamilyKind::Binomial && spec.binomial_mode == BinomialMode::ReplicatedBernoulli) {
        double s = 0.0;
        for (int m : spec.trials) s += m;
        return s;
    }
    return static_cast<double>(spec.n());
}

inline Eigen::Index column_rank(const Eigen::MatrixXd& X) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    return qr.rank();
}

/// Checks shapes, supports and full column rank; throws InputError.
inline void validate(const ModelSpec& spec) {
    const auto n = spec.n(), p = spec.p();
    if (p < 1) throw InputError("design matrix has no columns");
    if (n < p) throw InputError("fewer observations than coefficients");
    if (spec.y.size() != n) throw InputError("response length does not match design rows");
    if (!spec.X.allFinite()) throw InputError("design matrix contains non-finite values");
    if (spec.family.kind == FamilyKind::Binomial) {
        if (static_cast<Eigen::Index>(spec.trials.size()) != n) {
            throw InputError("binomial model needs one trial count per row");
        }
        for (int m : spec.trials) {
            if (m < 1) throw InputError("trial counts must be positive");
        }
    }
    if (spec.estimate_scale && spec.family.scale_fixed) {
        throw InputError(spec.family.name() + " has a fixed scale; cannot estimate phi");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto fam = spec.family.kind == FamilyKind::Binomial
                             ? spec.family.with_trials(spec.trials[static_cast<std::size_t>(i)])
                             : spec.family;
        if (!in_support(fam, spec.y(i))) {
            std::ostringstream os;
            os << "response " << spec.y(i) << " at row " << i + 1 << " outside the support of " << fam.name();
            throw InputError(os.str());
        }
    }
    if (column_rank(spec.X) < p) throw InputError("design matrix is rank deficient");
}

/// Parameter vector (beta, [phi]) packing.
struct Parameters {
    Eigen::VectorXd beta;
    double phi = 1.0;
};

inline Eigen::VectorXd pack(const ModelSpec& spec, const Parameters& par) {
    Eigen::VectorXd v(spec.dim());
    v.head(spec.p()) = par.beta;
    if (spec.scale_free()) v(spec.p()) = par.phi;
    return v;
}

inline Parameters unpack(const ModelSpec& spec, const Eigen::VectorXd& v) {
    Parameters par;
    par.beta = v.head(spec.p());
    par.phi = spec.scale_free() ? v(spec.p()) : (spec.family.scale_fixed ? 1.0 : spec.phi);
    return par;
}

}  // namespace mdpde
