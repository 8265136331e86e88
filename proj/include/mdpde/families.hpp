#pragma once

// Exponential-family GLM densities with canonical links, and the power-moment
// functionals (the "gamma" quantities) the density power divergence needs.
//
// Every density here is parameterised by the linear predictor eta.  All links
// are canonical, so the canonical parameter theta equals eta.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mdpde/errors.hpp"

namespace mdpde {

enum class FamilyKind { Poisson, Bernoulli, Binomial, Gaussian };
enum class LinkKind { Log, Logit, Identity };
enum class SupportKind { NonNegIntegers, ZeroOne, IntegerRange, Reals };

struct FamilyDescriptor {
    FamilyKind kind = FamilyKind::Poisson;
    LinkKind link = LinkKind::Log;
    SupportKind support = SupportKind::NonNegIntegers;
    int trials = 1;  // only meaningful for Binomial
    bool scale_fixed = true;

    static FamilyDescriptor poisson() {
        return {FamilyKind::Poisson, LinkKind::Log, SupportKind::NonNegIntegers, 1, true};
    }
    static FamilyDescriptor bernoulli() {
        return {FamilyKind::Bernoulli, LinkKind::Logit, SupportKind::ZeroOne, 1, true};
    }
    static FamilyDescriptor binomial(int m) {
        if (m < 1) throw DomainError("binomial family needs at least one trial");
        return {FamilyKind::Binomial, LinkKind::Logit, SupportKind::IntegerRange, m, true};
    }
    static FamilyDescriptor gaussian() {
        return {FamilyKind::Gaussian, LinkKind::Identity, SupportKind::Reals, 1, false};
    }

    FamilyDescriptor with_trials(int m) const {
        if (kind != FamilyKind::Binomial) return *this;
        return binomial(m);
    }

    bool discrete() const { return kind != FamilyKind::Gaussian; }
    bool bounded_support() const {
        return kind == FamilyKind::Bernoulli || kind == FamilyKind::Binomial;
    }

    std::string name() const {
        switch (kind) {
            case FamilyKind::Poisson: return "poisson";
            case FamilyKind::Bernoulli: return "bernoulli";
            case FamilyKind::Binomial: return "binomial(" + std::to_string(trials) + ")";
            case FamilyKind::Gaussian: return "gaussian";
        }
        return "unknown";
    }
};

namespace detail {

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double expit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw DomainError(std::string("non-finite ") + what);
    }
}

inline void require_scale(double phi) {
    if (!(phi > 0.0) || !std::isfinite(phi)) throw DomainError("scale parameter must be positive");
}

inline void require_alpha(double alpha) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw DomainError("alpha must be >= 0");
}

/// log(k) for small integers is hit billions of times by the Poisson series.
inline double log_int(std::size_t k) {
    static const std::vector<double> table = [] {
        std::vector<double> t(1u << 17);
        t[0] = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < t.size(); ++i) t[i] = std::log(static_cast<double>(i));
        return t;
    }();
    return k < table.size() ? table[k] : std::log(static_cast<double>(k));
}

inline double log_factorial(double y) { return std::lgamma(y + 1.0); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Exponential-family pieces: b, b', b'', a(phi), link.

inline double cumulant(const FamilyDescriptor& fam, double theta) {
    switch (fam.kind) {
        case FamilyKind::Poisson: return std::exp(theta);
        case FamilyKind::Bernoulli: return detail::softplus(theta);
        case FamilyKind::Binomial: return fam.trials * detail::softplus(theta);
        case FamilyKind::Gaussian: return 0.5 * theta * theta;
    }
    return 0.0;
}

/// mu = b'(theta).
inline double mean_value(const FamilyDescriptor& fam, double eta) {
    switch (fam.kind) {
        case FamilyKind::Poisson: return std::exp(eta);
        case FamilyKind::Bernoulli: return detail::expit(eta);
        case FamilyKind::Binomial: return fam.trials * detail::expit(eta);
        case FamilyKind::Gaussian: return eta;
    }
    return 0.0;
}

/// b''(theta); the variance is b''(theta) a(phi).
inline double variance_function(const FamilyDescriptor& fam, double eta) {
    switch (fam.kind) {
        case FamilyKind::Poisson: return std::exp(eta);
        case FamilyKind::Bernoulli: {
            const double p = detail::expit(eta);
            return p * detail::expit(-eta);
        }
        case FamilyKind::Binomial: {
            const double p = detail::expit(eta);
            return fam.trials * p * detail::expit(-eta);
        }
        case FamilyKind::Gaussian: return 1.0;
    }
    return 0.0;
}

inline double dispersion(const FamilyDescriptor& fam, double phi) {
    return fam.scale_fixed ? 1.0 : phi;
}

inline double link(const FamilyDescriptor& fam, double mu) {
    switch (fam.link) {
        case LinkKind::Log: return std::log(mu);
        case LinkKind::Logit: {
            const double p = mu / fam.trials;
            return std::log(p) - std::log1p(-p);
        }
        case LinkKind::Identity: return mu;
    }
    return 0.0;
}

/// g'(mu).
inline double link_derivative(const FamilyDescriptor& fam, double mu) {
    switch (fam.link) {
        case LinkKind::Log: return 1.0 / mu;
        case LinkKind::Logit: return fam.trials / (mu * (fam.trials - mu));
        case LinkKind::Identity: return 1.0;
    }
    return 0.0;
}

inline bool in_support(const FamilyDescriptor& fam, double y) {
    if (!std::isfinite(y)) return false;
    switch (fam.support) {
        case SupportKind::NonNegIntegers: return y >= 0.0 && y == std::floor(y);
        case SupportKind::ZeroOne: return y == 0.0 || y == 1.0;
        case SupportKind::IntegerRange: return y >= 0.0 && y <= fam.trials && y == std::floor(y);
        case SupportKind::Reals: return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Densities.

inline double log_density(const FamilyDescriptor& fam, double y, double eta, double phi = 1.0) {
    if (!in_support(fam, y)) {
        std::ostringstream os;
        os << "observation " << y << " outside the support of " << fam.name();
        throw DomainError(os.str());
    }
    detail::require_finite(eta, "canonical parameter");
    switch (fam.kind) {
        case FamilyKind::Poisson:
            return y * eta - std::exp(eta) - detail::log_factorial(y);
        case FamilyKind::Bernoulli:
            return y == 1.0 ? -detail::softplus(-eta) : -detail::softplus(eta);
        case FamilyKind::Binomial: {
            const double m = fam.trials;
            const double lchoose =
                detail::log_factorial(m) - detail::log_factorial(y) - detail::log_factorial(m - y);
            return lchoose - y * detail::softplus(-eta) - (m - y) * detail::softplus(eta);
        }
        case FamilyKind::Gaussian: {
            detail::require_scale(phi);
            const double r = y - eta;
            return -0.5 * r * r / phi - 0.5 * std::log(2.0 * std::numbers::pi * phi);
        }
    }
    return 0.0;
}

/// exp{(y theta - b(theta))/a(phi) + c(y, phi)}.
inline double density(const FamilyDescriptor& fam, double y, double eta, double phi = 1.0) {
    return std::exp(log_density(fam, y, eta, phi));
}

/// Scalar factor of the beta-score: grad_beta log f = k1 * x.
inline double k1(const FamilyDescriptor& fam, double y, double eta, double phi = 1.0) {
    detail::require_finite(eta, "linear predictor");
    const double mu = mean_value(fam, eta);
    const double var = variance_function(fam, eta) * dispersion(fam, phi);
    if (!(var > 0.0)) throw DomainError("zero variance at the boundary of the mean domain");
    // Canonical links: Var(y) g'(mu) = a(phi) exactly; avoid the 0 * inf product.
    return (y - mu) / dispersion(fam, phi);
}

/// Scale score d/dphi log f; only defined when the scale is free.
inline double k2(const FamilyDescriptor& fam, double y, double eta, double phi) {
    if (fam.scale_fixed) throw UnsupportedOperation(fam.name() + " has a fixed scale parameter");
    detail::require_scale(phi);
    const double r = y - eta;
    return 0.5 * r * r / (phi * phi) - 0.5 / phi;
}

// ---------------------------------------------------------------------------
// Power moments.

/// The gamma functionals at order 1 + alpha:
///   integral = int f^{1+a}, gamma1 = int K1 f^{1+a}, gamma11 = int K1^2 f^{1+a},
/// and the scale counterparts when phi is free.
struct GammaSet {
    double integral = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double gamma11 = 0.0;
    double gamma12 = 0.0;
    double gamma22 = 0.0;
    double order = 1.0;
    bool has_scale = false;
    double tail_bound = 0.0;  // certified bound on the truncated Poisson tail
    std::size_t terms = 0;
};

struct PoissonSeriesPolicy {
    double relative_tolerance = 1e-16;
    int quiet_terms = 10;
    std::size_t max_terms = 1'000'000;
};

namespace detail {

struct SeriesAcc {
    double i0 = 0.0, s1 = 0.0, s2 = 0.0;
};

// Sum of f^{order}, K f^{order}, K^2 f^{order} for Poisson(mu), walking outward
// from the mode so only the non-negligible window is visited.
inline GammaSet poisson_power_series(double mu, double order, const PoissonSeriesPolicy& policy) {
    GammaSet g;
    g.order = order;
    const double log_mu = std::log(mu);
    const double mode = std::floor(mu);
    const auto anchor = [&](double y) {
        return y == 0.0 ? -order * mu : order * (y * log_mu - mu - log_factorial(y));
    };

    SeriesAcc up, down;
    std::size_t terms = 0;
    double tail = 0.0;

    auto scale = [&]() {
        const double tot = up.i0 + down.i0;
        return tot * (1.0 + mu);
    };

    // Upward from the mode (inclusive).
    {
        double y = mode;
        double lt = anchor(y);
        int quiet = 0;
        for (std::size_t step = 0;; ++step) {
            const double t = std::exp(lt);
            const double k = y - mu;
            up.i0 += t;
            up.s1 += k * t;
            up.s2 += k * k * t;
            ++terms;
            if (t * (1.0 + k * k) < policy.relative_tolerance * scale()) {
                ++quiet;
            } else {
                quiet = 0;
            }
            const double ratio = std::exp(order * (log_mu - log_int(static_cast<std::size_t>(y) + 1)));
            if (quiet >= policy.quiet_terms && ratio < 1.0) {
                const double r = ratio;
                const double spread = std::abs(k) + 1.0 / (1.0 - r);
                tail += t * r / (1.0 - r) * (1.0 + spread * spread);
                break;
            }
            if (terms >= policy.max_terms) {
                throw ConvergenceError("Poisson series did not reach tolerance within the term cap", {},
                                       t);
            }
            y += 1.0;
            lt = (step % 64 == 63) ? anchor(y) : lt + order * (log_mu - log_int(static_cast<std::size_t>(y)));
        }
    }
    // Downward from mode - 1.
    if (mode >= 1.0) {
        double y = mode - 1.0;
        double lt = anchor(y);
        int quiet = 0;
        for (std::size_t step = 0;; ++step) {
            const double t = std::exp(lt);
            const double k = y - mu;
            down.i0 += t;
            down.s1 += k * t;
            down.s2 += k * k * t;
            ++terms;
            if (y == 0.0) break;
            if (t * (1.0 + k * k) < policy.relative_tolerance * scale()) {
                ++quiet;
            } else {
                quiet = 0;
            }
            const double ratio = std::exp(order * (log_int(static_cast<std::size_t>(y)) - log_mu));
            if (quiet >= policy.quiet_terms && ratio < 1.0) {
                const double r = ratio;
                const double spread = std::abs(k) + 1.0 / (1.0 - r);
                tail += t * r / (1.0 - r) * (1.0 + spread * spread);
                break;
            }
            if (terms >= policy.max_terms) {
                throw ConvergenceError("Poisson series did not reach tolerance within the term cap", {},
                                       t);
            }
            lt = (step % 64 == 63) ? anchor(y - 1.0) : lt + order * (log_int(static_cast<std::size_t>(y)) - log_mu);
            y -= 1.0;
        }
    }
    // Small sums first to limit cancellation in s1.
    g.integral = down.i0 + up.i0;
    g.gamma1 = down.s1 + up.s1;
    g.gamma11 = down.s2 + up.s2;
    g.tail_bound = tail;
    g.terms = terms;
    return g;
}

inline GammaSet finite_power_sum(const FamilyDescriptor& fam, double eta, double order) {
    GammaSet g;
    g.order = order;
    const double mu = mean_value(fam, eta);
    const int m = fam.kind == FamilyKind::Bernoulli ? 1 : fam.trials;
    for (int y = 0; y <= m; ++y) {
        const double t = std::exp(order * log_density(fam, y, eta));
        const double k = y - mu;
        g.integral += t;
        g.gamma1 += k * t;
        g.gamma11 += k * k * t;
    }
    g.terms = static_cast<std::size_t>(m + 1);
    return g;
}

}  // namespace detail

/// Closed forms for the Bernoulli family (written in mu so large |eta| stays finite).
inline GammaSet bernoulli_gamma_closed_form(double eta, double alpha) {
    detail::require_finite(eta, "linear predictor");
    detail::require_alpha(alpha);
    const double lp = -detail::softplus(-eta);  // log mu
    const double lq = -detail::softplus(eta);   // log(1 - mu)
    const double p = std::exp(lp), q = std::exp(lq);
    const double pa = std::exp((1.0 + alpha) * lp), qa = std::exp((1.0 + alpha) * lq);
    GammaSet g;
    g.order = 1.0 + alpha;
    g.integral = pa + qa;
    g.gamma1 = q * pa - p * qa;
    g.gamma11 = q * q * pa + p * p * qa;
    g.terms = 2;
    return g;
}

/// gamma quantities of order 1 + alpha at linear predictor eta and scale phi.
inline GammaSet gamma_set(const FamilyDescriptor& fam, double eta, double phi, double alpha,
                          const PoissonSeriesPolicy& policy = {}) {
    detail::require_alpha(alpha);
    detail::require_finite(eta, "linear predictor");
    const double order = 1.0 + alpha;
    switch (fam.kind) {
        case FamilyKind::Poisson: return detail::poisson_power_series(std::exp(eta), order, policy);
        case FamilyKind::Bernoulli: return bernoulli_gamma_closed_form(eta, alpha);
        case FamilyKind::Binomial: return detail::finite_power_sum(fam, eta, order);
        case FamilyKind::Gaussian: {
            detail::require_scale(phi);
            // f^{1+a} is proportional to a N(mu, phi/(1+a)) density.
            const double c = 1.0 / order;
            const double integral = std::pow(2.0 * std::numbers::pi * phi, -0.5 * alpha) / std::sqrt(order);
            GammaSet g;
            g.order = order;
            g.has_scale = true;
            g.integral = integral;
            g.gamma1 = 0.0;
            g.gamma11 = integral * c / phi;
            g.gamma2 = integral * (c - 1.0) / (2.0 * phi);
            g.gamma12 = 0.0;
            g.gamma22 = integral * (3.0 * c * c - 2.0 * c + 1.0) / (4.0 * phi * phi);
            return g;
        }
    }
    return {};
}

inline double integral_f_power(const FamilyDescriptor& fam, double eta, double phi, double alpha) {
    if (alpha == 0.0) {
        detail::require_finite(eta, "linear predictor");
        return 1.0;
    }
    return gamma_set(fam, eta, phi, alpha).integral;
}

}  // namespace mdpde
