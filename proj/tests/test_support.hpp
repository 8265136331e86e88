#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>

#include "mdpde/data.hpp"
#include "mdpde/model.hpp"
#include "mdpde/objective.hpp"

#ifndef MDPDE_TEST_DATA_DIR
#define MDPDE_TEST_DATA_DIR "data"
#endif

namespace mdpde::testing {

inline std::string data_dir() { return MDPDE_TEST_DATA_DIR; }

/// Direct sums of f^order, K f^order and K^2 f^order for Poisson(mu) over y = 0..ymax.
struct PoissonSums {
    double integral = 0.0, gamma1 = 0.0, gamma11 = 0.0;
};

inline PoissonSums poisson_brute(double mu, double order, int ymax) {
    PoissonSums s;
    for (int y = 0; y <= ymax; ++y) {
        const double lf = y * std::log(mu) - mu - std::lgamma(y + 1.0);
        const double t = std::exp(order * lf);
        s.integral += t;
        s.gamma1 += (y - mu) * t;
        s.gamma11 += (y - mu) * (y - mu) * t;
    }
    return s;
}

inline Eigen::MatrixXd random_design(Eigen::Index n, Eigen::Index p, std::mt19937_64& rng, double scale = 0.5) {
    std::normal_distribution<double> nd(0.0, scale);
    Eigen::MatrixXd X(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (Eigen::Index j = 1; j < p; ++j) X(i, j) = nd(rng);
    }
    return X;
}

/// Draws a response from the family at the given coefficients.
inline ModelSpec simulated_spec(const FamilyDescriptor& fam, Eigen::Index n, const Eigen::VectorXd& beta,
                                std::uint64_t seed, bool estimate_scale = false, double phi = 1.0) {
    std::mt19937_64 rng(seed);
    ModelSpec spec;
    spec.family = fam;
    spec.X = random_design(n, beta.size(), rng);
    spec.y.resize(n);
    spec.estimate_scale = estimate_scale;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double eta = spec.X.row(i).dot(beta);
        switch (fam.kind) {
            case FamilyKind::Poisson: spec.y(i) = std::poisson_distribution<int>(std::exp(eta))(rng); break;
            case FamilyKind::Bernoulli:
                spec.y(i) = std::bernoulli_distribution(1.0 / (1.0 + std::exp(-eta)))(rng) ? 1.0 : 0.0;
                break;
            case FamilyKind::Binomial: {
                const int m = 3 + static_cast<int>(i % 5);
                spec.trials.push_back(m);
                spec.y(i) = std::binomial_distribution<int>(m, 1.0 / (1.0 + std::exp(-eta)))(rng);
                break;
            }
            case FamilyKind::Gaussian: spec.y(i) = eta + std::sqrt(phi) * std::normal_distribution<double>()(rng); break;
        }
    }
    if (fam.kind == FamilyKind::Binomial) spec.family = FamilyDescriptor::binomial(spec.trials.front());
    return spec;
}

/// Textbook iteratively reweighted least squares for canonical-link GLMs.
inline Eigen::VectorXd irls(const ModelSpec& spec, int max_iter = 100) {
    const auto n = spec.n();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(spec.p());
    Eigen::VectorXd mu(n), w(n), z(n), eta0(n);
    // Starting values as in R's glm: mu = y + 0.1 (Poisson), (m y + 0.5) / (m + 1) (binomial).
    for (Eigen::Index i = 0; i < n; ++i) {
        const double y = spec.y(i);
        switch (spec.family.kind) {
            case FamilyKind::Poisson: eta0(i) = std::log(y + 0.1); break;
            case FamilyKind::Gaussian: eta0(i) = y; break;
            default: {
                const double m = spec.family.kind == FamilyKind::Binomial ? spec.trials[static_cast<std::size_t>(i)] : 1.0;
                const double pr = (y + 0.5) / (m + 1.0);
                eta0(i) = std::log(pr / (1.0 - pr));
            }
        }
    }
    for (int it = 0; it < max_iter; ++it) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double eta = it == 0 ? eta0(i) : spec.X.row(i).dot(beta);
            double m = 0.0, v = 0.0;
            switch (spec.family.kind) {
                case FamilyKind::Poisson: m = std::exp(eta), v = m; break;
                case FamilyKind::Gaussian: m = eta, v = 1.0; break;
                default: {
                    const double trials =
                        spec.family.kind == FamilyKind::Binomial ? spec.trials[static_cast<std::size_t>(i)] : 1.0;
                    const double pr = 1.0 / (1.0 + std::exp(-eta));
                    m = trials * pr, v = trials * pr * (1.0 - pr);
                }
            }
            mu(i) = m;
            w(i) = v;
            z(i) = eta + (spec.y(i) - m) / v;
        }
        const Eigen::MatrixXd xtwx = spec.X.transpose() * w.asDiagonal() * spec.X;
        const Eigen::VectorXd next = xtwx.ldlt().solve(spec.X.transpose() * w.asDiagonal() * z);
        const double change = (next - beta).cwiseAbs().maxCoeff();
        beta = next;
        if (change < 1e-14) break;
    }
    return beta;
}

/// Central-difference gradient of the objective.
inline Eigen::VectorXd fd_gradient(const ModelSpec& spec, const Eigen::VectorXd& theta, double alpha) {
    Eigen::VectorXd g(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        const double h = 1e-6 * (1.0 + std::abs(theta(j)));
        Eigen::VectorXd tp = theta, tm = theta;
        tp(j) += h;
        tm(j) -= h;
        g(j) = (objective(spec, tp, alpha) - objective(spec, tm, alpha)) / (2.0 * h);
    }
    return g;
}

inline double max_rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

}  // namespace mdpde::testing
