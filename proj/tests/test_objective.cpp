#include <gtest/gtest.h>

#include <random>

#include "mdpde/objective.hpp"
#include "test_support.hpp"

using namespace mdpde;
using namespace mdpde::testing;

namespace {

ModelSpec one_row(const FamilyDescriptor& fam, double y, double x) {
    ModelSpec s;
    s.family = fam;
    s.X = Eigen::MatrixXd::Constant(1, 1, x);
    s.y = Eigen::VectorXd::Constant(1, y);
    return s;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double x : v) out(k++) = x;
    return out;
}

std::vector<ModelSpec> family_specs() {
    std::vector<ModelSpec> out;
    out.push_back(simulated_spec(FamilyDescriptor::poisson(), 40, vec({0.8, 0.5, -0.3}), 11));
    out.push_back(simulated_spec(FamilyDescriptor::bernoulli(), 40, vec({0.2, 1.0, -0.7}), 12));
    out.push_back(simulated_spec(FamilyDescriptor::binomial(3), 30, vec({-0.2, 0.6}), 13));
    out.push_back(simulated_spec(FamilyDescriptor::gaussian(), 30, vec({1.0, -0.5}), 14, true, 0.7));
    return out;
}

Eigen::VectorXd perturbed_theta(const ModelSpec& spec, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    Eigen::VectorXd t(spec.dim());
    for (Eigen::Index j = 0; j < spec.p(); ++j) t(j) = u(rng);
    if (spec.scale_free()) t(spec.p()) = 0.5 + std::abs(u(rng));
    return t;
}

}  // namespace

TEST(Objective, BernoulliSingleObservation) {
    EXPECT_DOUBLE_EQ(objective(one_row(FamilyDescriptor::bernoulli(), 1.0, 1.0), vec({0.0}), 1.0), -0.5);
}

TEST(Objective, AlphaZeroIsNegativeMeanLogLikelihood) {
    for (const auto& spec : family_specs()) {
        std::mt19937_64 rng(3);
        const auto theta = perturbed_theta(spec, rng);
        const auto par = unpack(spec, theta);
        double ll = 0.0;
        for (Eigen::Index i = 0; i < spec.n(); ++i) {
            ll += log_density(spec.family_at(i), spec.y(i), spec.X.row(i).dot(par.beta), par.phi);
        }
        EXPECT_NEAR(objective(spec, theta, 0.0), -ll / spec.n(), 1e-12);
    }
}

TEST(Objective, PoissonTwoRowsAgainstComposition) {
    ModelSpec s;
    s.X = Eigen::MatrixXd(2, 2);
    s.X << 1, 0, 1, 1;
    s.y = vec({1, 2});
    const Eigen::VectorXd beta = vec({0.0, std::log(2.0)});  // mu = (1, 2)
    const double a = 0.5;
    double h = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double mu = i == 0 ? 1.0 : 2.0;
        const double f = std::exp(s.y(i) * std::log(mu) - mu - std::lgamma(s.y(i) + 1));
        h += poisson_brute(mu, 1 + a, 300).integral - (1 + 1 / a) * std::pow(f, a);
    }
    EXPECT_NEAR(objective(s, beta, a), h / 2, 1e-14);
}

TEST(Objective, ParameterErrors) {
    const auto spec = one_row(FamilyDescriptor::poisson(), 1.0, 1.0);
    EXPECT_THROW(objective(spec, vec({0.0, 1.0}), 0.5), InputError);
    EXPECT_THROW(objective(spec, vec({std::nan("")}), 0.5), DomainError);
    EXPECT_THROW(objective(spec, vec({0.0}), -1.0), DomainError);
    auto g = one_row(FamilyDescriptor::gaussian(), 1.0, 1.0);
    g.estimate_scale = true;
    EXPECT_THROW(objective(g, vec({0.0, -1.0}), 0.5), DomainError);
}

TEST(EstimatingFunction, PoissonMleIsNegativeScore) {
    const auto spec = simulated_spec(FamilyDescriptor::poisson(), 25, vec({0.5, 0.4}), 5);
    const auto beta = vec({0.3, 0.2});
    Eigen::VectorXd score = Eigen::VectorXd::Zero(2);
    for (Eigen::Index i = 0; i < spec.n(); ++i) {
        score += (spec.y(i) - std::exp(spec.X.row(i).dot(beta))) * spec.X.row(i).transpose();
    }
    EXPECT_LT((estimating_function(spec, beta, 0.0) + score / spec.n()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(EstimatingFunction, MatchesFiniteDifferenceGradient) {
    for (const auto& spec : family_specs()) {
        std::mt19937_64 rng(17);
        for (double a : {0.0, 0.1, 0.3, 0.5, 1.0}) {
            const auto theta = perturbed_theta(spec, rng);
            const Eigen::VectorXd u = estimating_function(spec, theta, a) * (1 + a);
            EXPECT_LT(max_rel_err(u, fd_gradient(spec, theta, a)), 1e-6)
                << spec.family.name() << " alpha " << a;
        }
    }
}

TEST(EstimatingFunction, JacobianMatchesFiniteDifference) {
    for (const auto& spec : family_specs()) {
        std::mt19937_64 rng(23);
        for (double a : {0.0, 0.5, 1.0}) {
            const auto theta = perturbed_theta(spec, rng);
            const auto ev = evaluate(spec, theta, a);
            Eigen::MatrixXd fd(spec.dim(), spec.dim());
            for (Eigen::Index j = 0; j < spec.dim(); ++j) {
                const double h = 1e-5 * (1 + std::abs(theta(j)));
                Eigen::VectorXd tp = theta, tm = theta;
                tp(j) += h;
                tm(j) -= h;
                fd.col(j) = (estimating_function(spec, tp, a) - estimating_function(spec, tm, a)) / (2 * h);
            }
            EXPECT_LT((ev.jacobian - fd).cwiseAbs().maxCoeff(), 1e-6 * (1 + fd.cwiseAbs().maxCoeff()))
                << spec.family.name() << " alpha " << a;
        }
    }
}

TEST(EstimatingFunction, LogisticWrittenFormsAgree) {
    std::mt19937_64 rng(29);
    const auto spec = simulated_spec(FamilyDescriptor::bernoulli(), 60, vec({0.3, -1.2, 0.8}), 31);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int rep = 0; rep < 20; ++rep) {
        const auto beta = vec({u(rng), u(rng), u(rng)});
        for (double a : {0.0, 0.1, 0.3, 0.7, 1.0}) {
            const auto general = logistic_estimating_general(spec.X, spec.y, beta, a);
            const auto simplified = logistic_estimating_simplified(spec.X, spec.y, beta, a);
            const auto library = estimating_function(spec, beta, a);
            EXPECT_LT((general - simplified).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LT((library - simplified).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(EstimatingFunction, GaussianBetaEquationSimplifies) {
    auto spec = simulated_spec(FamilyDescriptor::gaussian(), 40, vec({1.0, 2.0}), 37, true, 0.5);
    const auto beta = vec({0.9, 2.2});
    const double phi = 0.6;
    Eigen::VectorXd theta(3);
    theta << beta, phi;
    for (double a : {0.0, 0.25, 1.0}) {
        const auto u = estimating_function(spec, theta, a);
        const auto s = gaussian_simplified_estimating(spec.X, spec.y, beta, phi, a);
        EXPECT_LT((u.head(2) - s).cwiseAbs().maxCoeff(), 1e-12);
    }
}
