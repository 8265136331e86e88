#include <gtest/gtest.h>

#include "mdpde/robustness.hpp"
#include "mdpde/simulation.hpp"
#include "mdpde/solver.hpp"
#include "test_support.hpp"

using namespace mdpde;
using namespace mdpde::testing;

namespace {

struct Design {
    ModelSpec spec;
    Eigen::VectorXd beta;
};

Design poisson_model_one(int n = 50) {
    const auto sc = published_case(FamilyKind::Poisson, "I", n);
    Design d;
    d.spec.X = design_matrix(sc.covariates, n);
    d.spec.y = Eigen::VectorXd::Zero(n);
    d.beta = sc.beta_true;
    return d;
}

/// Limit of the influence function as the contamination point runs off the support.
Eigen::VectorXd asymptote(const ModelSpec& spec, const Eigen::VectorXd& theta, double alpha, Eigen::Index i0) {
    const auto s = sandwich(spec, theta, alpha);
    const Eigen::VectorXd x = spec.X.row(i0).transpose();
    const auto g = gamma_set(spec.family, x.dot(theta), 1.0, alpha);
    return -s.psi.ldlt().solve(g.gamma1 * x) / static_cast<double>(spec.n());
}

std::vector<double> integers(int top) {
    std::vector<double> g;
    for (int t = 0; t <= top; ++t) g.push_back(t);
    return g;
}

}  // namespace

TEST(Influence, LinearInContaminationAtAlphaZero) {
    const auto d = poisson_model_one();
    InfluenceContext ctx(d.spec, d.beta, 0.0, 0);
    const Eigen::VectorXd step = ctx.influence(1.0) - ctx.influence(0.0);
    for (double t : {5.0, 40.0, 300.0}) {
        EXPECT_LT((ctx.influence(t) - ctx.influence(0.0) - t * step).cwiseAbs().maxCoeff(),
                  1e-12 * (1 + t) * step.norm());
    }
    // (X' Gamma X)^{-1} x (t - mu) with Gamma = diag(mu).
    const Eigen::VectorXd mu = (d.spec.X * d.beta).array().exp();
    const Eigen::VectorXd oracle = (d.spec.X.transpose() * mu.asDiagonal() * d.spec.X).ldlt().solve(
                                       d.spec.X.row(0).transpose()) *
                                   (7.0 - mu(0));
    EXPECT_LT((ctx.influence(7.0) - oracle).cwiseAbs().maxCoeff(), 1e-12 * oracle.norm());
}

TEST(Influence, VanishesWhereTheBracketVanishes) {
    auto spec = simulated_spec(FamilyDescriptor::gaussian(), 30, Eigen::Vector2d(1.0, 0.5), 4);
    const Eigen::Vector2d beta(1.0, 0.5);
    for (double a : {0.0, 0.5, 1.0}) {
        InfluenceContext ctx(spec, beta, a, 3);
        EXPECT_LT(ctx.influence(ctx.mean()).norm(), 1e-15) << a;
    }
}

TEST(Influence, RedescendsTowardItsLimitForPositiveAlpha) {
    const auto d = poisson_model_one();
    for (double a : {0.1, 0.5, 1.0}) {
        InfluenceContext ctx(d.spec, d.beta, a, 0);
        const auto lim = asymptote(d.spec, d.beta, a, 0);
        double peak = 0.0;
        for (int t = 0; t <= 60; ++t) peak = std::max(peak, (ctx.influence(t) - lim).norm());
        const double top = a >= 0.5 ? 60.0 : 150.0;
        EXPECT_LT((ctx.influence(top) - lim).norm(), 1e-6 * peak) << a;
    }
}

TEST(Influence, BoundednessDichotomyForPoisson) {
    const auto d = poisson_model_one();
    for (Eigen::Index i0 : {0, 19}) {
        const double mu = std::exp(d.spec.X.row(i0).dot(d.beta));
        const int top = static_cast<int>(std::ceil(10 * mu + 100));
        for (double a : {0.0, 0.25, 0.5, 1.0}) {
            InfluenceContext ctx(d.spec, d.beta, a, i0);
            const auto lim = asymptote(d.spec, d.beta, a, i0);
            double best = 0.0;
            int arg = 0;
            for (int t = 0; t <= top; ++t) {
                const double v = a == 0.0 ? ctx.influence(t).norm() : (ctx.influence(t) - lim).norm();
                if (v > best) best = v, arg = t;
            }
            const double end = a == 0.0 ? ctx.influence(top).norm() : (ctx.influence(top) - lim).norm();
            if (a == 0.0) {
                EXPECT_EQ(arg, top) << "linear growth, i0 " << i0;
                EXPECT_GT(end, ctx.influence(static_cast<int>(mu)).norm());
            } else {
                EXPECT_GT(arg, 0);
                EXPECT_LT(arg, top);
                EXPECT_LT(end, 1e-3 * best) << "alpha " << a << " i0 " << i0;
            }
        }
    }
}

TEST(Sensitivity, InfiniteAtAlphaZeroForCounts) {
    const auto d = poisson_model_one();
    const auto rep = influence_report(d.spec, d.beta, 0.0, 0);
    EXPECT_TRUE(std::isinf(rep.gross_error_sensitivity));
    EXPECT_TRUE(std::isinf(rep.self_standardized_sensitivity));
    EXPECT_TRUE(std::isfinite(rep.sup_norm));
}

TEST(Sensitivity, FiniteForBoundedSupportEvenAtAlphaZero) {
    const auto spec = load_preset(data_dir(), "leukemia").spec;
    const auto r = fit(spec, 0.0);
    const auto s = sensitivities(spec, r, 4);
    EXPECT_TRUE(std::isfinite(s.gross_error));
    EXPECT_TRUE(std::isfinite(s.self_standardized));
    EXPECT_GT(s.gross_error, 0.0);
    const auto rep = influence_report(spec, r.theta(), 0.0, 4);
    EXPECT_EQ(rep.grid, (std::vector<double>{0.0, 1.0}));
}

TEST(Sensitivity, StableUnderLongerGrid) {
    const auto d = poisson_model_one();
    const double mu = std::exp(d.spec.X.row(0).dot(d.beta));
    const int top = static_cast<int>(std::ceil(10 * mu + 100));
    const auto a = influence_report(d.spec, d.beta, 0.5, 0, integers(top));
    const auto b = influence_report(d.spec, d.beta, 0.5, 0, integers(2 * top));
    EXPECT_NEAR(a.gross_error_sensitivity, b.gross_error_sensitivity, 1e-6);
    EXPECT_NEAR(a.self_standardized_sensitivity, b.self_standardized_sensitivity, 1e-6);
    EXPECT_GE(a.self_standardized_sensitivity, 0.0);
}

TEST(Sensitivity, SelfStandardizedInvariantUnderColumnScaling) {
    const auto spec = load_preset(data_dir(), "aids").spec;
    auto scaled = spec;
    scaled.X.col(1) *= 0.37;
    for (double a : {0.1, 0.5}) {
        const auto r = fit(spec, a), s = fit(scaled, a);
        const auto grid = integers(500);
        const double x = influence_report(spec, r.theta(), a, 5, grid).self_standardized_sensitivity;
        const double y = influence_report(scaled, s.theta(), a, 5, grid).self_standardized_sensitivity;
        EXPECT_NEAR(x, y, 1e-8 * x) << a;
    }
}

TEST(Sensitivity, CenteringTermIsTheWeightedScore) {
    for (double mu : {0.5, 4.0, 30.0}) {
        for (double a : {0.25, 1.0}) {
            const auto g = gamma_set(FamilyDescriptor::poisson(), std::log(mu), 1.0, a);
            double s = 0.0;
            for (int t = 0; t <= 600; ++t) {
                s += std::pow(density(FamilyDescriptor::poisson(), t, std::log(mu)), 1 + a) * (t - mu);
            }
            EXPECT_NEAR(s - g.gamma1, 0.0, 1e-12 * (1 + mu));
        }
    }
}

TEST(Influence, DirectionOutOfRangeThrows) {
    const auto d = poisson_model_one();
    EXPECT_THROW(InfluenceContext(d.spec, d.beta, 0.5, 50), InputError);
}

TEST(InfluenceExport, LayoutAndRoundTrip) {
    const auto d = poisson_model_one();
    const std::vector<double> alphas{0.0, 0.1, 0.25, 0.5, 1.0};
    const std::vector<Eigen::VectorXd> thetas(alphas.size(), d.beta);
    const auto grid = integers(60);
    const auto rows = influence_grid_export(d.spec, alphas, thetas, {1, 20}, grid);
    EXPECT_EQ(rows.size(), alphas.size() * 2 * grid.size() * 2);
    EXPECT_EQ(rows.front().i0, 1);
    EXPECT_EQ(rows.back().i0, 20);
    const auto back = parse_influence_csv(influence_csv(rows));
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        EXPECT_EQ(back[k].alpha, rows[k].alpha);
        EXPECT_EQ(back[k].i0, rows[k].i0);
        EXPECT_EQ(back[k].t, rows[k].t);
        EXPECT_EQ(back[k].coef, rows[k].coef);
        EXPECT_EQ(back[k].value, rows[k].value);
    }
    EXPECT_EQ(influence_csv(back), influence_csv(rows));
}

TEST(InfluenceExport, EmptyAlphaListGivesEmptyTable) {
    const auto d = poisson_model_one();
    EXPECT_TRUE(influence_grid_export(d.spec, {}, {}, {1}, integers(5)).empty());
    EXPECT_EQ(influence_csv({}), "alpha,i0,t,coef,if_value\n");
    EXPECT_THROW(influence_grid_export(d.spec, {0.5}, {}, {1}, integers(5)), InputError);
}
