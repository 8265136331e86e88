#pragma once

// Monte Carlo study of the relative efficiency of the MDPDE against the MLE
// for fixed-design Poisson and logistic regressions.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mdpde/asymptotics.hpp"
#include "mdpde/data.hpp"
#include "mdpde/errors.hpp"
#include "mdpde/families.hpp"
#include "mdpde/model.hpp"
#include "mdpde/solver.hpp"

namespace mdpde {

using CovariateRule = std::function<Eigen::VectorXd(int /*i, 1-based*/)>;

struct SimScenario {
    FamilyKind family = FamilyKind::Poisson;
    std::string case_id = "I";
    int n = 50;
    Eigen::VectorXd beta_true;
    std::string covariate_label;
    CovariateRule covariates;
    std::vector<double> alpha_grid{0.0, 0.01, 0.1, 0.25, 0.4, 0.5, 0.7, 1.0};
    int replications = 1000;
    std::uint64_t seed = 42;
    int threads = 1;
    double max_failure_rate = 0.01;
    SolverOptions solver{};
};

struct SimCell {
    std::string coef;
    double alpha = 0.0;
    double mean_re = 0.0;
    double mc_se = 0.0;
};

struct SimResult {
    std::string family;
    std::string case_id;
    int n = 0;
    int replications = 0;
    int failures = 0;
    std::vector<double> alpha_grid;
    std::vector<std::string> coefs;
    std::vector<SimCell> cells;  // coefficient-major, alpha-minor
    double xtx_condition = 0.0;

    const SimCell& cell(std::size_t coef, std::size_t alpha) const { return cells.at(coef * alpha_grid.size() + alpha); }
};

// ---------------------------------------------------------------------------
// Published cases.

inline CovariateRule covariate_rule(const std::string& label) {
    if (label == "1,sqrt(i)") return [](int i) { return Eigen::Vector2d(1.0, std::sqrt(i)).eval(); };
    if (label == "1,1/i") return [](int i) { return Eigen::Vector2d(1.0, 1.0 / i).eval(); };
    if (label == "1,sqrt(i),1/i^2") {
        return [](int i) { return Eigen::Vector3d(1.0, std::sqrt(i), 1.0 / (double(i) * i)).eval(); };
    }
    if (label == "1,1/i,1/i^2") return [](int i) { return Eigen::Vector3d(1.0, 1.0 / i, 1.0 / (double(i) * i)).eval(); };
    if (label == "1,1/i,1/i") return [](int i) { return Eigen::Vector3d(1.0, 1.0 / i, 1.0 / i).eval(); };
    throw InputError("unknown covariate rule '" + label + "'");
}

/// Case definitions I..VI.  `tabulated` swaps sqrt(i) for 1/i in the three-
/// coefficient cases V and VI (the design the printed tables agree with).
inline SimScenario published_case(FamilyKind family, const std::string& case_id, int n, bool tabulated = false) {
    SimScenario s;
    s.family = family;
    s.case_id = case_id;
    s.n = n;
    const bool pois = family == FamilyKind::Poisson;
    if (!pois && family != FamilyKind::Bernoulli) throw InputError("simulation supports poisson and logistic only");
    const std::string three = tabulated ? "1,1/i,1/i^2" : "1,sqrt(i),1/i^2";
    if (case_id == "I") {
        s.covariate_label = "1,sqrt(i)";
        s.beta_true = pois ? Eigen::Vector2d(1, 1) : Eigen::Vector2d(0.1, 0.1);
    } else if (case_id == "II") {
        s.covariate_label = "1,sqrt(i)";
        s.beta_true = pois ? Eigen::Vector2d(1, 0.5) : Eigen::Vector2d(0.001, 0.0001);
    } else if (case_id == "III") {
        s.covariate_label = "1,1/i";
        s.beta_true = Eigen::Vector2d(1, 1);
    } else if (case_id == "IV") {
        s.covariate_label = "1,1/i";
        s.beta_true = pois ? Eigen::Vector2d(1, 0.5) : Eigen::Vector2d(0.1, 0.1);
    } else if (case_id == "V") {
        s.covariate_label = three;
        s.beta_true = pois ? Eigen::Vector3d(1, 1, 1) : Eigen::Vector3d(0.1, 0.1, 0.1);
    } else if (case_id == "VI") {
        s.covariate_label = three;
        s.beta_true = pois ? Eigen::Vector3d(2, 1, 0.5) : Eigen::Vector3d(0.01, 0.001, 0.0001);
    } else {
        throw InputError("unknown case '" + case_id + "'");
    }
    s.covariates = covariate_rule(s.covariate_label);
    return s;
}

inline Eigen::MatrixXd design_matrix(const CovariateRule& rule, int n) {
    const Eigen::VectorXd first = rule(1);
    Eigen::MatrixXd X(n, first.size());
    for (int i = 1; i <= n; ++i) X.row(i - 1) = rule(i).transpose();
    return X;
}

// ---------------------------------------------------------------------------

namespace detail {

/// Independent stream per (seed, replication).
inline std::mt19937_64 replication_engine(std::uint64_t seed, std::uint64_t rep) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32), 0x4d445044u};
    return std::mt19937_64(seq);
}

/// Pairwise summation, deterministic for a fixed input order.
inline double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

struct RepOutcome {
    bool ok = false;
    Eigen::MatrixXd re;  // p x alphas
};

inline RepOutcome run_replication(const SimScenario& s, const ModelSpec& base, int rep) {
    RepOutcome out;
    ModelSpec spec = base;
    auto eng = replication_engine(s.seed, static_cast<std::uint64_t>(rep));
    const Eigen::VectorXd eta = spec.X * s.beta_true;
    for (Eigen::Index i = 0; i < spec.n(); ++i) {
        if (s.family == FamilyKind::Poisson) {
            std::poisson_distribution<long long> d(std::exp(eta(i)));
            spec.y(i) = static_cast<double>(d(eng));
        } else {
            std::bernoulli_distribution d(expit(eta(i)));
            spec.y(i) = d(eng) ? 1.0 : 0.0;
        }
    }
    SolverOptions opt = s.solver;
    opt.throw_on_failure = true;
    try {
        const auto fits = fit_path(spec, s.alpha_grid, opt);
        std::vector<Eigen::MatrixXd> av;
        for (const auto& f : fits) {
            if (!f.has_inference()) return out;
            av.push_back(f.vcov);
        }
        out.re.resize(spec.p(), static_cast<Eigen::Index>(fits.size()));
        for (std::size_t a = 0; a < fits.size(); ++a) {
            out.re.col(static_cast<Eigen::Index>(a)) = relative_efficiency(av.front(), av[a]);
        }
        out.ok = true;
    } catch (const Error&) {
    }
    return out;
}

}  // namespace detail

/// Runs all replications and aggregates mean RE and its Monte Carlo standard
/// error per (coefficient, alpha).  Results depend only on the seed.
inline SimResult run_scenario(const SimScenario& s, const std::function<void(int)>& progress = {}) {
    if (s.replications < 1 || s.n < 2) throw InputError("scenario needs n >= 2 and at least one replication");
    if (s.alpha_grid.empty() || s.alpha_grid.front() != 0.0) throw InputError("alpha grid must start at 0");
    ModelSpec base;
    base.family = s.family == FamilyKind::Poisson ? FamilyDescriptor::poisson() : FamilyDescriptor::bernoulli();
    base.X = design_matrix(s.covariates, s.n);
    base.y = Eigen::VectorXd::Zero(s.n);
    if (base.X.cols() != s.beta_true.size()) throw InputError("beta_true does not match the covariate rule");
    if (column_rank(base.X) < base.X.cols()) throw InputError("design matrix is rank deficient");

    std::vector<detail::RepOutcome> outcomes(static_cast<std::size_t>(s.replications));
    const int threads = std::max(1, std::min(s.threads, s.replications));
    if (threads == 1) {
        for (int r = 0; r < s.replications; ++r) {
            outcomes[static_cast<std::size_t>(r)] = detail::run_replication(s, base, r);
            if (progress) progress(r + 1);
        }
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                for (int r = t; r < s.replications; r += threads) {
                    outcomes[static_cast<std::size_t>(r)] = detail::run_replication(s, base, r);
                }
            });
        }
        for (auto& th : pool) th.join();
        if (progress) progress(s.replications);
    }

    SimResult res;
    res.family = s.family == FamilyKind::Poisson ? "poisson" : "logistic";
    res.case_id = s.case_id;
    res.n = s.n;
    res.replications = s.replications;
    res.alpha_grid = s.alpha_grid;
    {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(base.X.transpose() * base.X);
        const auto& sv = svd.singularValues();
        res.xtx_condition = sv(0) / sv(sv.size() - 1);
    }
    for (Eigen::Index j = 0; j < base.X.cols(); ++j) res.coefs.push_back("beta" + std::to_string(j));
    std::vector<const detail::RepOutcome*> good;
    for (const auto& o : outcomes) {
        if (o.ok) good.push_back(&o);
    }
    res.failures = s.replications - static_cast<int>(good.size());
    if (good.empty() || res.failures > s.max_failure_rate * s.replications) {
        std::ostringstream os;
        os << "scenario " << res.family << " case " << s.case_id << " n=" << s.n << ": " << res.failures << " of "
           << s.replications << " replications failed";
        throw ConvergenceError(os.str(), {}, static_cast<double>(res.failures));
    }
    std::vector<double> buf(good.size());
    for (std::size_t j = 0; j < res.coefs.size(); ++j) {
        for (std::size_t a = 0; a < s.alpha_grid.size(); ++a) {
            for (std::size_t k = 0; k < good.size(); ++k) {
                buf[k] = good[k]->re(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(a));
            }
            const double m = detail::pairwise_sum(buf.data(), buf.size()) / static_cast<double>(buf.size());
            for (auto& v : buf) v = (v - m) * (v - m);
            const double var = buf.size() > 1
                                   ? detail::pairwise_sum(buf.data(), buf.size()) / static_cast<double>(buf.size() - 1)
                                   : 0.0;
            res.cells.push_back({res.coefs[j], s.alpha_grid[a], m, std::sqrt(var / static_cast<double>(buf.size()))});
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Rendering and persistence.

inline std::string format_fixed(double v, int decimals) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(decimals) << v;
    return os.str();
}

/// Case x coefficient rows, alpha columns, one decimal.
inline std::string table_render(const std::vector<SimResult>& results,
                                const std::vector<double>& alphas = {0.0, 0.01, 0.1, 0.25, 0.4, 0.5, 0.7, 1.0}) {
    std::ostringstream os;
    os << "case,coefficient";
    const auto& head = results.empty() ? alphas : results.front().alpha_grid;
    for (double a : head) os << ",alpha=" << format_double(a);
    os << '\n';
    for (const auto& r : results) {
        if (r.alpha_grid != head) throw InputError("results have different alpha grids");
        for (std::size_t j = 0; j < r.coefs.size(); ++j) {
            os << r.case_id << ',' << r.coefs[j];
            for (std::size_t a = 0; a < r.alpha_grid.size(); ++a) os << ',' << format_fixed(r.cell(j, a).mean_re, 1);
            os << '\n';
        }
    }
    return os.str();
}

/// Full-precision long format: family,case,n,replications,failures,coef,alpha,mean_re,mc_se.
inline std::string sim_results_csv(const std::vector<SimResult>& results) {
    std::ostringstream os;
    os << "family,case,n,replications,failures,coef,alpha,mean_re,mc_se\n";
    for (const auto& r : results) {
        for (const auto& c : r.cells) {
            os << r.family << ',' << r.case_id << ',' << r.n << ',' << r.replications << ',' << r.failures << ','
               << c.coef << ',' << format_sig(c.alpha) << ',' << format_sig(c.mean_re) << ',' << format_sig(c.mc_se)
               << '\n';
        }
    }
    return os.str();
}

inline std::vector<SimResult> parse_sim_results(const std::string& text) {
    const auto recs = detail::parse_csv_records(text, "simulation results");
    const std::vector<std::string> header{"family", "case", "n", "replications", "failures",
                                          "coef",   "alpha", "mean_re", "mc_se"};
    if (recs.empty() || recs[0].fields != header) throw InputError("simulation results: unexpected header");
    std::vector<SimResult> out;
    for (std::size_t k = 1; k < recs.size(); ++k) {
        const auto& f = recs[k].fields;
        if (f.size() != header.size()) throw InputError("simulation results: wrong field count");
        const std::string where = "simulation results:" + std::to_string(recs[k].line);
        const int n = static_cast<int>(detail::parse_number(f[2], where));
        if (out.empty() || out.back().family != f[0] || out.back().case_id != f[1] || out.back().n != n) {
            SimResult r;
            r.family = f[0];
            r.case_id = f[1];
            r.n = n;
            r.replications = static_cast<int>(detail::parse_number(f[3], where));
            r.failures = static_cast<int>(detail::parse_number(f[4], where));
            out.push_back(r);
        }
        auto& r = out.back();
        const double alpha = detail::parse_number(f[6], where);
        if (std::find(r.coefs.begin(), r.coefs.end(), f[5]) == r.coefs.end()) r.coefs.push_back(f[5]);
        if (r.coefs.size() == 1) r.alpha_grid.push_back(alpha);
        r.cells.push_back({f[5], alpha, detail::parse_number(f[7], where), detail::parse_number(f[8], where)});
    }
    return out;
}

}  // namespace mdpde
