#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <cstdlib>
#include <iomanip>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mdpde/alpha_select.hpp"
#include "mdpde/data.hpp"
#include "mdpde/errors.hpp"
#include "mdpde/robustness.hpp"
#include "mdpde/simulation.hpp"
#include "mdpde/solver.hpp"
#include "reproduce.hpp"
#include "run_manifest.hpp"

#ifndef MDPDE_DEFAULT_DATA_DIR
#define MDPDE_DEFAULT_DATA_DIR "data"
#endif

namespace {

using namespace mdpde;
using mdpde::cli::json;

constexpr int kUsage = 1;
constexpr int kConvergence = 2;
constexpr int kTolerance = 3;

class UsageError : public Error {
public:
    using Error::Error;
};

// Options shared by the dataset-based subcommands.
struct ModelArgs {
    std::string preset;
    std::string variant = "clean";
    std::string csv;
    std::string formula;
    std::string family;
    std::string trials;
    std::string binomial_mode = "grouped";
    bool estimate_scale = false;
};

struct SolverArgs {
    SolverOptions opt;
    std::string omega = "standard";
};

struct LoadedModel {
    ModelSpec spec;
    std::string label;
    json checksums = json::object();
};

std::string data_dir_default() {
    if (const char* env = std::getenv("MDPDE_DATA_DIR")) return env;
    return MDPDE_DEFAULT_DATA_DIR;
}

int thread_default() {
    if (const char* env = std::getenv("MDPDE_THREADS")) {
        const int t = std::atoi(env);
        if (t > 0) return t;
    }
    return 1;
}

void add_model_options(CLI::App* cmd, ModelArgs& m) {
    cmd->add_option("--preset", m.preset, "bundled dataset (see `datasets`)");
    cmd->add_option("--variant", m.variant, "dataset variant, e.g. one_outlier");
    cmd->add_option("--csv", m.csv, "CSV file with a header row");
    cmd->add_option("--formula", m.formula, "model formula, e.g. \"y ~ 1 + x + log(z)\"");
    cmd->add_option("--family", m.family, "poisson | logistic | binomial | gaussian");
    cmd->add_option("--trials", m.trials, "trials column (binomial)");
    cmd->add_option("--binomial-mode", m.binomial_mode, "grouped | replicated")
        ->check(CLI::IsMember({"grouped", "replicated"}));
    cmd->add_flag("--estimate-scale", m.estimate_scale, "estimate the Gaussian scale jointly");
}

void add_solver_options(CLI::App* cmd, SolverArgs& s) {
    cmd->add_option("--max-iter", s.opt.max_iter, "maximum solver iterations")->check(CLI::PositiveNumber);
    cmd->add_option("--grad-tol", s.opt.grad_tol, "gradient tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--step-tol", s.opt.step_tol, "step tolerance")->check(CLI::PositiveNumber);
    cmd->add_flag("--cold-start", s.opt.cold_start, "fit every alpha from the MLE instead of warm starts");
    cmd->add_option("--omega", s.omega, "standard | published-logistic")
        ->check(CLI::IsMember({"standard", "published-logistic"}));
}

SolverOptions solver_options(const SolverArgs& s) {
    SolverOptions o = s.opt;
    o.omega = s.omega == "published-logistic" ? OmegaConvention::PublishedLogistic : OmegaConvention::Standard;
    return o;
}

LoadedModel load_model(const ModelArgs& m, const std::string& data_dir) {
    LoadedModel out;
    if (!m.preset.empty() == !m.csv.empty()) throw UsageError("give exactly one of --preset or --csv");
    if (!m.preset.empty()) {
        const auto entries = load_manifest(data_dir);
        const auto& e = find_entry(entries, m.preset);
        out.checksums[e.name] = cli::verified_checksum(e, data_dir);
        auto pre = load_preset(data_dir, m.preset, m.variant);
        out.spec = std::move(pre.spec);
        out.label = m.preset + "/" + m.variant;
        return out;
    }
    if (m.formula.empty() || m.family.empty()) throw UsageError("--csv needs --formula and --family");
    const auto ds = load_csv(m.csv);
    out.checksums[m.csv] = cli::sha256_file(m.csv);
    FormulaSpec f = parse_formula(m.formula);
    f.family = family_from_name(m.family);
    f.trials_column = m.trials;
    f.binomial_mode = m.binomial_mode == "replicated" ? BinomialMode::ReplicatedBernoulli : BinomialMode::Grouped;
    out.spec = build_model(ds, f);
    out.spec.estimate_scale = m.estimate_scale;
    out.label = m.csv;
    return out;
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        double v = 0.0;
        try {
            v = detail::parse_number(detail::trim(tok), what);
        } catch (const InputError& e) {
            throw UsageError(e.what());
        }
        if (!std::isfinite(v)) throw UsageError(what + " must be finite, got '" + tok + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError("empty " + what);
    return out;
}

std::vector<double> parse_alphas(const std::string& text) {
    auto out = parse_numbers(text, "alpha list");
    for (double a : out) {
        if (a < 0.0) throw UsageError("alpha must be >= 0, got " + format_double(a));
    }
    return out;
}

std::vector<Eigen::Index> parse_indices(const std::string& text) {
    std::vector<Eigen::Index> out;
    for (double v : parse_numbers(text, "direction list")) {
        if (v < 1.0 || v != std::floor(v)) throw UsageError("directions are 1-based integers");
        out.push_back(static_cast<Eigen::Index>(v));
    }
    return out;
}

void emit(const std::string& path, const std::string& text, const cli::RunManifest& manifest) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    cli::write_text(path, text);
    cli::write_text(path + ".manifest.json", manifest.to_json().dump(2) + "\n");
}

std::string fixed4(double v) { return std::isfinite(v) ? format_fixed(v, 4) : (std::isnan(v) ? "NA" : "inf"); }

// ---------------------------------------------------------------------------

struct FitArgs {
    ModelArgs model;
    SolverArgs solver;
    std::string alphas;
    std::string reference = "t";
    std::string format = "json";
    std::string output;
};

json fit_json(const ModelSpec& spec, const FitResult& f, ReferenceDistribution ref) {
    json j;
    j["alpha"] = f.alpha;
    j["converged"] = f.converged;
    j["beta"] = std::vector<double>(f.beta.data(), f.beta.data() + f.beta.size());
    j["phi"] = f.phi ? cli::number(*f.phi) : json(nullptr);
    j["objective"] = cli::number(f.objective);
    j["grad_norm"] = cli::number(f.grad_norm);
    j["iterations"] = f.iterations;
    j["start_source"] = f.start_source == StartSource::WarmStart ? "warm" : "cold";
    j["warm_from"] = f.warm_from ? json(*f.warm_from) : json(nullptr);
    if (f.has_inference()) {
        const auto w = wald_table(spec, f, ref);
        json se = json::array(), t = json::array(), p = json::array();
        for (const auto& r : w.rows) {
            se.push_back(r.se);
            t.push_back(r.statistic);
            p.push_back(r.p_value);
        }
        j["se"] = se;
        j["t"] = t;
        j["p"] = p;
        json cov = json::array();
        for (Eigen::Index r = 0; r < f.vcov.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < f.vcov.cols(); ++c) row.push_back(f.vcov(r, c));
            cov.push_back(row);
        }
        j["vcov"] = cov;
        j["inference_error"] = nullptr;
    } else {
        j["se"] = nullptr;
        j["t"] = nullptr;
        j["p"] = nullptr;
        j["vcov"] = nullptr;
        j["inference_error"] = f.inference_error;
    }
    return j;
}

std::string fit_table(const ModelSpec& spec, const std::vector<FitResult>& fits, ReferenceDistribution ref) {
    std::ostringstream os;
    const auto names = parameter_names(spec);
    for (const auto& f : fits) {
        os << "alpha = " << format_double(f.alpha) << (f.converged ? "" : "  (NOT CONVERGED)") << '\n';
        os << std::left << std::setw(16) << "coefficient" << std::right << std::setw(12) << "estimate" << std::setw(12)
           << "se" << std::setw(12) << "t" << std::setw(12) << "p" << '\n';
        const auto theta = f.theta();
        WaldTable w;
        if (f.has_inference()) w = wald_table(spec, f, ref);
        for (std::size_t j = 0; j < names.size(); ++j) {
            os << std::left << std::setw(16) << names[j] << std::right << std::setw(12)
               << fixed4(theta(static_cast<Eigen::Index>(j)));
            if (f.has_inference()) {
                os << std::setw(12) << fixed4(w.rows[j].se) << std::setw(12) << fixed4(w.rows[j].statistic)
                   << std::setw(12) << fixed4(w.rows[j].p_value);
            } else {
                os << std::setw(12) << "NA" << std::setw(12) << "NA" << std::setw(12) << "NA";
            }
            os << '\n';
        }
        if (!f.has_inference()) os << "  no covariance: " << f.inference_error << '\n';
        os << '\n';
    }
    return os.str();
}

int run_fit(const FitArgs& a, const std::string& data_dir, cli::RunManifest& manifest) {
    const auto alphas = parse_alphas(a.alphas);
    auto model = load_model(a.model, data_dir);
    SolverOptions opt = solver_options(a.solver);
    opt.throw_on_failure = false;
    manifest.solver = opt;
    manifest.datasets = model.checksums;
    const auto ref = a.reference == "normal" ? ReferenceDistribution::Normal : ReferenceDistribution::StudentT;

    std::vector<double> order = alphas;
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());
    validate(model.spec);
    if (column_rank(model.spec.X) < model.spec.p()) throw InputError("design matrix is rank deficient");
    std::vector<FitResult> sorted;
    const FitResult* last = nullptr;
    for (double al : order) {
        FitResult r = last == nullptr || opt.cold_start ? fit(model.spec, al, opt)
                                                        : fit_from(model.spec, al, last->theta(), opt);
        if (last != nullptr && !opt.cold_start) {
            r.start_source = StartSource::WarmStart;
            r.warm_from = last->alpha;
        }
        sorted.push_back(std::move(r));
        if (sorted.back().converged) last = &sorted.back();
    }
    std::vector<FitResult> fits;
    for (double al : alphas) fits.push_back(sorted[static_cast<std::size_t>(
        std::find(order.begin(), order.end(), al) - order.begin())]);
    const bool all_ok =
        std::all_of(fits.begin(), fits.end(), [](const FitResult& f) { return f.converged; });

    if (a.format == "table") {
        emit(a.output, fit_table(model.spec, fits, ref), manifest);
    } else {
        json j;
        j["manifest"] = manifest.to_json();
        j["dataset"] = model.label;
        j["family"] = model.spec.family.kind == FamilyKind::Binomial ? "binomial" : model.spec.family.name();
        j["n"] = model.spec.n();
        j["p"] = model.spec.p();
        j["coef_names"] = parameter_names(model.spec);
        j["reference"] = a.reference == "normal" ? "normal" : "t";
        j["df"] = static_cast<double>(model.spec.n() - model.spec.p());
        j["omega"] = cli::omega_name(opt.omega);
        j["fits"] = json::array();
        for (const auto& f : fits) j["fits"].push_back(fit_json(model.spec, f, ref));
        const std::string text = j.dump(2) + "\n";
        if (a.output.empty() || a.output == "-") {
            std::cout << text;
        } else {
            cli::write_text(a.output, text);
        }
    }
    if (!all_ok) {
        for (const auto& f : fits) {
            if (!f.converged) std::cerr << "error: no convergence at alpha = " << format_double(f.alpha) << '\n';
        }
        return kConvergence;
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct ReproduceArgs {
    std::vector<std::string> ids;
    int reps = 1000;
    std::uint64_t seed = 42;
    int threads = 1;
    std::string out_dir;
    bool quiet = false;
};

int run_reproduce(const ReproduceArgs& a, const std::string& data_dir, cli::RunManifest& manifest) {
    std::vector<std::string> ids;
    for (const auto& id : a.ids) {
        if (id == "all") {
            ids = repro::table_ids();
            break;
        }
        if (!repro::is_table_id(id)) throw UsageError("unknown table id '" + id + "' (T1..T11 or all)");
        ids.push_back(id);
    }
    repro::ReproOptions opt;
    opt.data_dir = data_dir;
    opt.replications = a.reps;
    opt.seed = a.seed;
    opt.threads = a.threads;
    if (!a.quiet) opt.progress = [](const std::string& s) { std::cerr << s << '\n'; };
    for (const auto& e : load_manifest(data_dir)) manifest.datasets[e.name] = cli::verified_checksum(e, data_dir);
    manifest.seed = a.seed;
    if (!a.out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(a.out_dir, ec);
        if (ec) throw InputError("cannot create " + a.out_dir + ": " + ec.message());
    }
    bool all = true;
    for (const auto& id : ids) {
        const auto rep = repro::reproduce(id, opt);
        std::cout << repro::report_text(rep);
        if (!a.out_dir.empty()) {
            cli::RunManifest m = manifest;
            emit(a.out_dir + "/" + id + "_diff.csv", repro::report_csv(rep), m);
            if (!rep.simulations.empty()) {
                emit(a.out_dir + "/" + id + "_table.csv", table_render(rep.simulations), m);
                emit(a.out_dir + "/" + id + "_results.csv", sim_results_csv(rep.simulations), m);
            }
        }
        all = all && rep.passed;
    }
    return all ? 0 : kTolerance;
}

// ---------------------------------------------------------------------------

struct InfluenceArgs {
    ModelArgs model;
    SolverArgs solver;
    std::string design;
    int n = 50;
    std::string covariates;
    std::string beta;
    std::string i0 = "1";
    std::string alphas = "0,0.1,0.25,0.5,1";
    int tmax = -1;
    std::string output;
    std::string summary;
};

int run_influence(const InfluenceArgs& a, const std::string& data_dir, cli::RunManifest& manifest) {
    const auto alphas = parse_alphas(a.alphas);
    const auto dirs = parse_indices(a.i0);
    ModelSpec spec;
    std::vector<Eigen::VectorXd> thetas;
    if (!a.design.empty() || !a.covariates.empty()) {
        if (!a.model.preset.empty() || !a.model.csv.empty()) throw UsageError("give either a design or a dataset");
        if (a.n < 2) throw UsageError("--n must be at least 2");
        SimScenario sc;
        if (!a.design.empty()) {
            const std::string prefix = "poisson-case-";
            if (a.design.rfind(prefix, 0) != 0) throw UsageError("unknown model '" + a.design + "'");
            sc = published_case(FamilyKind::Poisson, a.design.substr(prefix.size()), a.n);
        }
        if (!a.covariates.empty()) {
            sc.covariates = covariate_rule(a.covariates);
            sc.covariate_label = a.covariates;
            sc.beta_true = Eigen::VectorXd::Ones(sc.covariates(1).size());
        }
        if (!a.beta.empty()) {
            const auto b = parse_numbers(a.beta, "beta");
            sc.beta_true = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
        }
        spec.family = FamilyDescriptor::poisson();
        spec.X = design_matrix(sc.covariates, a.n);
        spec.y = Eigen::VectorXd::Zero(a.n);
        for (Eigen::Index j = 0; j < spec.X.cols(); ++j) spec.coef_names.push_back("beta" + std::to_string(j));
        if (spec.X.cols() != sc.beta_true.size()) throw UsageError("--beta length does not match the covariates");
        if (column_rank(spec.X) < spec.X.cols()) throw InputError("design matrix is rank deficient");
        for (std::size_t k = 0; k < alphas.size(); ++k) thetas.push_back(sc.beta_true);
    } else {
        auto model = load_model(a.model, data_dir);
        spec = std::move(model.spec);
        manifest.datasets = model.checksums;
        SolverOptions opt = solver_options(a.solver);
        manifest.solver = opt;
        std::vector<double> order = alphas;
        std::sort(order.begin(), order.end());
        if (order != alphas) throw UsageError("--alphas must be ascending when fitting a dataset");
        for (const auto& f : fit_path(spec, alphas, opt)) thetas.push_back(f.theta());
    }
    for (auto d : dirs) {
        if (d > spec.n()) throw UsageError("direction " + std::to_string(d) + " exceeds n = " + std::to_string(spec.n()));
    }
    std::vector<InfluenceRow> rows;
    std::ostringstream sum;
    sum << "alpha,i0,gross_error_sensitivity,self_standardized_sensitivity,argmax_t\n";
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        for (auto d : dirs) {
            std::vector<double> grid;
            if (a.tmax >= 0) {
                for (int t = 0; t <= a.tmax; ++t) grid.push_back(t);
            } else {
                grid = contamination_grid(spec, thetas[k], d - 1);
            }
            const auto part = influence_grid_export(spec, {alphas[k]}, {thetas[k]}, {d}, grid);
            rows.insert(rows.end(), part.begin(), part.end());
            const auto rep = influence_report(spec, thetas[k], alphas[k], d - 1, grid);
            sum << format_sig(alphas[k]) << ',' << d << ',' << format_sig(rep.gross_error_sensitivity) << ','
                << format_sig(rep.self_standardized_sensitivity) << ','
                << format_sig(grid[static_cast<std::size_t>(rep.argmax)]) << '\n';
        }
    }
    emit(a.output, influence_csv(rows), manifest);
    if (!a.summary.empty()) emit(a.summary, sum.str(), manifest);
    return 0;
}

// ---------------------------------------------------------------------------

struct SelectArgs {
    ModelArgs model;
    SolverArgs solver;
    double pilot = 0.5;
    double step = 0.05;
    double top = 1.0;
    std::string variance = "per-observation";
    std::string output;
};

int run_select(const SelectArgs& a, const std::string& data_dir, cli::RunManifest& manifest) {
    if (!(a.pilot >= 0.0)) throw UsageError("--pilot must be >= 0");
    auto model = load_model(a.model, data_dir);
    const SolverOptions opt = solver_options(a.solver);
    manifest.solver = opt;
    manifest.datasets = model.checksums;
    const auto var = a.variance == "per-observation" ? MseVariance::PerObservation : MseVariance::Asymptotic;
    AlphaSelection sel;
    int code = 0;
    try {
        sel = select_alpha(model.spec, a.pilot, alpha_grid(a.step, a.top), opt, var);
    } catch (const AlphaSelectionError& e) {
        sel = e.partial();
        std::cerr << "error: " << e.what() << '\n';
        code = kConvergence;
    }
    std::ostringstream os;
    os << "alpha,bias_sq,variance_trace,mse,optimal\n";
    for (const auto& e : sel.mse_curve) {
        os << format_sig(e.alpha) << ',' << format_sig(e.bias_sq) << ',' << format_sig(e.variance_trace) << ','
           << format_sig(e.mse) << ',' << (code == 0 && e.alpha == sel.optimal_alpha ? 1 : 0) << '\n';
    }
    emit(a.output, os.str(), manifest);
    if (code == 0) std::cerr << "optimal alpha: " << format_double(sel.optimal_alpha) << '\n';
    return code;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    SolverArgs solver;
    std::string family = "poisson";
    std::string case_id = "I";
    int n = 50;
    int reps = 1000;
    std::uint64_t seed = 42;
    int threads = 1;
    bool tabulated = false;
    std::string alphas = "0,0.01,0.1,0.25,0.4,0.5,0.7,1";
    std::string output;
    std::string results;
};

int run_simulate(const SimulateArgs& a, cli::RunManifest& manifest) {
    auto sc = published_case(a.family == "poisson" ? FamilyKind::Poisson : FamilyKind::Bernoulli, a.case_id, a.n,
                             a.tabulated);
    sc.replications = a.reps;
    sc.seed = a.seed;
    sc.threads = a.threads;
    sc.alpha_grid = parse_alphas(a.alphas);
    if (!std::is_sorted(sc.alpha_grid.begin(), sc.alpha_grid.end())) throw UsageError("--alphas must be ascending");
    sc.solver = solver_options(a.solver);
    manifest.solver = sc.solver;
    manifest.seed = a.seed;
    const int step = std::max(1, a.reps / 20);
    const auto res = run_scenario(sc, [&](int done) {
        if (done % step == 0 || done == a.reps) std::cerr << "\rreplication " << done << '/' << a.reps << std::flush;
    });
    std::cerr << "\n" << res.failures << " failed replications; cond(X'X) = " << format_sig(res.xtx_condition, 6)
              << '\n';
    emit(a.output, table_render({res}), manifest);
    if (!a.results.empty()) emit(a.results, sim_results_csv({res}), manifest);
    return 0;
}

// ---------------------------------------------------------------------------

int run_datasets(const std::string& show, const std::string& variant, const std::string& data_dir) {
    const auto entries = load_manifest(data_dir);
    if (!show.empty()) {
        const auto& e = find_entry(entries, show);
        cli::verified_checksum(e, data_dir);
        std::cout << to_csv(dataset_variant(load_entry(e, data_dir), show, variant));
        return 0;
    }
    std::cout << std::left << std::setw(10) << "name" << std::setw(6) << "rows" << std::setw(10) << "family"
              << std::setw(10) << "checksum" << "variants / formula\n";
    for (const auto& e : entries) {
        const auto ds = load_entry(e, data_dir);
        std::string status = "ok";
        if (cli::sha256_file(data_dir + "/" + e.path) != e.sha256) status = "DRIFT";
        std::string variants;
        for (const auto& v : dataset_variant_names(e.name)) variants += (variants.empty() ? "" : ",") + v;
        std::cout << std::left << std::setw(10) << e.name << std::setw(6) << ds.rows() << std::setw(10) << e.family
                  << std::setw(10) << status << variants << "\n" << std::setw(36) << "" << e.formula << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Minimum density power divergence estimation for generalized linear models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", MDPDE_VERSION);
    std::string data_dir = data_dir_default();
    app.add_option("--data-dir", data_dir, "directory holding manifest.csv and the bundled datasets");

    FitArgs fa;
    auto* fit_cmd = app.add_subcommand("fit", "fit the MDPDE at one or more alphas");
    add_model_options(fit_cmd, fa.model);
    add_solver_options(fit_cmd, fa.solver);
    fit_cmd->add_option("--alpha", fa.alphas, "comma-separated alphas, e.g. 0,0.1,0.5")->required();
    fit_cmd->add_option("--reference", fa.reference, "t | normal")->check(CLI::IsMember({"t", "normal"}));
    fit_cmd->add_option("--format", fa.format, "json | table")->check(CLI::IsMember({"json", "table"}));
    fit_cmd->add_option("-o,--output", fa.output, "output file (default stdout)");

    ReproduceArgs ra;
    ra.threads = thread_default();
    auto* rep_cmd = app.add_subcommand("reproduce", "regenerate a published table and diff it");
    rep_cmd->add_option("table", ra.ids, "T1..T11 or all")->required();
    rep_cmd->add_option("--reps", ra.reps, "Monte Carlo replications (T1-T4)")->check(CLI::PositiveNumber);
    rep_cmd->add_option("--seed", ra.seed, "Monte Carlo seed");
    rep_cmd->add_option("--threads", ra.threads, "worker threads (default MDPDE_THREADS or 1)")
        ->check(CLI::PositiveNumber);
    rep_cmd->add_option("--out-dir", ra.out_dir, "write cell diffs and regenerated tables here");
    rep_cmd->add_flag("-q,--quiet", ra.quiet, "no progress messages");

    InfluenceArgs ia;
    auto* inf_cmd = app.add_subcommand("influence", "export influence functions and sensitivities");
    add_model_options(inf_cmd, ia.model);
    add_solver_options(inf_cmd, ia.solver);
    inf_cmd->add_option("--model", ia.design, "poisson-case-I .. poisson-case-VI (parameters at the true beta)");
    inf_cmd->add_option("--covariates", ia.covariates,
                        "custom Poisson design: 1,sqrt(i) | 1,1/i | 1,1/i,1/i^2 | 1,sqrt(i),1/i^2 | 1,1/i,1/i");
    inf_cmd->add_option("--beta", ia.beta, "true beta for a design (default all ones for --covariates)");
    inf_cmd->add_option("--n", ia.n, "design size");
    inf_cmd->add_option("--i0", ia.i0, "comma-separated 1-based directions");
    inf_cmd->add_option("--alphas", ia.alphas, "comma-separated alphas");
    inf_cmd->add_option("--tmax", ia.tmax, "contamination points 0..tmax (default: family grid)");
    inf_cmd->add_option("-o,--output", ia.output, "CSV output (default stdout)");
    inf_cmd->add_option("--summary", ia.summary, "CSV of sensitivities per (alpha, i0)");

    SelectArgs sa;
    auto* sel_cmd = app.add_subcommand("select-alpha", "choose alpha by minimum estimated MSE");
    add_model_options(sel_cmd, sa.model);
    add_solver_options(sel_cmd, sa.solver);
    sel_cmd->add_option("--pilot", sa.pilot, "pilot alpha");
    sel_cmd->add_option("--grid-step", sa.step, "grid step")->check(CLI::PositiveNumber);
    sel_cmd->add_option("--grid-max", sa.top, "largest grid alpha")->check(CLI::NonNegativeNumber);
    sel_cmd->add_option("--variance", sa.variance, "per-observation | asymptotic")
        ->check(CLI::IsMember({"asymptotic", "per-observation"}));
    sel_cmd->add_option("-o,--output", sa.output, "CSV output (default stdout)");

    SimulateArgs ma;
    ma.threads = thread_default();
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo relative efficiency for one case");
    add_solver_options(sim_cmd, ma.solver);
    sim_cmd->add_option("--family", ma.family, "poisson | logistic")->check(CLI::IsMember({"poisson", "logistic"}));
    sim_cmd->add_option("--case", ma.case_id, "I .. VI")->check(CLI::IsMember({"I", "II", "III", "IV", "V", "VI"}));
    sim_cmd->add_option("--n", ma.n, "sample size")->check(CLI::Range(2, 1000000));
    sim_cmd->add_option("--reps", ma.reps, "replications")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", ma.seed, "seed");
    sim_cmd->add_option("--threads", ma.threads, "worker threads (default MDPDE_THREADS or 1)")
        ->check(CLI::PositiveNumber);
    sim_cmd->add_flag("--tabulated-design", ma.tabulated, "cases V/VI with covariates (1, 1/i, 1/i^2)");
    sim_cmd->add_option("--alphas", ma.alphas, "comma-separated ascending alphas starting at 0");
    sim_cmd->add_option("-o,--output", ma.output, "table CSV (default stdout)");
    sim_cmd->add_option("--results", ma.results, "full-precision long-format results CSV");

    std::string show, show_variant = "clean";
    auto* ds_cmd = app.add_subcommand("datasets", "list bundled datasets or print one");
    ds_cmd->add_option("--show", show, "print this dataset as CSV");
    ds_cmd->add_option("--variant", show_variant, "variant to print");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    cli::RunManifest manifest;
    manifest.command_line.assign(argv, argv + argc);
    try {
        if (*fit_cmd) return run_fit(fa, data_dir, manifest);
        if (*rep_cmd) return run_reproduce(ra, data_dir, manifest);
        if (*inf_cmd) return run_influence(ia, data_dir, manifest);
        if (*sel_cmd) return run_select(sa, data_dir, manifest);
        if (*sim_cmd) return run_simulate(ma, manifest);
        if (*ds_cmd) return run_datasets(show, show_variant, data_dir);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kUsage;
    } catch (const UnsupportedOperation& e) {
        std::cerr << "unsupported: " << e.what() << '\n';
        return kUsage;
    } catch (const ConvergenceError& e) {
        std::cerr << "convergence error: " << e.what() << '\n';
        return kConvergence;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConvergence;
    }
    return kUsage;
}
