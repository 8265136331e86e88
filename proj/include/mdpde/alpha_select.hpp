#pragma once

// Data-driven choice of alpha: minimise the estimated mean squared error
//   ||theta_alpha - theta_pilot||^2 + trace(AV_alpha) / N
// over a grid of candidate alphas.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "mdpde/errors.hpp"
#include "mdpde/model.hpp"
#include "mdpde/solver.hpp"

namespace mdpde {

struct MseEntry {
    double alpha = 0.0;
    double bias_sq = 0.0;
    double variance_trace = 0.0;
    double mse = 0.0;
};

/// Asymptotic: variance term trace(AV) / N.
/// PerObservation: trace(AV) / N^2, the scaling the published optimum-alpha
/// table is consistent with.
enum class MseVariance { Asymptotic, PerObservation };

struct AlphaSelection {
    double pilot_alpha = 0.5;
    std::vector<double> candidate_grid;
    std::vector<MseEntry> mse_curve;
    double optimal_alpha = 0.0;
    MseVariance variance = MseVariance::PerObservation;
};

/// Raised when some candidate fits fail; carries the part of the curve that
/// could be computed.
class AlphaSelectionError : public Error {
public:
    AlphaSelectionError(const std::string& what, AlphaSelection partial, std::vector<double> failed)
        : Error(what), partial_(std::move(partial)), failed_(std::move(failed)) {}
    const AlphaSelection& partial() const noexcept { return partial_; }
    const std::vector<double>& failed_alphas() const noexcept { return failed_; }

private:
    AlphaSelection partial_;
    std::vector<double> failed_;
};

inline MseEntry estimated_mse(const FitResult& candidate, const FitResult& pilot, double variance_scale = 1.0) {
    if (!candidate.has_inference()) {
        throw InferenceError("no sandwich covariance at alpha = " + std::to_string(candidate.alpha) + ": " +
                             candidate.inference_error);
    }
    MseEntry e;
    e.alpha = candidate.alpha;
    e.bias_sq = (candidate.theta() - pilot.theta()).squaredNorm();
    e.variance_trace = variance_scale * candidate.vcov.trace();
    e.mse = e.bias_sq + e.variance_trace;
    return e;
}

/// 0, step, 2 step, ..., up to `top` (inclusive, snapped to the step).
inline std::vector<double> alpha_grid(double step = 0.05, double top = 1.0) {
    if (!(step > 0.0)) throw InputError("grid step must be positive");
    std::vector<double> g;
    const long k = std::lround(top / step);
    for (long i = 0; i <= k; ++i) g.push_back(std::round(i * step * 1e12) / 1e12);
    return g;
}

/// Fits the path over grid plus pilot by continuation, then picks the grid
/// alpha of smallest estimated MSE (ties to the smaller alpha).
inline AlphaSelection select_alpha(const ModelSpec& spec, double pilot_alpha, std::vector<double> grid,
                                   const SolverOptions& opt = {}, MseVariance variance = MseVariance::PerObservation) {
    if (grid.empty()) throw InputError("candidate grid is empty");
    for (double a : grid) {
        if (!(a >= 0.0)) throw InputError("candidate alphas must be >= 0");
    }
    if (!(pilot_alpha >= 0.0)) throw InputError("pilot alpha must be >= 0");
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::vector<double> path = grid;
    path.push_back(pilot_alpha);
    std::sort(path.begin(), path.end());
    path.erase(std::unique(path.begin(), path.end()), path.end());

    validate(spec);
    SolverOptions sopt = opt;
    sopt.throw_on_failure = true;
    std::vector<FitResult> fits(path.size());
    std::vector<bool> ok(path.size(), false);
    const FitResult* last = nullptr;
    for (std::size_t k = 0; k < path.size(); ++k) {
        try {
            if (last == nullptr || opt.cold_start) {
                fits[k] = fit(spec, path[k], sopt);
            } else {
                fits[k] = fit_from(spec, path[k], last->theta(), sopt);
                fits[k].start_source = StartSource::WarmStart;
                fits[k].warm_from = last->alpha;
            }
            ok[k] = true;
            last = &fits[k];
        } catch (const ConvergenceError&) {
        }
    }
    const auto pilot_it = std::find(path.begin(), path.end(), pilot_alpha);
    const auto pilot_k = static_cast<std::size_t>(pilot_it - path.begin());

    AlphaSelection sel;
    sel.pilot_alpha = pilot_alpha;
    sel.candidate_grid = grid;
    sel.variance = variance;
    const double scale = variance == MseVariance::PerObservation ? 1.0 / total_weight(spec) : 1.0;
    std::vector<double> failed;
    if (!ok[pilot_k]) {
        throw AlphaSelectionError("pilot fit failed at alpha = " + std::to_string(pilot_alpha), sel, {pilot_alpha});
    }
    for (std::size_t k = 0; k < path.size(); ++k) {
        if (!std::binary_search(grid.begin(), grid.end(), path[k])) continue;
        if (!ok[k] || !fits[k].has_inference()) {
            failed.push_back(path[k]);
            continue;
        }
        sel.mse_curve.push_back(estimated_mse(fits[k], fits[pilot_k], scale));
    }
    if (!sel.mse_curve.empty()) {
        const auto best = std::min_element(sel.mse_curve.begin(), sel.mse_curve.end(),
                                           [](const MseEntry& a, const MseEntry& b) { return a.mse < b.mse; });
        sel.optimal_alpha = best->alpha;
    }
    if (!failed.empty()) {
        std::ostringstream os;
        os << "alpha selection: fits failed at alpha =";
        for (double a : failed) os << ' ' << a;
        throw AlphaSelectionError(os.str(), sel, failed);
    }
    return sel;
}

}  // namespace mdpde
