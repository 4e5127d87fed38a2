#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>
#include <vector>

#include <Eigen/Eigenvalues>

#include "smallball/blocks.hpp"
#include "smallball/distributions.hpp"
#include "smallball/error.hpp"
#include "smallball/parallel.hpp"
#include "smallball/rng.hpp"

namespace smallball {

struct MinEigen {
    double value = 0.0;     // clamped at 0
    double raw = 0.0;       // smallest eigenvalue as computed
    double residual = 0.0;  // ||G v - lambda v||
};

/// lambda_min = inf_{|t|=1} (1/N) sum <X_i, t>^2, the smallest eigenvalue of
/// (1/N) X^T X. This is the square of the usual smallest singular value of
/// N^{-1/2} X.
inline MinEigen min_singular_value(const Matrix& X) {
    require(X.rows() >= 1 && X.cols() >= 1, ErrorKind::input, "empty design");
    require(X.rows() >= X.cols(), ErrorKind::rank_deficiency,
            "N = " + std::to_string(X.rows()) + " < d = " + std::to_string(X.cols()) + ": the infimum is 0");
    const Matrix G = (X.transpose() * X) / static_cast<double>(X.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(G);
    require(solver.info() == Eigen::Success, ErrorKind::contract, "eigendecomposition failed");
    MinEigen out;
    out.raw = solver.eigenvalues()[0];
    out.value = std::max(0.0, out.raw);
    const Vector v = solver.eigenvectors().col(0);
    out.residual = (G * v - out.raw * v).norm();
    return out;
}

/// (d/N) log(eN/d), the argument of the singular-value deficit bound.
inline double sv_bound_argument(double d, double N) {
    return (d / N) * std::log(std::numbers::e * N / d);
}

struct SvGrid {
    std::vector<Eigen::Index> dims;
    std::vector<double> aspects;  // N/d
    ScalarLaw law = ScalarLaw::gaussian();
    double q = 4.0;
    std::size_t trials = 1;
    std::uint64_t seed = 0;
};

struct SvCell {
    Eigen::Index d = 0;
    Eigen::Index N = 0;
    std::vector<double> lambda_min;
    double bound_argument = 0.0;
};

struct SvResult {
    std::vector<SvCell> cells;
    double q = 4.0;
};

inline void validate(const SvGrid& grid) {
    require(!grid.dims.empty() && !grid.aspects.empty(), ErrorKind::parameter, "grid needs dims and aspects");
    require(grid.trials >= 1, ErrorKind::parameter, "trials must be positive");
    require(grid.q > 2.0, ErrorKind::range, "q must exceed 2");
    grid.law.validate();
    require(grid.law.standardized, ErrorKind::parameter, "the design law must be standardized");
    require(grid.law.has_finite_moment(grid.q), ErrorKind::moment,
            grid.law.name() + " has no finite moment of order " + detail::format_double(grid.q));
    for (auto d : grid.dims) {
        require(d >= 1, ErrorKind::parameter, "dimensions must be positive");
        for (double a : grid.aspects) {
            const double N = a * static_cast<double>(d);
            require(a >= 1.0 && N == std::round(N), ErrorKind::parameter,
                    "aspect " + detail::format_double(a) + " times d = " + std::to_string(d) +
                        " is not an integer N >= d");
        }
    }
}

/// For every (d, N = aspect * d) cell, `trials` independent designs and their
/// lambda_min. Each trial's stream depends only on (seed, d, N, trial).
inline SvResult run_sv_experiment(const SvGrid& grid, Parallel par = {}) {
    validate(grid);
    SvResult out;
    out.q = grid.q;
    for (auto d : grid.dims) {
        for (double a : grid.aspects) {
            SvCell cell;
            cell.d = d;
            cell.N = static_cast<Eigen::Index>(std::llround(a * static_cast<double>(d)));
            cell.lambda_min.assign(grid.trials, 0.0);
            cell.bound_argument = sv_bound_argument(static_cast<double>(cell.d), static_cast<double>(cell.N));
            out.cells.push_back(std::move(cell));
        }
    }
    const std::size_t total = out.cells.size() * grid.trials;
    parallel_for(total, par, [&](std::size_t job) {
        auto& cell = out.cells[job / grid.trials];
        const std::size_t trial = job % grid.trials;
        const auto salt = hash_combine(static_cast<std::uint64_t>(cell.d), static_cast<std::uint64_t>(cell.N));
        auto engine = make_engine(grid.seed, trial, Stream::design, salt);
        const Matrix X = sample_isotropic(grid.law, cell.d, cell.N, engine);
        cell.lambda_min[trial] = min_singular_value(X).value;
    });
    return out;
}

/// Type-7 (linear interpolation) sample quantile.
inline double sample_quantile(std::vector<double> xs, double quantile) {
    require(!xs.empty(), ErrorKind::input, "quantile of an empty sample");
    require(quantile >= 0.0 && quantile <= 1.0, ErrorKind::range, "quantile must lie in [0,1]");
    std::sort(xs.begin(), xs.end());
    const double h = quantile * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

struct ScalingFit {
    double exponent = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    bool with_log = true;
    std::vector<double> arguments;
    std::vector<double> deficits;
};

/// Least-squares slope of log(deficit quantile) on log(argument), where the
/// deficit is 1 - lambda_min and the argument is (d/N) log(eN/d), or d/N when
/// `with_log` is false.
inline ScalingFit fit_scaling_exponent(const SvResult& result, double quantile = 0.5, bool with_log = true) {
    require(quantile > 0.0 && quantile < 1.0, ErrorKind::range, "quantile must lie in (0,1)");
    ScalingFit fit;
    fit.with_log = with_log;
    std::set<double> distinct;
    for (const auto& cell : result.cells) {
        std::vector<double> deficits(cell.lambda_min.size());
        std::transform(cell.lambda_min.begin(), cell.lambda_min.end(), deficits.begin(),
                       [](double l) { return 1.0 - l; });
        const double deficit = sample_quantile(deficits, quantile);
        require(deficit > 0.0, ErrorKind::quantile,
                "deficit at quantile " + detail::format_double(quantile) + " is nonpositive in cell d = " +
                    std::to_string(cell.d) + ", N = " + std::to_string(cell.N) + "; retry at a more extreme quantile");
        const double arg = with_log ? cell.bound_argument
                                    : static_cast<double>(cell.d) / static_cast<double>(cell.N);
        fit.arguments.push_back(arg);
        fit.deficits.push_back(deficit);
        distinct.insert(arg);
    }
    require(distinct.size() >= 3, ErrorKind::input, "need at least 3 cells with distinct arguments");

    const auto n = static_cast<double>(fit.arguments.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < fit.arguments.size(); ++i) {
        sx += std::log(fit.arguments[i]);
        sy += std::log(fit.deficits[i]);
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < fit.arguments.size(); ++i) {
        const double dx = std::log(fit.arguments[i]) - mx;
        const double dy = std::log(fit.deficits[i]) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    fit.exponent = sxy / sxx;
    fit.intercept = my - fit.exponent * mx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

struct MainTheoremCheck {
    double success_rate = 0.0;
    std::size_t worst_min_count = 0;
    std::size_t required = 0;  // ceil((1 - eta) n)
    std::vector<std::size_t> min_counts;
    std::vector<std::size_t> argmins;
    std::vector<std::size_t> attack_counts;  // filled when the attack runs
};

struct DesignSpec {
    ScalarLaw law = ScalarLaw::gaussian();
    Eigen::Index d = 1;
    std::size_t N = 1;
    std::size_t n = 1;
};

/// Fraction of trials in which every net point has at least (1 - eta) n blocks
/// with mean of squares >= (1 - xi) r^2.
inline MainTheoremCheck verify_main_theorem(const NetSpec& net, const DesignSpec& design, double xi, double eta,
                                            std::size_t trials, std::uint64_t seed, Parallel par = {},
                                            bool attack = false) {
    require(!net.points.empty(), ErrorKind::input, "net is empty");
    require(trials >= 1, ErrorKind::parameter, "trials must be positive");
    require(eta >= 0.0 && eta < 1.0, ErrorKind::range, "eta must lie in [0,1)");
    const auto part = partition(design.N, design.n);
    const double r = net.points.front().l2_norm();
    for (const auto& h : net.points) {
        require(std::abs(h.l2_norm() - r) <= 1e-9 * r, ErrorKind::parameter,
                "net handles must share a common L2 norm");
    }

    MainTheoremCheck out;
    out.required = static_cast<std::size_t>(std::ceil((1.0 - eta) * static_cast<double>(design.n) - 1e-9));
    out.min_counts.assign(trials, 0);
    out.argmins.assign(trials, 0);
    if (attack) {
        out.attack_counts.assign(trials, 0);
    }
    parallel_for(trials, par, [&](std::size_t t) {
        auto engine = make_engine(seed, t, Stream::design);
        const Matrix X = sample_isotropic(design.law, design.d, static_cast<Eigen::Index>(design.N), engine);
        const auto res = min_good_blocks_over_net(net, X, part, xi);
        out.min_counts[t] = res.min_count;
        out.argmins[t] = res.argmin;
        if (attack) {
            out.attack_counts[t] = attack_min_good_blocks(net, X, part, xi).min_count;
        }
    });
    const auto successes = std::count_if(out.min_counts.begin(), out.min_counts.end(),
                                         [&](std::size_t c) { return c >= out.required; });
    out.success_rate = static_cast<double>(successes) / static_cast<double>(trials);
    out.worst_min_count = *std::min_element(out.min_counts.begin(), out.min_counts.end());
    return out;
}

}  // namespace smallball
