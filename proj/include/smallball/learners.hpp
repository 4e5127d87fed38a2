#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>

#include "smallball/blocks.hpp"
#include "smallball/distributions.hpp"
#include "smallball/error.hpp"
#include "smallball/experiments.hpp"
#include "smallball/function.hpp"
#include "smallball/parallel.hpp"
#include "smallball/rng.hpp"

namespace smallball {

struct FiniteClass {
    std::vector<FunctionHandle> handles;
};

struct LinearBallClass {
    double radius = 1.0;
    Eigen::Index d = 1;
};

using ModelClass = std::variant<FiniteClass, LinearBallClass>;

/// (1/N) sum (f(X_i) - Y_i)^2.
inline double empirical_risk(const FunctionHandle& f, const Dataset& data) {
    return (f.evaluate(data.X) - data.targets()).squaredNorm() / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// ERM
// ---------------------------------------------------------------------------

struct ErmChoice {
    std::size_t index = 0;
    std::vector<double> risks;
};

/// Empirical risk minimizer over a finite class; ties go to the lowest index.
inline ErmChoice erm_finite(const std::vector<FunctionHandle>& handles, const Dataset& data) {
    require(!handles.empty(), ErrorKind::input, "class is empty");
    require(data.y.has_value(), ErrorKind::input, "dataset has no targets");
    ErmChoice out;
    out.risks.reserve(handles.size());
    for (const auto& h : handles) {
        out.risks.push_back(empirical_risk(h, data));
    }
    out.index = static_cast<std::size_t>(std::min_element(out.risks.begin(), out.risks.end()) - out.risks.begin());
    return out;
}

struct BallErm {
    Vector t;
    double objective = 0.0;
    double kkt_residual = 0.0;
    std::size_t iterations = 0;
};

/// Projected gradient for min (1/N)||X t - y||^2 over ||t||_2 <= radius, with
/// step 1/L, L the largest eigenvalue of (2/N) X^T X. Stops when the norm of
/// the gradient mapping L (t - P(t - grad/L)) drops to `tol`.
inline BallErm erm_linear_ball(const Dataset& data, double radius, double tol = 1e-10, std::size_t max_iter = 100000) {
    require(radius >= 0.0, ErrorKind::parameter, "radius must be nonnegative");
    const Vector& y = data.targets();
    const double n = static_cast<double>(data.size());
    const Matrix G = data.X.transpose() * data.X / n;
    const Vector b = data.X.transpose() * y / n;
    const double yy = y.squaredNorm() / n;
    const auto objective = [&](const Vector& t) { return t.dot(G * t) - 2.0 * b.dot(t) + yy; };
    const auto project = [&](Vector t) {
        const double norm = t.norm();
        if (norm > radius) {
            t *= radius / norm;
        }
        return t;
    };

    BallErm out;
    out.t = Vector::Zero(data.dim());
    if (radius == 0.0) {
        out.objective = objective(out.t);
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(G, Eigen::EigenvaluesOnly);
    const double L = 2.0 * eig.eigenvalues().maxCoeff();
    if (L <= 0.0) {
        out.objective = objective(out.t);
        return out;
    }
    for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
        const Vector grad = 2.0 * (G * out.t - b);
        const Vector next = project(out.t - grad / L);
        out.kkt_residual = L * (out.t - next).norm();
        if (out.kkt_residual <= tol) {
            break;
        }
        out.t = next;
    }
    out.objective = objective(out.t);
    if (out.kkt_residual > tol) {
        fail(ErrorKind::convergence, "projected gradient stopped after " + std::to_string(max_iter) +
                                         " iterations with KKT residual " + detail::format_double(out.kkt_residual));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Excess loss
// ---------------------------------------------------------------------------

struct ExcessLoss {
    double quadratic = 0.0;   // (1/N) sum (f - f*)^2(X_i)
    double multiplier = 0.0;  // (2/N) sum (f - f*)(X_i) (f*(X_i) - Y_i)
    double total = 0.0;       // quadratic + multiplier
    double direct = 0.0;      // (1/N) sum [(f(X_i) - Y_i)^2 - (f*(X_i) - Y_i)^2]
    double scale = 0.0;       // (1/N) sum [(f - Y)^2 + (f* - Y)^2], the magnitude of the summands
};

inline ExcessLoss excess_loss_decomposition(const FunctionHandle& f, const FunctionHandle& f_star,
                                            const Dataset& data) {
    const Vector& y = data.targets();
    const Vector fv = f.evaluate(data.X);
    const Vector sv = f_star.evaluate(data.X);
    const double n = static_cast<double>(data.size());
    const Vector u = fv - sv;
    const Vector resid_star = sv - y;
    const Vector resid_f = fv - y;
    ExcessLoss out;
    out.quadratic = u.squaredNorm() / n;
    out.multiplier = 2.0 * u.dot(resid_star) / n;
    out.total = out.quadratic + out.multiplier;
    out.direct = (resid_f.squaredNorm() - resid_star.squaredNorm()) / n;
    out.scale = (resid_f.squaredNorm() + resid_star.squaredNorm()) / n;
    return out;
}

/// Minimizer of the empirical excess risk relative to handles[f_star].
inline std::size_t erm_finite_excess(const std::vector<FunctionHandle>& handles, std::size_t f_star,
                                     const Dataset& data) {
    require(f_star < handles.size(), ErrorKind::input, "f_star index out of range");
    std::size_t best = 0;
    double best_total = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < handles.size(); ++k) {
        const double total = excess_loss_decomposition(handles[k], handles[f_star], data).total;
        if (total < best_total) {
            best_total = total;
            best = k;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Bernstein constant
// ---------------------------------------------------------------------------

using DataSampler = std::function<Dataset(std::size_t N, std::uint64_t seed)>;

struct BernsteinEstimate {
    double B_hat = 1.0;
    std::size_t argmax = 0;
    std::size_t f_star = 0;
    double mc_se = 0.0;
    bool singleton = false;         // class of size 1; B_hat fixed at 1
    bool f_star_ambiguous = false;  // runner-up population risk within 3 SE
    std::vector<double> risks;
    std::vector<double> risk_se;
    std::vector<double> ratios;     // ||f - f*||^2 / E L_f, 0 for f = f*
    std::vector<double> excess;     // E L_f
    std::vector<double> excess_se;
    std::vector<bool> unreliable;   // E L_f within 3 SE of 0
};

/// Estimate of the smallest B with ||f - f*||^2 <= B E L_f over the class.
/// f* is the population (Monte Carlo) risk minimizer. Squared distances are
/// exact for pairs of linear handles, Monte Carlo otherwise; all expectations
/// share one sample of size mc_size so the ratios are positively correlated.
inline BernsteinEstimate bernstein_constant(const std::vector<FunctionHandle>& handles, const DataSampler& sampler,
                                            std::size_t mc_size, std::uint64_t seed) {
    require(!handles.empty(), ErrorKind::input, "class is empty");
    require(mc_size >= 2, ErrorKind::parameter, "mc_size must be at least 2");
    BernsteinEstimate out;
    const std::size_t K = handles.size();
    out.ratios.assign(K, 0.0);
    out.excess.assign(K, 0.0);
    out.excess_se.assign(K, 0.0);
    out.unreliable.assign(K, false);
    if (K == 1) {
        out.singleton = true;
        return out;
    }

    const Dataset data = sampler(mc_size, seed);
    const Vector& y = data.targets();
    const double n = static_cast<double>(data.size());
    std::vector<Vector> values;
    for (const auto& h : handles) {
        values.push_back(h.evaluate(data.X));
    }
    const auto mean_se = [&](const Eigen::ArrayXd& a) {
        const double mean = a.mean();
        const double var = (a - mean).square().sum() / (n - 1.0);
        return std::pair{mean, std::sqrt(var / n)};
    };
    for (std::size_t k = 0; k < K; ++k) {
        const auto [mean, se] = mean_se((values[k] - y).array().square());
        out.risks.push_back(mean);
        out.risk_se.push_back(se);
    }
    out.f_star = static_cast<std::size_t>(std::min_element(out.risks.begin(), out.risks.end()) - out.risks.begin());
    const Vector resid_star = values[out.f_star] - y;

    out.B_hat = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
        if (k == out.f_star) {
            continue;
        }
        const Eigen::ArrayXd u = (values[k] - values[out.f_star]).array();
        const Eigen::ArrayXd loss = u.square() + 2.0 * u * resid_star.array();
        const Eigen::ArrayXd num = both_linear(handles[k], handles[out.f_star])
                                       ? Eigen::ArrayXd::Constant(u.size(), std::pow(l2_distance(handles[k], handles[out.f_star]), 2))
                                       : Eigen::ArrayXd(u.square());
        const auto [den, den_se] = mean_se(loss);
        out.excess[k] = den;
        out.excess_se[k] = den_se;
        out.unreliable[k] = den <= 3.0 * den_se;
        const double a = num.mean();
        if (a == 0.0) {
            continue;  // duplicate of f*
        }
        double ratio = std::numeric_limits<double>::infinity();
        double ratio_se = 0.0;
        if (den > 0.0) {
            ratio = a / den;
            // delta method for a ratio of means on a shared sample
            const Eigen::ArrayXd z = (num - ratio * loss) / den;
            ratio_se = mean_se(z).second;
        }
        out.ratios[k] = ratio;
        if (ratio > out.B_hat) {
            out.B_hat = ratio;
            out.argmax = k;
            out.mc_se = ratio_se;
        }
        if (std::abs(out.risks[k] - out.risks[out.f_star]) <= 3.0 * std::max(out.risk_se[k], out.risk_se[out.f_star])) {
            out.f_star_ambiguous = true;
        }
    }
    if (!std::isfinite(out.B_hat) && out.B_hat < 0.0) {
        // every other handle duplicates f*
        out.B_hat = 1.0;
        out.singleton = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Multiplier process and r1(delta)
// ---------------------------------------------------------------------------

/// Y = f*(X) + sigma W, W ~ law independent of X.
struct NoiseModel {
    ScalarLaw law = ScalarLaw::gaussian();
    double sigma = 1.0;
};

namespace detail {

// Per replicate: (||f - f*||, |(1/N) sum eps_i xi_i (f - f*)(X_i)|) for every f.
struct MultiplierReplicate {
    std::vector<double> distance;
    std::vector<double> correlation;

    double phi(double r) const {
        double best = 0.0;
        for (std::size_t k = 0; k < distance.size(); ++k) {
            if (distance[k] > 0.0) {
                best = std::max(best, std::min(1.0, r / distance[k]) * correlation[k]);
            }
        }
        return best;
    }
};

inline std::vector<MultiplierReplicate> multiplier_replicates(const std::vector<FunctionHandle>& net,
                                                              const FunctionHandle& f_star, const NoiseModel& noise,
                                                              std::size_t N, Eigen::Index d, std::size_t mc,
                                                              std::uint64_t seed, const ScalarLaw& design,
                                                              Parallel par) {
    require(!net.empty(), ErrorKind::input, "net is empty");
    require(N >= 1 && mc >= 1, ErrorKind::parameter, "N and mc must be positive");
    noise.law.validate();

    // distances are replicate independent
    std::vector<double> distance(net.size());
    Matrix reference;
    for (std::size_t k = 0; k < net.size(); ++k) {
        if (!both_linear(net[k], f_star) && reference.size() == 0) {
            auto engine = make_engine(seed, 0, Stream::reference);
            reference = sample_isotropic(design, d, 200000, engine);
        }
        distance[k] = both_linear(net[k], f_star) ? l2_distance(net[k], f_star) : l2_distance(net[k], f_star, reference);
    }

    std::vector<MultiplierReplicate> reps(mc);
    parallel_for(mc, par, [&](std::size_t i) {
        auto design_engine = make_engine(seed, i, Stream::design);
        const Matrix X = sample_isotropic(design, d, static_cast<Eigen::Index>(N), design_engine);
        auto noise_engine = make_engine(seed, i, Stream::noise);
        LawSampler draw(noise.law);
        const auto eps = sign_vector(seed, i, N);
        Vector weight(static_cast<Eigen::Index>(N));  // eps_i * xi_i with xi_i = f*(X_i) - Y_i = -sigma W_i
        for (std::size_t j = 0; j < N; ++j) {
            weight[static_cast<Eigen::Index>(j)] = -eps[j] * noise.sigma * draw(noise_engine);
        }
        const Vector star = f_star.evaluate(X);
        auto& rep = reps[i];
        rep.distance = distance;
        rep.correlation.resize(net.size());
        for (std::size_t k = 0; k < net.size(); ++k) {
            rep.correlation[k] = std::abs(weight.dot(net[k].evaluate(X) - star)) / static_cast<double>(N);
        }
    });
    return reps;
}

}  // namespace detail

/// Samples of phi(r) = sup over star(F - f*, 0) of radius r of
/// |(1/N) sum eps_i xi_i u(X_i)|, one per replicate. For a finite class the
/// supremum over each segment is attained at min(1, r/||f - f*||).
inline std::vector<double> multiplier_sup_samples(const std::vector<FunctionHandle>& net,
                                                  const FunctionHandle& f_star, const NoiseModel& noise, double r,
                                                  std::size_t N, Eigen::Index d, std::size_t mc, std::uint64_t seed,
                                                  const ScalarLaw& design = ScalarLaw::gaussian(), Parallel par = {}) {
    const auto reps = detail::multiplier_replicates(net, f_star, noise, N, d, mc, seed, design, par);
    std::vector<double> out;
    out.reserve(mc);
    for (const auto& rep : reps) {
        out.push_back(rep.phi(r));
    }
    return out;
}

struct R1Estimate {
    double r1 = 0.0;
    std::size_t N = 0;
    std::vector<std::pair<double, double>> trace;  // (r, estimated Pr(phi(r) >= rho r^2 / 2))
};

struct R1Options {
    double r_lo = 1e-4;
    double r_hi = 1e2;
    double tol = 1e-4;
    ScalarLaw design = ScalarLaw::gaussian();
};

/// r1(delta) = inf{ r : Pr(phi(r) >= (rho/2) r^2) <= delta }, by bisection over
/// r with one fixed set of mc replicates. phi(r)/r^2 is nonincreasing in r on
/// every replicate, so the estimated probability is monotone and the search is
/// exact for the sample.
inline R1Estimate r1_estimate(const std::vector<FunctionHandle>& net, const FunctionHandle& f_star,
                              const NoiseModel& noise, double delta, double rho, std::size_t N, Eigen::Index d,
                              std::size_t mc, std::uint64_t seed, const R1Options& opts = {}, Parallel par = {}) {
    require(delta > 0.0 && delta < 1.0, ErrorKind::range, "delta must lie in (0,1)");
    require(rho > 0.0, ErrorKind::parameter, "rho must be positive");
    require(delta * static_cast<double>(mc) >= 20.0, ErrorKind::resolution,
            "delta * mc = " + detail::format_double(delta * static_cast<double>(mc)) + " < 20 cannot resolve the tail");
    require(opts.r_lo > 0.0 && opts.r_hi > opts.r_lo, ErrorKind::parameter, "bad r bracket");

    const auto reps = detail::multiplier_replicates(net, f_star, noise, N, d, mc, seed, opts.design, par);
    R1Estimate out;
    out.N = N;
    const auto prob = [&](double r) {
        const double level = 0.5 * rho * r * r;
        const auto hits = std::count_if(reps.begin(), reps.end(), [&](const auto& rep) { return rep.phi(r) >= level; });
        const double p = static_cast<double>(hits) / static_cast<double>(reps.size());
        out.trace.emplace_back(r, p);
        return p;
    };
    if (prob(opts.r_lo) <= delta) {
        out.r1 = opts.r_lo;
        return out;
    }
    if (prob(opts.r_hi) > delta) {
        fail(ErrorKind::bracket, "Pr(phi(r) >= rho r^2/2) exceeds delta at r_hi = " + detail::format_double(opts.r_hi));
    }
    double lo = opts.r_lo;
    double hi = opts.r_hi;
    while (hi - lo > opts.tol * hi) {
        const double mid = 0.5 * (lo + hi);
        (prob(mid) <= delta ? hi : lo) = mid;
    }
    out.r1 = hi;
    return out;
}

inline std::vector<R1Estimate> r1_estimate(const std::vector<FunctionHandle>& net, const FunctionHandle& f_star,
                                           const NoiseModel& noise, double delta, double rho,
                                           const std::vector<std::size_t>& sample_sizes, Eigen::Index d,
                                           std::size_t mc, std::uint64_t seed, const R1Options& opts = {},
                                           Parallel par = {}) {
    std::vector<R1Estimate> out;
    for (std::size_t N : sample_sizes) {
        out.push_back(r1_estimate(net, f_star, noise, delta, rho, N, d, mc, derive_seed(seed, N), opts, par));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tournament
// ---------------------------------------------------------------------------

enum class MatchWinner { first, second, draw };

struct MatchOutcome {
    MatchWinner winner = MatchWinner::draw;
    std::size_t first_wins = 0;
    std::size_t second_wins = 0;
    std::size_t ties = 0;  // blocks with equal risk, worth half a win to each side
    double distance = 0.0; // empirical L2 distance between the two functions
};

namespace detail {

inline std::vector<double> block_risks(const Vector& values, const Vector& y, const BlockPartition& part) {
    std::vector<double> out(part.n);
    for (std::size_t j = 0; j < part.n; ++j) {
        double acc = 0.0;
        for (std::size_t i = part.begin(j); i < part.end(j); ++i) {
            const double r = values[static_cast<Eigen::Index>(i)] - y[static_cast<Eigen::Index>(i)];
            acc += r * r;
        }
        out[j] = acc / static_cast<double>(part.m());
    }
    return out;
}

inline MatchOutcome decide_match(const std::vector<double>& risk_f, const std::vector<double>& risk_h,
                                 double distance, double draw_margin) {
    MatchOutcome out;
    out.distance = distance;
    for (std::size_t j = 0; j < risk_f.size(); ++j) {
        if (risk_f[j] < risk_h[j]) {
            ++out.first_wins;
        } else if (risk_h[j] < risk_f[j]) {
            ++out.second_wins;
        } else {
            ++out.ties;
        }
    }
    if (distance < draw_margin) {
        out.winner = MatchWinner::draw;
        return out;
    }
    // compare doubled scores to keep half-wins exact
    const std::size_t n2 = risk_f.size();
    const std::size_t score_first = 2 * out.first_wins + out.ties;
    const std::size_t score_second = 2 * out.second_wins + out.ties;
    if (score_first > n2) {
        out.winner = MatchWinner::first;
    } else if (score_second > n2) {
        out.winner = MatchWinner::second;
    } else {
        out.winner = MatchWinner::draw;
    }
    return out;
}

}  // namespace detail

/// Block-wise match between f and h: f takes a block when its block risk is
/// strictly smaller, ties are half-wins, and the match goes to the majority.
/// Functions closer than `draw_margin` in empirical L2 always draw.
inline MatchOutcome tournament_match(const FunctionHandle& f, const FunctionHandle& h, const Dataset& data,
                                     const BlockPartition& part, double draw_margin) {
    require(draw_margin >= 0.0, ErrorKind::parameter, "draw_margin must be nonnegative");
    require(static_cast<std::size_t>(data.size()) == part.N, ErrorKind::shape, "dataset size differs from partition");
    const Vector& y = data.targets();
    const Vector fv = f.evaluate(data.X);
    const Vector hv = h.evaluate(data.X);
    const double distance = std::sqrt((fv - hv).squaredNorm() / static_cast<double>(data.size()));
    return detail::decide_match(detail::block_risks(fv, y, part), detail::block_risks(hv, y, part), distance,
                                draw_margin);
}

struct MatchRecord {
    std::size_t first = 0;
    std::size_t second = 0;
    MatchOutcome outcome;
};

struct TournamentResult {
    std::size_t index = 0;
    bool no_champion = false;
    std::vector<std::size_t> wins;
    std::vector<std::size_t> losses;
    std::vector<double> median_block_risk;
    std::vector<MatchRecord> matches;
};

/// Round robin over the class. A champion loses no decided match and wins at
/// least one; among several champions the smallest median block risk wins.
/// Without a champion the handle with fewest losses is returned (lowest index
/// on ties) and `no_champion` is set.
inline TournamentResult tournament_select(const std::vector<FunctionHandle>& handles, const Dataset& data,
                                          std::size_t n_blocks, double draw_margin, Parallel par = {}) {
    require(!handles.empty(), ErrorKind::input, "class is empty");
    require(draw_margin >= 0.0, ErrorKind::parameter, "draw_margin must be nonnegative");
    const auto part = partition(static_cast<std::size_t>(data.size()), n_blocks);
    const Vector& y = data.targets();
    const std::size_t K = handles.size();

    std::vector<Vector> values(K);
    std::vector<std::vector<double>> risks(K);
    TournamentResult out;
    out.median_block_risk.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        values[k] = handles[k].evaluate(data.X);
        risks[k] = detail::block_risks(values[k], y, part);
        out.median_block_risk[k] = sample_quantile(risks[k], 0.5);
    }

    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = i + 1; j < K; ++j) {
            out.matches.push_back({i, j, {}});
        }
    }
    parallel_for(out.matches.size(), par, [&](std::size_t idx) {
        auto& rec = out.matches[idx];
        const double distance =
            std::sqrt((values[rec.first] - values[rec.second]).squaredNorm() / static_cast<double>(data.size()));
        rec.outcome = detail::decide_match(risks[rec.first], risks[rec.second], distance, draw_margin);
    });

    out.wins.assign(K, 0);
    out.losses.assign(K, 0);
    for (const auto& rec : out.matches) {
        if (rec.outcome.winner == MatchWinner::first) {
            ++out.wins[rec.first];
            ++out.losses[rec.second];
        } else if (rec.outcome.winner == MatchWinner::second) {
            ++out.wins[rec.second];
            ++out.losses[rec.first];
        }
    }

    std::optional<std::size_t> champion;
    for (std::size_t k = 0; k < K; ++k) {
        const bool qualifies = out.losses[k] == 0 && (out.wins[k] > 0 || K == 1);
        if (qualifies && (!champion || out.median_block_risk[k] < out.median_block_risk[*champion])) {
            champion = k;
        }
    }
    if (champion) {
        out.index = *champion;
        return out;
    }
    out.no_champion = true;
    out.index = static_cast<std::size_t>(std::min_element(out.losses.begin(), out.losses.end()) - out.losses.begin());
    return out;
}

// ---------------------------------------------------------------------------
// Paired comparison of tournament and ERM
// ---------------------------------------------------------------------------

struct SelectionTrials {
    std::vector<std::size_t> tournament_pick;
    std::vector<std::size_t> erm_pick;
    std::vector<bool> tournament_no_champion;

    double frequency(const std::vector<std::size_t>& picks, std::size_t target) const {
        return static_cast<double>(std::count(picks.begin(), picks.end(), target)) / static_cast<double>(picks.size());
    }
};

struct SelectionSetup {
    std::vector<FunctionHandle> handles;
    std::size_t f_star = 0;  // index of the regression function
    NoiseModel noise;
    ScalarLaw design = ScalarLaw::gaussian();
    std::size_t N = 1;
    std::size_t n_blocks = 1;
    double draw_margin = 0.0;
};

/// Both procedures run on the same dataset in every trial.
inline SelectionTrials paired_selection_trials(const SelectionSetup& setup, std::size_t trials, std::uint64_t seed,
                                               Parallel par = {}) {
    require(setup.f_star < setup.handles.size(), ErrorKind::input, "f_star index out of range");
    const auto d = setup.handles[setup.f_star].kind() == FunctionHandle::Kind::linear
                       ? setup.handles[setup.f_star].coefficients().size()
                       : Eigen::Index{1};
    SelectionTrials out;
    out.tournament_pick.assign(trials, 0);
    out.erm_pick.assign(trials, 0);
    out.tournament_no_champion.assign(trials, false);
    parallel_for(trials, par, [&](std::size_t t) {
        const auto data = sample_regression(setup.handles[setup.f_star], setup.noise.law, setup.noise.sigma,
                                            static_cast<Eigen::Index>(setup.N), d, derive_seed(seed, t), setup.design);
        const auto tour = tournament_select(setup.handles, data, setup.n_blocks, setup.draw_margin);
        out.tournament_pick[t] = tour.index;
        out.tournament_no_champion[t] = tour.no_champion;
        out.erm_pick[t] = erm_finite(setup.handles, data).index;
    });
    return out;
}

}  // namespace smallball
