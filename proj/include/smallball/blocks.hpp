#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "smallball/error.hpp"
#include "smallball/function.hpp"
#include "smallball/parallel.hpp"
#include "smallball/rng.hpp"
#include "smallball/slb.hpp"

namespace smallball {

/// {0, ..., N-1} cut into n contiguous blocks of size m = N/n.
struct BlockPartition {
    std::size_t N = 1;
    std::size_t n = 1;

    std::size_t m() const noexcept { return N / n; }
    std::size_t begin(std::size_t j) const noexcept { return j * m(); }
    std::size_t end(std::size_t j) const noexcept { return (j + 1) * m(); }

    std::vector<std::vector<std::size_t>> blocks() const {
        std::vector<std::vector<std::size_t>> out(n);
        for (std::size_t j = 0; j < n; ++j) {
            out[j].resize(m());
            std::iota(out[j].begin(), out[j].end(), begin(j));
        }
        return out;
    }
};

inline BlockPartition partition(std::size_t N, std::size_t n) {
    require(N >= 1 && n >= 1, ErrorKind::parameter, "N and n must be positive");
    require(N % n == 0, ErrorKind::divisibility,
            "n = " + std::to_string(n) + " does not divide N = " + std::to_string(N));
    return {N, n};
}

/// Per-block means of squares, (1/m) sum_{i in I_j} v_i^2.
inline std::vector<double> block_sq_means(std::span<const double> values, const BlockPartition& part) {
    require(values.size() == part.N, ErrorKind::shape,
            "values have length " + std::to_string(values.size()) + ", partition covers " + std::to_string(part.N));
    std::vector<double> means(part.n);
    const double m = static_cast<double>(part.m());
    for (std::size_t j = 0; j < part.n; ++j) {
        double acc = 0.0;
        for (std::size_t i = part.begin(j); i < part.end(j); ++i) {
            acc += values[i] * values[i];
        }
        means[j] = acc / m;
    }
    return means;
}

/// Number of blocks whose mean of squares reaches (1 - xi) ||h||^2.
inline std::size_t good_block_count(std::span<const double> values, const BlockPartition& part, double xi,
                                    double l2_norm) {
    require(l2_norm > 0.0, ErrorKind::parameter, "l2_norm must be positive");
    require(xi >= 0.0 && xi <= 1.0, ErrorKind::range, "xi must lie in [0,1]");
    const double threshold = (1.0 - xi) * l2_norm * l2_norm;
    const auto means = block_sq_means(values, part);
    return static_cast<std::size_t>(std::count_if(means.begin(), means.end(), [&](double v) { return v >= threshold; }));
}

// ---------------------------------------------------------------------------
// Nets
// ---------------------------------------------------------------------------

enum class NetConstruction { explicit_points, greedy_random };

/// Finite stand-in for a class. For greedy constructions the points are
/// rho-separated and `coverage_radius` records the largest distance from a
/// fresh probe direction to the net.
struct NetSpec {
    std::vector<FunctionHandle> points;
    double rho = 0.0;
    NetConstruction construction = NetConstruction::explicit_points;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    double coverage_radius = std::numeric_limits<double>::quiet_NaN();

    std::size_t size() const noexcept { return points.size(); }
};

inline NetSpec explicit_net(std::vector<FunctionHandle> points, double rho = 0.0) {
    NetSpec net;
    net.points = std::move(points);
    net.rho = rho;
    return net;
}

namespace detail {

inline Vector random_direction(Engine& engine, Eigen::Index d) {
    std::normal_distribution<double> normal;
    Vector t(d);
    do {
        for (Eigen::Index j = 0; j < d; ++j) {
            t[j] = normal(engine);
        }
    } while (t.squaredNorm() == 0.0);
    return t.normalized();
}

inline bool all_linear(const std::vector<FunctionHandle>& hs) {
    return std::all_of(hs.begin(), hs.end(),
                       [](const FunctionHandle& h) { return h.kind() == FunctionHandle::Kind::linear; });
}

}  // namespace detail

/// `count` independent uniform directions on S^{d-1}, as linear handles.
inline NetSpec random_sphere_net(Eigen::Index d, std::size_t count, std::uint64_t seed) {
    require(d >= 1 && count >= 1, ErrorKind::parameter, "dimension and net size must be positive");
    auto engine = make_engine(seed, 0, Stream::directions);
    NetSpec net;
    net.seed = seed;
    net.samples = count;
    for (std::size_t k = 0; k < count; ++k) {
        net.points.push_back(FunctionHandle::linear(detail::random_direction(engine, d), "dir" + std::to_string(k)));
    }
    return net;
}

// ---------------------------------------------------------------------------
// Packings
// ---------------------------------------------------------------------------

struct Packing {
    std::size_t count = 0;
    std::vector<std::size_t> indices;  // into the candidate list
    bool certified = false;            // every candidate lies within rho of the packing
};

/// Greedy maximal rho-separated subset under an arbitrary distance. Maximality
/// is re-checked after construction and reported in `certified`.
inline Packing packing_count(std::size_t candidates, double rho,
                             const std::function<double(std::size_t, std::size_t)>& distance) {
    require(rho > 0.0, ErrorKind::parameter, "rho must be positive");
    Packing out;
    for (std::size_t i = 0; i < candidates; ++i) {
        const bool separated = std::all_of(out.indices.begin(), out.indices.end(),
                                           [&](std::size_t j) { return distance(i, j) >= rho; });
        if (separated) {
            out.indices.push_back(i);
        }
    }
    out.count = out.indices.size();
    out.certified = true;
    for (std::size_t i = 0; i < candidates && out.certified; ++i) {
        out.certified = std::any_of(out.indices.begin(), out.indices.end(),
                                    [&](std::size_t j) { return i == j || distance(i, j) < rho; });
    }
    return out;
}

/// Packing of linear handles under the exact (isotropic) L2 distance.
inline Packing packing_count(const std::vector<FunctionHandle>& candidates, double rho) {
    return packing_count(candidates.size(), rho,
                         [&](std::size_t i, std::size_t j) { return l2_distance(candidates[i], candidates[j]); });
}

/// Packing with distances estimated on a reference sample (needed for non-linear handles).
inline Packing packing_count(const std::vector<FunctionHandle>& candidates, double rho, const Matrix& reference) {
    std::vector<Vector> values;
    values.reserve(candidates.size());
    for (const auto& h : candidates) {
        values.push_back(h.evaluate(reference));
    }
    const double n = static_cast<double>(reference.rows());
    return packing_count(candidates.size(), rho, [&](std::size_t i, std::size_t j) {
        if (both_linear(candidates[i], candidates[j])) {
            return l2_distance(candidates[i], candidates[j]);
        }
        return std::sqrt((values[i] - values[j]).squaredNorm() / n);
    });
}

/// Oversample random directions, keep a greedy rho-separated subset, then
/// measure coverage with `probes` fresh directions.
inline NetSpec greedy_sphere_net(Eigen::Index d, double rho, std::size_t samples, std::uint64_t seed,
                                 std::size_t probes = 1000) {
    require(d >= 1 && samples >= 1, ErrorKind::parameter, "dimension and sample count must be positive");
    auto engine = make_engine(seed, 0, Stream::directions);
    std::vector<FunctionHandle> candidates;
    candidates.reserve(samples);
    for (std::size_t k = 0; k < samples; ++k) {
        candidates.push_back(FunctionHandle::linear(detail::random_direction(engine, d)));
    }
    const auto packing = packing_count(candidates, rho);

    NetSpec net;
    net.rho = rho;
    net.construction = NetConstruction::greedy_random;
    net.samples = samples;
    net.seed = seed;
    for (std::size_t idx : packing.indices) {
        net.points.push_back(candidates[idx].with_id("dir" + std::to_string(net.points.size())));
    }

    Matrix T(d, static_cast<Eigen::Index>(net.size()));
    for (Eigen::Index k = 0; k < T.cols(); ++k) {
        T.col(k) = net.points[static_cast<std::size_t>(k)].coefficients();
    }
    auto probe_engine = make_engine(seed, 0, Stream::probe);
    double coverage = 0.0;
    for (std::size_t p = 0; p < probes; ++p) {
        const Vector u = detail::random_direction(probe_engine, d);
        // ||u - t||^2 = 2 - 2 <u, t> for unit vectors
        const double best = (T.transpose() * u).maxCoeff();
        coverage = std::max(coverage, std::sqrt(std::max(0.0, 2.0 - 2.0 * best)));
    }
    net.coverage_radius = coverage;
    return net;
}

/// star(points, center) sampled at lambda = k/levels, k = 1..levels; duplicate
/// functions (equal descriptors) are merged.
inline NetSpec star_hull_net(const std::vector<FunctionHandle>& points, const FunctionHandle& center,
                             std::size_t levels) {
    require(levels >= 1, ErrorKind::parameter, "levels must be positive");
    NetSpec net;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t k = 1; k <= levels; ++k) {
            const double lambda = static_cast<double>(k) / static_cast<double>(levels);
            FunctionHandle h = k == levels ? points[i]
                                           : FunctionHandle::affine({{lambda, points[i]}, {1.0 - lambda, center}});
            if (seen.insert(h.descriptor()).second) {
                net.points.push_back(h.with_id(points[i].id().empty() ? "h" + std::to_string(i) + "@" +
                                                                            std::to_string(k) + "/" +
                                                                            std::to_string(levels)
                                                                      : points[i].id() + "@" + std::to_string(k) +
                                                                            "/" + std::to_string(levels)));
            }
        }
    }
    return net;
}

/// N x K matrix of net values at the rows of X.
inline Matrix net_values(const NetSpec& net, const Matrix& X) {
    require(!net.points.empty(), ErrorKind::input, "net is empty");
    Matrix V(X.rows(), static_cast<Eigen::Index>(net.size()));
    if (detail::all_linear(net.points)) {
        Matrix T(X.cols(), V.cols());
        for (Eigen::Index k = 0; k < V.cols(); ++k) {
            const auto& t = net.points[static_cast<std::size_t>(k)].coefficients();
            require(t.size() == X.cols(), ErrorKind::shape, "net point dimension differs from the design");
            T.col(k) = t;
        }
        V.noalias() = X * T;
        return V;
    }
    for (Eigen::Index k = 0; k < V.cols(); ++k) {
        V.col(k) = net.points[static_cast<std::size_t>(k)].evaluate(X);
    }
    return V;
}

struct NetMinimum {
    std::size_t min_count = 0;
    std::size_t argmin = 0;
    std::string argmin_id;
    std::vector<std::size_t> counts;
};

/// Worst good-block count over the net; ties go to the lowest index.
inline NetMinimum min_good_blocks_over_net(const NetSpec& net, const Matrix& X, const BlockPartition& part,
                                           double xi) {
    require(!net.points.empty(), ErrorKind::input, "net is empty");
    require(static_cast<std::size_t>(X.rows()) == part.N, ErrorKind::shape, "design rows differ from partition size");
    const Matrix V = net_values(net, X);
    NetMinimum out;
    out.counts.resize(net.size());
    out.min_count = std::numeric_limits<std::size_t>::max();
    for (std::size_t k = 0; k < net.size(); ++k) {
        const double norm = net.points[k].l2_norm();
        require(norm > 0.0, ErrorKind::input, "net point " + std::to_string(k) + " has zero L2 norm");
        const auto col = V.col(static_cast<Eigen::Index>(k));
        out.counts[k] = good_block_count(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                                         part, xi, norm);
        if (out.counts[k] < out.min_count) {
            out.min_count = out.counts[k];
            out.argmin = k;
        }
    }
    out.argmin_id = net.points[out.argmin].id();
    return out;
}

struct QuadraticInf {
    double value = 0.0;
    std::size_t argmin = 0;
};

/// min over the net of (1/N) sum f^2(X_i) / ||f||^2.
inline QuadraticInf quadratic_inf(const NetSpec& net, const Matrix& X) {
    require(!net.points.empty(), ErrorKind::input, "net is empty");
    const Matrix V = net_values(net, X);
    QuadraticInf out;
    out.value = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < net.size(); ++k) {
        const double norm = net.points[k].l2_norm();
        require(norm > 0.0, ErrorKind::input, "net point " + std::to_string(k) + " has zero L2 norm");
        const double v = V.col(static_cast<Eigen::Index>(k)).squaredNorm() / static_cast<double>(X.rows()) / (norm * norm);
        if (v < out.value) {
            out.value = v;
            out.argmin = k;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rademacher complexity
// ---------------------------------------------------------------------------

namespace detail {

inline MomentEstimate mean_and_se(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() < 2) {
        return {mean, 0.0};
    }
    double var = 0.0;
    for (double x : xs) {
        var += (x - mean) * (x - mean);
    }
    return {mean, std::sqrt(var / (n - 1.0) / n)};
}

}  // namespace detail

/// E_eps sup_{u in net} |(1/N) sum eps_i u(X_i)|, conditional on X.
inline MomentEstimate rademacher_sup(const NetSpec& net, const Matrix& X, std::size_t sign_draws, std::uint64_t seed,
                                     Parallel par = {}) {
    require(sign_draws >= 1, ErrorKind::parameter, "sign_draws must be positive");
    const Matrix V = net_values(net, X);
    const auto N = static_cast<std::size_t>(X.rows());
    std::vector<double> sups(sign_draws);
    parallel_for(sign_draws, par, [&](std::size_t s) {
        const auto eps = sign_vector(seed, s, N);
        const Eigen::Map<const Vector> e(eps.data(), static_cast<Eigen::Index>(N));
        sups[s] = (V.transpose() * e).cwiseAbs().maxCoeff() / static_cast<double>(N);
    });
    return detail::mean_and_se(sups);
}

/// Same quantity for the whole ball {<t,.> : ||t|| <= rho}; the supremum per
/// sign draw is (rho/N) ||sum eps_i X_i||_2 exactly.
inline MomentEstimate rademacher_sup_linear_ball(const Matrix& X, double rho, std::size_t sign_draws,
                                                 std::uint64_t seed, Parallel par = {}) {
    require(rho > 0.0, ErrorKind::parameter, "rho must be positive");
    require(sign_draws >= 1, ErrorKind::parameter, "sign_draws must be positive");
    const auto N = static_cast<std::size_t>(X.rows());
    std::vector<double> sups(sign_draws);
    parallel_for(sign_draws, par, [&](std::size_t s) {
        const auto eps = sign_vector(seed, s, N);
        const Eigen::Map<const Vector> e(eps.data(), static_cast<Eigen::Index>(N));
        sups[s] = rho * (X.transpose() * e).norm() / static_cast<double>(N);
    });
    return detail::mean_and_se(sups);
}

// ---------------------------------------------------------------------------
// Critical radius
// ---------------------------------------------------------------------------

/// Smallest r in [r_lo, r_hi] with complexity(r) <= budget(r), by bisection to
/// relative width `tol`. complexity(r)/r must be nonincreasing and budget(r)/r
/// increasing; both are checked on every evaluated point.
inline double solve_critical_radius(const std::function<double(double)>& complexity,
                                    const std::function<double(double)>& budget, double r_lo, double r_hi,
                                    double tol = 1e-8) {
    require(r_lo > 0.0 && r_hi > r_lo, ErrorKind::parameter, "bracket must satisfy 0 < r_lo < r_hi");
    require(tol > 0.0 && tol < 1.0, ErrorKind::parameter, "tol must lie in (0,1)");

    std::vector<std::array<double, 3>> seen;  // (r, complexity, budget)
    const auto holds = [&](double r) {
        const double c = complexity(r);
        const double b = budget(r);
        seen.push_back({r, c, b});
        return c <= b;
    };
    const auto check_shape = [&] {
        std::sort(seen.begin(), seen.end());
        for (std::size_t i = 1; i < seen.size(); ++i) {
            const auto& [r0, c0, b0] = seen[i - 1];
            const auto& [r1, c1, b1] = seen[i];
            const double slack = 1e-9 * (std::abs(c0 / r0) + std::abs(b0 / r0)) + 1e-300;
            require(c1 / r1 <= c0 / r0 + slack, ErrorKind::contract,
                    "complexity(r)/r increases between r = " + detail::format_double(r0) + " and " +
                        detail::format_double(r1));
            require(b1 / r1 >= b0 / r0 - slack, ErrorKind::contract,
                    "budget(r)/r decreases between r = " + detail::format_double(r0) + " and " +
                        detail::format_double(r1));
        }
    };

    if (holds(r_lo)) {
        return r_lo;
    }
    if (!holds(r_hi)) {
        fail(ErrorKind::bracket, "predicate fails at r_hi = " + detail::format_double(r_hi));
    }
    double lo = r_lo;
    double hi = r_hi;
    while (hi - lo > tol * hi) {
        const double mid = 0.5 * (lo + hi);
        (holds(mid) ? hi : lo) = mid;
    }
    check_shape();
    return hi;
}

struct RadiusStep {
    double r = 0.0;
    double complexity = 0.0;
    double stderr_ = 0.0;
    double budget = 0.0;
    std::size_t draws = 0;
    bool accepted = false;
    bool resolved = true;  // margin exceeded 2 SE
};

struct StochasticRadius {
    double r = 0.0;
    std::size_t unresolved_steps = 0;
    std::vector<RadiusStep> trace;
};

/// Bisection when complexity(r) is a Monte Carlo estimate. A comparison is
/// accepted once |budget - estimate| exceeds 2 SE; otherwise the number of sign
/// draws doubles, up to `max_draws`, after which the point estimate decides and
/// the step is counted as unresolved.
inline StochasticRadius solve_critical_radius_mc(
    const std::function<MomentEstimate(double, std::size_t)>& complexity, const std::function<double(double)>& budget,
    double r_lo, double r_hi, double tol, std::size_t initial_draws, std::size_t max_draws) {
    require(r_lo > 0.0 && r_hi > r_lo, ErrorKind::parameter, "bracket must satisfy 0 < r_lo < r_hi");
    require(tol > 0.0 && tol < 1.0, ErrorKind::parameter, "tol must lie in (0,1)");
    require(initial_draws >= 2 && max_draws >= initial_draws, ErrorKind::parameter, "bad draw limits");

    StochasticRadius out;
    const auto holds = [&](double r) {
        RadiusStep step;
        step.r = r;
        step.budget = budget(r);
        for (std::size_t draws = initial_draws;; draws = std::min(max_draws, 2 * draws)) {
            const auto est = complexity(r, draws);
            step.complexity = est.value;
            step.stderr_ = est.stderr_;
            step.draws = draws;
            const double margin = step.budget - est.value;
            if (std::abs(margin) > 2.0 * est.stderr_) {
                step.accepted = margin > 0.0;
                break;
            }
            if (draws >= max_draws) {
                step.accepted = margin >= 0.0;
                step.resolved = false;
                ++out.unresolved_steps;
                break;
            }
        }
        out.trace.push_back(step);
        return step.accepted;
    };

    if (holds(r_lo)) {
        out.r = r_lo;
        return out;
    }
    if (!holds(r_hi)) {
        fail(ErrorKind::bracket, "predicate fails at r_hi = " + detail::format_double(r_hi));
    }
    double lo = r_lo;
    double hi = r_hi;
    while (hi - lo > tol * hi) {
        const double mid = 0.5 * (lo + hi);
        (holds(mid) ? hi : lo) = mid;
    }
    out.r = hi;
    return out;
}

// ---------------------------------------------------------------------------
// Adversarial search beyond the net
// ---------------------------------------------------------------------------

struct AttackResult {
    std::size_t min_count = 0;
    Vector direction;
    std::size_t net_min_count = 0;
    bool disagrees = false;  // attack found fewer good blocks than the net
};

/// Projected gradient on the sphere for a smoothed good-block count, started
/// from the `starts` worst net directions. Linear nets only.
inline AttackResult attack_min_good_blocks(const NetSpec& net, const Matrix& X, const BlockPartition& part, double xi,
                                           std::size_t starts = 5, std::size_t iterations = 200) {
    require(detail::all_linear(net.points), ErrorKind::input, "the sphere attack needs a linear net");
    const auto base = min_good_blocks_over_net(net, X, part, xi);
    const Eigen::Index d = X.cols();
    std::vector<Matrix> grams(part.n);
    for (std::size_t j = 0; j < part.n; ++j) {
        const auto rows = X.middleRows(static_cast<Eigen::Index>(part.begin(j)), static_cast<Eigen::Index>(part.m()));
        grams[j] = rows.transpose() * rows / static_cast<double>(part.m());
    }
    const double threshold = 1.0 - xi;
    const auto count = [&](const Vector& t) {
        std::size_t c = 0;
        for (const auto& G : grams) {
            c += t.dot(G * t) >= threshold ? 1 : 0;
        }
        return c;
    };

    std::vector<std::size_t> order(net.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return base.counts[a] < base.counts[b]; });

    AttackResult out;
    out.net_min_count = base.min_count;
    out.min_count = base.min_count;
    out.direction = net.points[base.argmin].coefficients().normalized();
    for (std::size_t s = 0; s < std::min(starts, order.size()); ++s) {
        Vector t = net.points[order[s]].coefficients().normalized();
        for (double temperature : {0.05, 0.02, 0.005}) {
            for (std::size_t it = 0; it < iterations; ++it) {
                Vector grad = Vector::Zero(d);
                for (const auto& G : grams) {
                    const Vector Gt = G * t;
                    const double z = (t.dot(Gt) - threshold) / temperature;
                    const double sig = 1.0 / (1.0 + std::exp(-z));
                    grad += (sig * (1.0 - sig) * 2.0 / temperature) * Gt;
                }
                // Riemannian step: drop the radial part, move, renormalize.
                grad -= grad.dot(t) * t;
                const double gn = grad.norm();
                if (gn == 0.0) {
                    break;
                }
                t -= (0.05 / gn) * grad;
                t.normalize();
                const auto c = count(t);
                if (c < out.min_count) {
                    out.min_count = c;
                    out.direction = t;
                }
            }
        }
    }
    out.disagrees = out.min_count < out.net_min_count;
    return out;
}

}  // namespace smallball
