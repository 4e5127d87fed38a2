#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "smallball/distributions.hpp"
#include "smallball/error.hpp"
#include "smallball/parallel.hpp"
#include "smallball/rng.hpp"

namespace smallball {

// ---------------------------------------------------------------------------
// Trimmed quadratic means and tail cutoffs
// ---------------------------------------------------------------------------

/// min over |J| <= ell of (1/m) sum_{i not in J} v_i^2, i.e. the mean of squares
/// after discarding the ell largest |v_i|. The normalization stays 1/m.
inline double trimmed_sq_mean(std::span<const double> v, long long ell) {
    const auto m = static_cast<long long>(v.size());
    require(m >= 1, ErrorKind::input, "trimmed_sq_mean needs a nonempty vector");
    require(ell >= 0 && ell <= m, ErrorKind::range,
            "trim budget " + std::to_string(ell) + " outside [0, " + std::to_string(m) + "]");
    std::vector<double> sq(v.size());
    std::transform(v.begin(), v.end(), sq.begin(), [](double x) { return x * x; });
    const auto keep = static_cast<std::size_t>(m - ell);
    if (keep < sq.size()) {
        std::nth_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(keep), sq.end());
    }
    std::sort(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(keep));
    const double sum = std::accumulate(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(keep), 0.0);
    return sum / static_cast<double>(m);
}

inline void check_xi(double xi) {
    require(xi > 0.0 && xi < 1.0, ErrorKind::range, "xi must lie in (0,1), got " + detail::format_double(xi));
}

/// Tail cutoff of a discrete law with atoms |values| and probabilities `weights`:
/// the smallest atom t with E h^2 1{|h| > t} <= (xi/2) E h^2.
inline double tail_cutoff(std::span<const double> values, std::span<const double> weights, double xi) {
    check_xi(xi);
    require(!values.empty(), ErrorKind::input, "tail_cutoff needs a nonempty sample");
    require(values.size() == weights.size(), ErrorKind::shape, "values and weights differ in length");

    std::vector<std::pair<double, double>> atoms;  // (|value|, weight * value^2)
    atoms.reserve(values.size());
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        require(weights[i] >= 0.0, ErrorKind::parameter, "negative weight");
        const double a = std::abs(values[i]);
        atoms.emplace_back(a, weights[i] * a * a);
        total += weights[i] * a * a;
    }
    require(total > 0.0, ErrorKind::degenerate_input, "E h^2 = 0, the tail cutoff is undefined");
    std::sort(atoms.begin(), atoms.end());

    // Walk down from the top. `tail` is the mass strictly above the current atom.
    const double budget = 0.5 * xi * total;
    double tail = 0.0;
    double answer = atoms.back().first;
    std::size_t i = atoms.size();
    while (i > 0) {
        const double level = atoms[i - 1].first;
        double at_level = 0.0;
        std::size_t j = i;
        while (j > 0 && atoms[j - 1].first == level) {
            at_level += atoms[j - 1].second;
            --j;
        }
        if (tail > budget) {
            break;
        }
        answer = level;
        tail += at_level;
        i = j;
    }
    return answer;
}

/// Empirical tail cutoff: smallest order statistic of |values| satisfying the
/// defining inequality, with ties resolved right-continuously.
inline double tail_cutoff(std::span<const double> values, double xi) {
    const std::vector<double> w(values.size(), 1.0 / static_cast<double>(values.size()));
    return tail_cutoff(values, w, xi);
}

namespace detail {

// Density of the unscaled law at x >= 0 (symmetric laws).
inline double raw_density(const ScalarLaw& law, double x) {
    switch (law.kind) {
        case LawKind::uniform_sym:
            return x <= 1.0 ? 0.5 : 0.0;
        case LawKind::gaussian:
            return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        case LawKind::student_t: {
            const double nu = law.param;
            const double c = std::exp(std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0)) /
                             std::sqrt(nu * std::numbers::pi);
            return c * std::pow(1.0 + x * x / nu, -(nu + 1.0) / 2.0);
        }
        case LawKind::pareto_sym:
            return x >= 1.0 ? 0.5 * law.param * std::pow(x, -law.param - 1.0) : 0.0;
        case LawKind::rademacher:
            break;
    }
    return 0.0;
}

// E Z^2 1{|Z| > t} for the unscaled law, by quadrature.
inline double raw_tail_second_moment(const ScalarLaw& law, double t) {
    constexpr double tol = 1e-10;
    const auto integrand = [&](double x) { return 2.0 * x * x * raw_density(law, x); };
    switch (law.kind) {
        case LawKind::rademacher:
            return t < 1.0 ? 1.0 : 0.0;
        case LawKind::uniform_sym:
            if (t >= 1.0) {
                return 0.0;
            }
            return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(integrand, t, 1.0, 10, tol);
        case LawKind::pareto_sym: {
            boost::math::quadrature::exp_sinh<double> integrator;
            return integrator.integrate(integrand, std::max(t, 1.0), std::numeric_limits<double>::infinity(), tol);
        }
        default: {
            boost::math::quadrature::exp_sinh<double> integrator;
            return integrator.integrate(integrand, t, std::numeric_limits<double>::infinity(), tol);
        }
    }
}

}  // namespace detail

/// E h^2 1{|h| > t} for h distributed according to `law` (quadrature).
inline double tail_second_moment(const ScalarLaw& law, double t) {
    law.validate();
    require(law.has_finite_moment(2.0), ErrorKind::moment, law.name() + " has infinite variance");
    const double s = law.scale();
    return s * s * detail::raw_tail_second_moment(law, t / s);
}

/// Tail cutoff M(h, xi) of an analytic law, located by bracketing root search on
/// the quadrature tail to relative tolerance 1e-6 or better.
inline double tail_cutoff(const ScalarLaw& law, double xi) {
    check_xi(xi);
    law.validate();
    require(law.has_finite_moment(2.0), ErrorKind::moment, law.name() + " has infinite variance");
    const double s = law.scale();
    if (law.kind == LawKind::rademacher) {
        return s;
    }
    const double total = law.raw_absolute_moment(2.0);
    const double budget = 0.5 * xi * total;
    const auto g = [&](double t) { return detail::raw_tail_second_moment(law, t) - budget; };

    double lo = law.kind == LawKind::pareto_sym ? 1.0 : 0.0;
    if (g(lo) <= 0.0) {
        return s * lo;
    }
    double hi = std::max(1.0, 2.0 * lo);
    while (g(hi) > 0.0) {
        lo = hi;
        hi *= 2.0;
        require(hi < 1e300, ErrorKind::degenerate_input, "tail cutoff bracket diverged");
    }
    std::uintmax_t iters = 200;
    const auto [a, b] = boost::math::tools::toms748_solve(g, lo, hi, boost::math::tools::eps_tolerance<double>(40),
                                                          iters);
    return s * 0.5 * (a + b);
}

// ---------------------------------------------------------------------------
// Stable-lower-bound parameter formulas
// ---------------------------------------------------------------------------

/// Absolute constants of the parameter formulas; the defaults are 1.
struct SlbConstants {
    double c0 = 1.0;
    double c1 = 1.0;
};

/// (xi, ell, k) of a stable lower bound for blocks of size m. `ell_raw` is the
/// formula value before flooring and clamping to [0, m].
struct SlbParams {
    double xi = 0.0;
    long long ell = 0;
    double ell_raw = 0.0;
    double k = 0.0;
    std::size_t m = 0;
    SlbConstants constants;
    std::vector<std::string> warnings;
};

namespace detail {

inline SlbParams finish_params(std::size_t m, double xi, double ell_raw, double k, SlbConstants c) {
    SlbParams out;
    out.xi = xi;
    out.m = m;
    out.constants = c;
    out.ell_raw = ell_raw;
    out.k = k;
    // guard against products that land a few ulps below an integer
    const double floored = std::floor(ell_raw * (1.0 + 1e-12));
    out.ell = static_cast<long long>(std::clamp(floored, 0.0, static_cast<double>(m)));
    if (out.ell == 0) {
        out.warnings.emplace_back("ell = 0: the trim budget is vacuous at this (m, xi)");
    }
    return out;
}

inline void check_common(std::size_t m, double xi, SlbConstants c) {
    require(m >= 1, ErrorKind::parameter, "block size m must be positive");
    check_xi(xi);
    require(c.c0 > 0.0 && c.c1 > 0.0, ErrorKind::parameter, "constants must be positive");
}

}  // namespace detail

/// Functions bounded by M: ell = c0 m xi Eh^2/M^2, k = c1 m xi^2 Eh^2/M^2.
inline SlbParams slb_params_bounded(std::size_t m, double xi, double second_moment, double M, SlbConstants c = {}) {
    detail::check_common(m, xi, c);
    require(second_moment > 0.0 && M > 0.0, ErrorKind::parameter, "second moment and M must be positive");
    require(M * M >= second_moment, ErrorKind::consistency,
            "M^2 = " + detail::format_double(M * M) + " is below E h^2 = " + detail::format_double(second_moment));
    const double ratio = second_moment / (M * M);
    const double md = static_cast<double>(m);
    return detail::finish_params(m, xi, c.c0 * md * xi * ratio, c.c1 * md * xi * xi * ratio, c);
}

/// Functions in L_p, p > 2. With base = xi ||h||_2^2/||h||_p^2 and e = p/(p-2):
/// ell = c0 m base^e; k = c1 m base^e for p < 4, else c1 m xi^2 (||h||_2^2/||h||_p^2)^e.
inline SlbParams slb_params_lp(std::size_t m, double xi, double p, double l2, double lp, SlbConstants c = {}) {
    detail::check_common(m, xi, c);
    require(p > 2.0, ErrorKind::range, "p must exceed 2, got " + detail::format_double(p));
    require(l2 > 0.0, ErrorKind::parameter, "L2 norm must be positive");
    require(lp >= l2, ErrorKind::consistency, "L_p norm below L2 norm");
    const double e = p / (p - 2.0);
    const double norm_ratio = (l2 * l2) / (lp * lp);
    const double md = static_cast<double>(m);
    const double ell_raw = c.c0 * md * std::pow(xi * norm_ratio, e);
    const double k = p < 4.0 ? c.c1 * md * std::pow(xi * norm_ratio, e) : c.c1 * md * xi * xi * std::pow(norm_ratio, e);
    return detail::finish_params(m, xi, ell_raw, k, c);
}

/// L_q-L_2 norm equivalence with constant L: base = xi/L^2, e = q/(q-2);
/// ell = c0 m base^e; k = c1 m base^e for q < 4, else c1 m base^2.
inline SlbParams slb_params_norm_equiv(std::size_t m, double xi, double q, double L, SlbConstants c = {}) {
    detail::check_common(m, xi, c);
    require(q > 2.0, ErrorKind::range, "q must exceed 2, got " + detail::format_double(q));
    require(L >= 1.0, ErrorKind::parameter, "norm-equivalence constant must be at least 1");
    const double base = xi / (L * L);
    const double e = q / (q - 2.0);
    const double md = static_cast<double>(m);
    const double ell_raw = c.c0 * md * std::pow(base, e);
    const double k = q < 4.0 ? c.c1 * md * std::pow(base, e) : c.c1 * md * base * base;
    return detail::finish_params(m, xi, ell_raw, k, c);
}

/// Uniform integrability with kappa = kappa(xi): ell = c0 m xi/kappa^2, k = c1 m xi^2/kappa^2.
inline SlbParams slb_params_uniform_integrable(std::size_t m, double xi, double kappa, SlbConstants c = {}) {
    detail::check_common(m, xi, c);
    require(kappa > 0.0, ErrorKind::parameter, "kappa must be positive");
    const double md = static_cast<double>(m);
    return detail::finish_params(m, xi, c.c0 * md * xi / (kappa * kappa), c.c1 * md * xi * xi / (kappa * kappa), c);
}

struct BoundedRegime {
    double M = 1.0;
};
struct LpRegime {
    double p = 4.0;
    double norm_lp = 1.0;
};
struct NormEquivRegime {
    double q = 4.0;
    double L = 1.0;
};
struct UniformIntegrableRegime {
    std::function<double(double)> kappa;
};

/// What is known about the tails of h, together with its L2 norm.
struct MomentProfile {
    std::variant<BoundedRegime, LpRegime, NormEquivRegime, UniformIntegrableRegime> regime;
    double l2_norm = 1.0;

    void validate() const {
        require(l2_norm > 0.0, ErrorKind::parameter, "L2 norm must be positive");
        std::visit(
            [&](const auto& r) {
                using R = std::decay_t<decltype(r)>;
                if constexpr (std::is_same_v<R, BoundedRegime>) {
                    require(r.M >= l2_norm, ErrorKind::consistency, "bounded regime needs M >= ||h||_2");
                } else if constexpr (std::is_same_v<R, LpRegime>) {
                    require(r.p > 2.0, ErrorKind::range, "p must exceed 2");
                    require(r.norm_lp >= l2_norm, ErrorKind::consistency, "L_p norm below L2 norm");
                } else if constexpr (std::is_same_v<R, NormEquivRegime>) {
                    require(r.q > 2.0, ErrorKind::range, "q must exceed 2");
                    require(r.L >= 1.0, ErrorKind::parameter, "L must be at least 1");
                } else {
                    require(static_cast<bool>(r.kappa), ErrorKind::input, "kappa function missing");
                }
            },
            regime);
    }
};

inline SlbParams slb_params(const MomentProfile& profile, std::size_t m, double xi, SlbConstants c = {}) {
    profile.validate();
    return std::visit(
        [&](const auto& r) -> SlbParams {
            using R = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<R, BoundedRegime>) {
                return slb_params_bounded(m, xi, profile.l2_norm * profile.l2_norm, r.M, c);
            } else if constexpr (std::is_same_v<R, LpRegime>) {
                return slb_params_lp(m, xi, r.p, profile.l2_norm, r.norm_lp, c);
            } else if constexpr (std::is_same_v<R, NormEquivRegime>) {
                return slb_params_norm_equiv(m, xi, r.q, r.L, c);
            } else {
                return slb_params_uniform_integrable(m, xi, r.kappa(xi), c);
            }
        },
        profile.regime);
}

// ---------------------------------------------------------------------------
// Monte Carlo failure rate of the stable lower bound
// ---------------------------------------------------------------------------

/// h = transform(Z) with Z from `law`. An empty transform is the identity.
struct HSampler {
    ScalarLaw law;
    std::function<double(double)> transform;
    std::optional<double> second_moment;
};

struct FailureEstimate {
    double rate = 0.0;
    double stderr_ = 0.0;
    std::size_t failures = 0;
    std::size_t trials = 0;
    double second_moment = 0.0;
    std::vector<double> trimmed;  // per-trial trimmed quadratic mean
};

/// E h^2 for the sampler: analytic for the identity transform, Monte Carlo otherwise.
inline double sampler_second_moment(const HSampler& h, std::uint64_t seed, std::size_t mc_size = 400000) {
    if (h.second_moment) {
        return *h.second_moment;
    }
    if (!h.transform) {
        return h.law.second_moment();
    }
    LawSampler draw(h.law);
    auto engine = make_engine(seed, 0, Stream::reference);
    double acc = 0.0;
    for (std::size_t i = 0; i < mc_size; ++i) {
        const double v = h.transform(draw(engine));
        acc += v * v;
    }
    return acc / static_cast<double>(mc_size);
}

/// Fraction of trials where the ell-trimmed quadratic mean of m draws falls
/// below (1 - xi) E h^2.
inline FailureEstimate estimate_slb_failure(const HSampler& h, std::size_t m, double xi, long long ell,
                                            std::size_t trials, std::uint64_t seed, Parallel par = {}) {
    require(m >= 1 && trials >= 1, ErrorKind::parameter, "m and trials must be positive");
    require(xi >= 0.0 && xi <= 1.0, ErrorKind::range, "xi must lie in [0,1]");
    require(ell >= 0 && ell <= static_cast<long long>(m), ErrorKind::range, "ell outside [0, m]");
    h.law.validate();

    FailureEstimate out;
    out.trials = trials;
    out.second_moment = sampler_second_moment(h, seed);
    out.trimmed.assign(trials, 0.0);
    const double threshold = (1.0 - xi) * out.second_moment;

    parallel_for(trials, par, [&](std::size_t t) {
        LawSampler draw(h.law);
        auto engine = make_engine(seed, t, Stream::scalar);
        std::vector<double> v(m);
        for (auto& x : v) {
            x = draw(engine);
            if (h.transform) {
                x = h.transform(x);
            }
        }
        out.trimmed[t] = trimmed_sq_mean(v, ell);
    });

    out.failures = static_cast<std::size_t>(
        std::count_if(out.trimmed.begin(), out.trimmed.end(), [&](double v) { return v < threshold; }));
    out.rate = static_cast<double>(out.failures) / static_cast<double>(trials);
    out.stderr_ = std::sqrt(out.rate * (1.0 - out.rate) / static_cast<double>(trials));
    return out;
}

// ---------------------------------------------------------------------------
// Moments of Rademacher sums
// ---------------------------------------------------------------------------

/// K_p(x) = sum_{i <= floor(p)} x*_i + sqrt(p) (sum_{i > floor(p)} (x*_i)^2)^{1/2},
/// where x* is the nonincreasing rearrangement of |x|. Two-sided equivalent (up
/// to absolute constants) to the L_p norm of sum eps_i x_i.
inline double bernoulli_moment_functional(std::span<const double> x, double p) {
    require(p >= 2.0, ErrorKind::range, "p must be at least 2, got " + detail::format_double(p));
    std::vector<double> a(x.size());
    std::transform(x.begin(), x.end(), a.begin(), [](double v) { return std::abs(v); });
    std::sort(a.begin(), a.end(), std::greater<>());
    const auto cut = std::min<std::size_t>(a.size(), static_cast<std::size_t>(std::floor(p)));
    double head = 0.0;
    for (std::size_t i = 0; i < cut; ++i) {
        head += a[i];
    }
    double tail = 0.0;
    for (std::size_t i = cut; i < a.size(); ++i) {
        tail += a[i] * a[i];
    }
    return head + std::sqrt(p) * std::sqrt(tail);
}

struct MomentEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

/// (E |sum eps_i x_i|^p)^{1/p} estimated from `trials` sign vectors.
inline MomentEstimate mc_bernoulli_moment(std::span<const double> x, double p, std::size_t trials,
                                          std::uint64_t seed, Parallel par = {}) {
    require(p > 0.0, ErrorKind::range, "p must be positive");
    require(trials >= 2, ErrorKind::parameter, "need at least two trials");
    std::vector<double> powers(trials);
    parallel_for(trials, par, [&](std::size_t t) {
        const auto eps = sign_vector(seed, t, x.size());
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            s += eps[i] * x[i];
        }
        powers[t] = std::pow(std::abs(s), p);
    });
    const double n = static_cast<double>(trials);
    const double mean = std::accumulate(powers.begin(), powers.end(), 0.0) / n;
    if (mean == 0.0) {
        return {0.0, 0.0};
    }
    double var = 0.0;
    for (double v : powers) {
        var += (v - mean) * (v - mean);
    }
    var /= (n - 1.0);
    const double value = std::pow(mean, 1.0 / p);
    return {value, value * std::sqrt(var / n) / (p * mean)};
}

/// Exact (E |sum eps_i x_i|^p)^{1/p} by enumerating all sign patterns (m <= 30).
inline double exact_bernoulli_moment(std::span<const double> x, double p) {
    require(p > 0.0, ErrorKind::range, "p must be positive");
    require(x.size() <= 30, ErrorKind::range, "exact enumeration limited to m <= 30");
    if (x.empty()) {
        return 0.0;
    }
    // eps_1 = +1 without loss (|S| is invariant under a global sign flip); walk
    // the remaining 2^{m-1} patterns in Gray-code order.
    const std::size_t free = x.size() - 1;
    const std::uint64_t patterns = std::uint64_t{1} << free;
    std::vector<double> eps(x.size(), 1.0);
    double s = std::accumulate(x.begin(), x.end(), 0.0);
    double acc = std::pow(std::abs(s), p);
    for (std::uint64_t g = 1; g < patterns; ++g) {
        const auto bit = static_cast<std::size_t>(std::countr_zero(g)) + 1;
        s -= 2.0 * eps[bit] * x[bit];
        eps[bit] = -eps[bit];
        acc += std::pow(std::abs(s), p);
    }
    return std::pow(acc / static_cast<double>(patterns), 1.0 / p);
}

}  // namespace smallball
