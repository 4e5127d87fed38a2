#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "smallball/error.hpp"
#include "smallball/function.hpp"
#include "smallball/rng.hpp"

namespace smallball {

enum class LawKind { rademacher, uniform_sym, gaussian, student_t, pareto_sym };

/// A symmetric scalar law. `param` is the degrees of freedom for student_t and
/// the tail index for pareto_sym (|Z| = U^{-1/alpha} on [1, inf)); it is unused
/// otherwise. Standardized laws are rescaled by an analytic constant to unit
/// second moment.
struct ScalarLaw {
    LawKind kind = LawKind::gaussian;
    double param = 0.0;
    bool standardized = true;

    static ScalarLaw rademacher() { return {LawKind::rademacher, 0.0, true}; }
    static ScalarLaw uniform_sym(bool standardized = true) { return {LawKind::uniform_sym, 0.0, standardized}; }
    static ScalarLaw gaussian() { return {LawKind::gaussian, 0.0, true}; }
    static ScalarLaw student_t(double dof, bool standardized = true) {
        return {LawKind::student_t, dof, standardized};
    }
    static ScalarLaw pareto_sym(double tail_index, bool standardized = true) {
        return {LawKind::pareto_sym, tail_index, standardized};
    }

    void validate() const {
        if (kind == LawKind::student_t || kind == LawKind::pareto_sym) {
            const char* what = kind == LawKind::student_t ? "degrees of freedom" : "tail index";
            require(std::isfinite(param) && param > 0.0, ErrorKind::parameter,
                    std::string(what) + " must be positive, got " + detail::format_double(param));
            require(!standardized || param > 2.0, ErrorKind::parameter,
                    std::string("standardization needs ") + what + " > 2, got " + detail::format_double(param));
        }
    }

    /// E|Z|^q of the unscaled law; +inf when the moment does not exist.
    double raw_absolute_moment(double q) const {
        constexpr double inf = std::numeric_limits<double>::infinity();
        switch (kind) {
            case LawKind::rademacher:
                return 1.0;
            case LawKind::uniform_sym:
                return 1.0 / (q + 1.0);
            case LawKind::gaussian:
                return std::pow(2.0, q / 2.0) * std::tgamma((q + 1.0) / 2.0) / std::sqrt(std::numbers::pi);
            case LawKind::student_t:
                if (q >= param) {
                    return inf;
                }
                return std::exp((q / 2.0) * std::log(param) + std::lgamma((q + 1.0) / 2.0) +
                                std::lgamma((param - q) / 2.0) - 0.5 * std::log(std::numbers::pi) -
                                std::lgamma(param / 2.0));
            case LawKind::pareto_sym:
                return q >= param ? inf : param / (param - q);
        }
        return inf;
    }

    /// Multiplier applied to raw draws.
    double scale() const { return standardized ? 1.0 / std::sqrt(raw_absolute_moment(2.0)) : 1.0; }

    double absolute_moment(double q) const { return std::pow(scale(), q) * raw_absolute_moment(q); }
    double second_moment() const { return absolute_moment(2.0); }
    bool has_finite_moment(double q) const { return std::isfinite(raw_absolute_moment(q)); }

    std::string name() const {
        std::string base;
        switch (kind) {
            case LawKind::rademacher: base = "rademacher"; break;
            case LawKind::uniform_sym: base = "uniform_sym"; break;
            case LawKind::gaussian: base = "gaussian"; break;
            case LawKind::student_t: base = "student_t(" + detail::format_double(param) + ")"; break;
            case LawKind::pareto_sym: base = "pareto_sym(" + detail::format_double(param) + ")"; break;
        }
        return standardized ? base : base + "[raw]";
    }

    friend bool operator==(const ScalarLaw&, const ScalarLaw&) = default;
};

/// Stateful draw helper: keeps one distribution object per law so repeated
/// draws from the same engine are cheap.
class LawSampler {
  public:
    explicit LawSampler(const ScalarLaw& law)
        : law_(law), scale_(law.scale()), student_(law.kind == LawKind::student_t ? law.param : 1.0) {
        law.validate();
    }

    double operator()(Engine& engine) {
        double z = 0.0;
        switch (law_.kind) {
            case LawKind::rademacher:
                z = random_sign(engine);
                break;
            case LawKind::uniform_sym:
                z = 2.0 * uniform01(engine) - 1.0;
                break;
            case LawKind::gaussian:
                z = normal_(engine);
                break;
            case LawKind::student_t:
                z = student_(engine);
                break;
            case LawKind::pareto_sym: {
                const double u = uniform01(engine);
                z = random_sign(engine) * std::pow(1.0 - u, -1.0 / law_.param);
                break;
            }
        }
        return scale_ * z;
    }

    void fill(Engine& engine, std::span<double> out) {
        for (auto& x : out) {
            x = (*this)(engine);
        }
    }

  private:
    ScalarLaw law_;
    double scale_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::student_t_distribution<double> student_;
};

/// m iid draws; deterministic in (law, m, seed).
inline std::vector<double> sample_scalar(const ScalarLaw& law, std::size_t m, std::uint64_t seed) {
    require(m >= 1, ErrorKind::parameter, "sample size must be positive");
    LawSampler sampler(law);
    auto engine = make_engine(seed, 0, Stream::scalar);
    std::vector<double> out(m);
    sampler.fill(engine, out);
    return out;
}

/// N x d matrix with iid coordinates drawn from `engine` in row-major order.
inline Matrix sample_isotropic(const ScalarLaw& law, Eigen::Index d, Eigen::Index N, Engine& engine) {
    require(d >= 1 && N >= 1, ErrorKind::parameter, "design dimensions must be positive");
    law.validate();
    require(law.standardized, ErrorKind::parameter, "isotropic designs need a standardized law");
    LawSampler sampler(law);
    Matrix X(N, d);
    for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            X(i, j) = sampler(engine);
        }
    }
    return X;
}

/// Isotropic design: rows iid, coordinates iid with unit variance, so E<X,t>^2 = ||t||^2.
inline Matrix sample_isotropic(const ScalarLaw& law, Eigen::Index d, Eigen::Index N, std::uint64_t seed) {
    auto engine = make_engine(seed, 0, Stream::design);
    return sample_isotropic(law, d, N, engine);
}

struct NormEquivEstimate {
    double L = 1.0;
    double stderr_ = 0.0;
    Vector direction;
};

/// Monte Carlo estimate of sup_t ||<X,t>||_q / ||<X,t>||_2 over sampled
/// directions. The first min(dim, directions) directions are the coordinate
/// vectors; the rest are uniform on the sphere.
inline NormEquivEstimate estimate_norm_equiv_L(const ScalarLaw& law, double q, std::size_t mc_size,
                                               std::uint64_t seed, Eigen::Index dim = 1,
                                               std::size_t directions = 1) {
    require(q > 2.0, ErrorKind::range, "q must exceed 2");
    require(mc_size >= 2, ErrorKind::parameter, "mc_size must be at least 2");
    require(dim >= 1 && directions >= 1, ErrorKind::parameter, "dim and directions must be positive");
    law.validate();
    require(law.has_finite_moment(q), ErrorKind::moment,
            law.name() + " has no finite moment of order " + detail::format_double(q));

    auto dir_engine = make_engine(seed, 0, Stream::directions);
    std::normal_distribution<double> normal;
    Matrix T(dim, static_cast<Eigen::Index>(directions));
    for (Eigen::Index k = 0; k < T.cols(); ++k) {
        if (k < dim) {
            T.col(k) = Vector::Unit(dim, k);
        } else {
            for (Eigen::Index j = 0; j < dim; ++j) {
                T(j, k) = normal(dir_engine);
            }
            T.col(k).normalize();
        }
    }

    // the ratio is scale invariant, so raw laws are sampled as they are
    LawSampler sampler(law);
    auto engine = make_engine(seed, 0, Stream::design);
    Matrix X(static_cast<Eigen::Index>(mc_size), dim);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) {
            X(i, j) = sampler(engine);
        }
    }
    const Matrix V = X * T;
    const double n = static_cast<double>(mc_size);

    NormEquivEstimate best;
    best.L = -1.0;
    for (Eigen::Index k = 0; k < V.cols(); ++k) {
        const Eigen::ArrayXd a = V.col(k).array().abs().pow(q);
        const Eigen::ArrayXd b = V.col(k).array().square();
        const double A = a.mean();
        const double B = b.mean();
        if (B <= 0.0) {
            continue;
        }
        const double ratio = std::pow(A, 1.0 / q) / std::sqrt(B);
        // delta method on log ratio = log(A)/q - log(B)/2
        const Eigen::ArrayXd z = a / (q * A) - b / (2.0 * B);
        const double var = (z - z.mean()).square().sum() / (n - 1.0);
        if (ratio > best.L) {
            best.L = ratio;
            best.stderr_ = ratio * std::sqrt(var / n);
            best.direction = T.col(k);
        }
    }
    require(best.L > 0.0, ErrorKind::degenerate_input, "all projections vanished");
    return best;
}

struct DatasetMeta {
    std::string law;
    std::uint64_t seed = 0;
    std::string noise_kind;
    std::string f0;
    double sigma = 0.0;
};

/// Design matrix with optional targets.
struct Dataset {
    Matrix X;
    std::optional<Vector> y;
    DatasetMeta meta;

    Eigen::Index size() const noexcept { return X.rows(); }
    Eigen::Index dim() const noexcept { return X.cols(); }

    const Vector& targets() const {
        require(y.has_value(), ErrorKind::input, "dataset has no targets");
        return *y;
    }
};

/// y_i = f0(X_i) + sigma * W_i with X isotropic from `design` and W iid from
/// `noise`, independent of X.
inline Dataset sample_regression(const FunctionHandle& f0, const ScalarLaw& noise, double sigma, Eigen::Index N,
                                 Eigen::Index d, std::uint64_t seed,
                                 const ScalarLaw& design = ScalarLaw::gaussian()) {
    require(sigma >= 0.0, ErrorKind::parameter, "sigma must be nonnegative");
    if (f0.kind() == FunctionHandle::Kind::linear) {
        require(f0.coefficients().size() == d, ErrorKind::shape,
                "f0 has dimension " + std::to_string(f0.coefficients().size()) + ", design has " + std::to_string(d));
    }
    noise.validate();
    Dataset data;
    data.X = sample_isotropic(design, d, N, seed);
    Vector y = f0.evaluate(data.X);
    if (sigma > 0.0) {
        LawSampler sampler(noise);
        auto engine = make_engine(seed, 0, Stream::noise);
        for (Eigen::Index i = 0; i < N; ++i) {
            y[i] += sigma * sampler(engine);
        }
    }
    data.y = std::move(y);
    data.meta = {design.name(), seed, noise.name(), f0.descriptor(), sigma};
    return data;
}

}  // namespace smallball
