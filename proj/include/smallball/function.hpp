#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "smallball/error.hpp"

namespace smallball {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using PointFn = std::function<double(const Eigen::Ref<const Eigen::RowVectorXd>&)>;

namespace detail {

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace detail

/// An evaluable function on R^d with a queryable L2 norm.
///
/// Linear handles x -> <t, x> know their norm exactly (||t||_2, valid for
/// isotropic designs). Dictionary handles wrap an arbitrary callable and carry
/// either an analytic norm or a Monte Carlo estimate with its standard error.
/// Affine handles are weighted sums of other handles; sums of linear handles
/// collapse back to a single linear handle.
class FunctionHandle {
  public:
    enum class Kind { linear, dictionary, affine };

    static FunctionHandle linear(Vector t, std::string id = {}) {
        FunctionHandle h;
        h.kind_ = Kind::linear;
        h.norm_ = t.norm();
        h.norm_exact_ = true;
        h.coefficients_ = std::move(t);
        h.id_ = std::move(id);
        return h;
    }

    static FunctionHandle dictionary(std::string id, PointFn fn, std::optional<double> l2_norm = std::nullopt,
                                     double l2_se = 0.0) {
        require(static_cast<bool>(fn), ErrorKind::input, "dictionary handle '" + id + "' has no callable");
        FunctionHandle h;
        h.kind_ = Kind::dictionary;
        h.fn_ = std::move(fn);
        h.norm_ = l2_norm;
        h.norm_se_ = l2_se;
        h.norm_exact_ = l2_norm.has_value() && l2_se == 0.0;
        h.id_ = std::move(id);
        return h;
    }

    /// x -> c, with exact norm |c|.
    static FunctionHandle constant(double c, std::string id = {}) {
        if (id.empty()) {
            id = "const(" + detail::format_double(c) + ")";
        }
        return dictionary(std::move(id), [c](const auto&) { return c; }, std::abs(c));
    }

    static FunctionHandle affine(const std::vector<std::pair<double, FunctionHandle>>& terms, std::string id = {}) {
        require(!terms.empty(), ErrorKind::input, "affine combination needs at least one term");
        bool all_linear = true;
        for (const auto& [w, h] : terms) {
            all_linear = all_linear && h.kind() == Kind::linear;
        }
        if (all_linear) {
            Vector t = Vector::Zero(terms.front().second.coefficients().size());
            for (const auto& [w, h] : terms) {
                require(h.coefficients().size() == t.size(), ErrorKind::shape,
                        "affine combination of linear handles with different dimensions");
                t += w * h.coefficients();
            }
            return linear(std::move(t), std::move(id));
        }
        FunctionHandle out;
        out.kind_ = Kind::affine;
        out.id_ = std::move(id);
        for (const auto& [w, h] : terms) {
            out.terms_.emplace_back(w, std::make_shared<const FunctionHandle>(h));
        }
        return out;
    }

    Kind kind() const noexcept { return kind_; }
    const std::string& id() const noexcept { return id_; }
    FunctionHandle with_id(std::string id) const {
        auto copy = *this;
        copy.id_ = std::move(id);
        return copy;
    }

    const Vector& coefficients() const {
        require(kind_ == Kind::linear, ErrorKind::input, "coefficients() on a non-linear handle");
        return coefficients_;
    }

    double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        switch (kind_) {
            case Kind::linear:
                require(x.size() == coefficients_.size(), ErrorKind::shape, "point dimension mismatch");
                return x.dot(coefficients_.transpose());
            case Kind::dictionary:
                return fn_(x);
            case Kind::affine: {
                double acc = 0.0;
                for (const auto& [w, h] : terms_) {
                    acc += w * (*h)(x);
                }
                return acc;
            }
        }
        return 0.0;
    }

    /// Values (f(X_1), ..., f(X_N)) for the rows of X.
    Vector evaluate(const Matrix& X) const {
        if (kind_ == Kind::linear) {
            require(X.cols() == coefficients_.size(), ErrorKind::shape,
                    "design has " + std::to_string(X.cols()) + " columns, handle expects " +
                        std::to_string(coefficients_.size()));
            return X * coefficients_;
        }
        if (kind_ == Kind::affine) {
            Vector out = Vector::Zero(X.rows());
            for (const auto& [w, h] : terms_) {
                out += w * h->evaluate(X);
            }
            return out;
        }
        Vector out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            out[i] = fn_(X.row(i));
        }
        return out;
    }

    bool has_l2_norm() const noexcept { return norm_.has_value(); }
    bool l2_exact() const noexcept { return norm_exact_; }
    double l2_se() const noexcept { return norm_se_; }
    double l2_norm() const {
        require(norm_.has_value(), ErrorKind::input, "handle '" + descriptor() + "' has no L2 norm; estimate it first");
        return *norm_;
    }

    FunctionHandle with_l2_norm(double norm, double se = 0.0) const {
        auto copy = *this;
        copy.norm_ = norm;
        copy.norm_se_ = se;
        copy.norm_exact_ = se == 0.0;
        return copy;
    }

    /// Canonical text form; equal descriptors mean equal functions.
    std::string descriptor() const {
        switch (kind_) {
            case Kind::linear: {
                std::string s = "linear(";
                for (Eigen::Index i = 0; i < coefficients_.size(); ++i) {
                    if (i > 0) {
                        s += ',';
                    }
                    s += detail::format_double(coefficients_[i]);
                }
                return s + ")";
            }
            case Kind::dictionary:
                return "dictionary(" + id_ + ")";
            case Kind::affine: {
                std::string s = "affine(";
                for (std::size_t k = 0; k < terms_.size(); ++k) {
                    if (k > 0) {
                        s += '+';
                    }
                    s += detail::format_double(terms_[k].first) + "*" + terms_[k].second->descriptor();
                }
                return s + ")";
            }
        }
        return {};
    }

  private:
    FunctionHandle() = default;

    Kind kind_ = Kind::linear;
    std::string id_;
    Vector coefficients_;
    PointFn fn_;
    std::vector<std::pair<double, std::shared_ptr<const FunctionHandle>>> terms_;
    std::optional<double> norm_;
    double norm_se_ = 0.0;
    bool norm_exact_ = false;
};

struct NormEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

/// Monte Carlo L2 norm of h on a reference sample drawn from the design law.
inline NormEstimate estimate_l2_norm(const FunctionHandle& h, const Matrix& reference) {
    require(reference.rows() > 1, ErrorKind::input, "reference sample needs at least two rows");
    const Vector sq = h.evaluate(reference).array().square();
    const double n = static_cast<double>(sq.size());
    const double mean = sq.mean();
    const double var = (sq.array() - mean).square().sum() / (n - 1.0);
    const double norm = std::sqrt(mean);
    const double se = norm > 0.0 ? std::sqrt(var / n) / (2.0 * norm) : 0.0;
    return {norm, se};
}

inline bool both_linear(const FunctionHandle& a, const FunctionHandle& b) noexcept {
    return a.kind() == FunctionHandle::Kind::linear && b.kind() == FunctionHandle::Kind::linear;
}

/// Exact L2 distance between two linear handles under an isotropic design.
inline double l2_distance(const FunctionHandle& a, const FunctionHandle& b) {
    require(both_linear(a, b), ErrorKind::input,
            "exact L2 distance needs linear handles; pass a reference sample for other kinds");
    require(a.coefficients().size() == b.coefficients().size(), ErrorKind::shape, "dimension mismatch");
    return (a.coefficients() - b.coefficients()).norm();
}

/// L2 distance, exact for linear pairs and estimated on `reference` otherwise.
inline double l2_distance(const FunctionHandle& a, const FunctionHandle& b, const Matrix& reference) {
    if (both_linear(a, b)) {
        return l2_distance(a, b);
    }
    return std::sqrt((a.evaluate(reference) - b.evaluate(reference)).squaredNorm() /
                     static_cast<double>(reference.rows()));
}

}  // namespace smallball
