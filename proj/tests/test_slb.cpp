#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "smallball/slb.hpp"

using namespace smallball;

namespace {

double phi(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }
double Phi(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

// E g^2 1{|g| > t} = 2 [t phi(t) + 1 - Phi(t)] for a standard gaussian.
double gaussian_tail(double t) { return 2.0 * (t * phi(t) + 1.0 - Phi(t)); }

// Independent oracle: plain bisection on the closed form.
double gaussian_cutoff_oracle(double xi) {
    double lo = 0.0, hi = 20.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (gaussian_tail(mid) <= 0.5 * xi ? hi : lo) = mid;
    }
    return hi;
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::config;  // sentinel: nothing thrown
}

}  // namespace

TEST(TrimmedSqMean, HandComputed) {
    const std::vector<double> v{3, 1, 2, 0};
    EXPECT_DOUBLE_EQ(trimmed_sq_mean(v, 1), 1.25);
}

TEST(TrimmedSqMean, NoTrimIsMeanOfSquares) {
    const std::vector<double> v{1.5, -2.0, 0.25, 3.0, -0.5};
    double expected = 0.0;
    for (double x : v) expected += x * x;
    EXPECT_DOUBLE_EQ(trimmed_sq_mean(v, 0), expected / 5.0);
}

TEST(TrimmedSqMean, FullTrimIsZero) {
    const std::vector<double> v{1, 1, 1, 1};
    EXPECT_DOUBLE_EQ(trimmed_sq_mean(v, 4), 0.0);
}

TEST(TrimmedSqMean, DropsLargestMagnitudesNotLargestValues) {
    const std::vector<double> v{-10, 1, 2};
    EXPECT_DOUBLE_EQ(trimmed_sq_mean(v, 1), 5.0 / 3.0);
}

TEST(TrimmedSqMean, RangeErrors) {
    const std::vector<double> v{1, 2};
    EXPECT_EQ(kind_of([&] { trimmed_sq_mean(v, 3); }), ErrorKind::range);
    EXPECT_EQ(kind_of([&] { trimmed_sq_mean(v, -1); }), ErrorKind::range);
}

TEST(TailCutoff, SingleAtom) {
    const std::vector<double> ones(10, 1.0);
    for (double xi : {0.05, 0.5, 0.99}) {
        EXPECT_DOUBLE_EQ(tail_cutoff(ones, xi), 1.0);
    }
    EXPECT_DOUBLE_EQ(tail_cutoff(ScalarLaw::rademacher(), 0.3), 1.0);
}

TEST(TailCutoff, TwoAtomLaw) {
    const std::vector<double> values{2.0, 0.0};
    const std::vector<double> weights{1.0 / 8.0, 7.0 / 8.0};
    EXPECT_DOUBLE_EQ(tail_cutoff(values, weights, 0.5), 2.0);
    // the same law as an empirical sample of size 8
    const std::vector<double> sample{2, 0, 0, 0, 0, 0, 0, 0};
    EXPECT_DOUBLE_EQ(tail_cutoff(sample, 0.5), 2.0);
}

TEST(TailCutoff, RightContinuousAtTies) {
    // mass above 1 is 4*(1/4) = 1 of total 1.5; budget 0.5*0.9*1.5 = 0.675
    const std::vector<double> sample{2, 1, 1, 0};
    EXPECT_DOUBLE_EQ(tail_cutoff(sample, 0.9), 2.0);
    // a budget that covers the top atom and exactly the tie level
    EXPECT_DOUBLE_EQ(tail_cutoff(sample, 0.999), 2.0);
}

TEST(TailCutoff, GaussianQuadratureMatchesClosedForm) {
    for (double xi : {0.01, 0.1, 0.5}) {
        const double oracle = gaussian_cutoff_oracle(xi);
        EXPECT_NEAR(tail_cutoff(ScalarLaw::gaussian(), xi), oracle, 1e-6 * oracle) << "xi " << xi;
    }
    EXPECT_NEAR(tail_second_moment(ScalarLaw::gaussian(), 1.3), gaussian_tail(1.3), 1e-9);
}

TEST(TailCutoff, GaussianEmpiricalWithinTwoPercent) {
    const double analytic = tail_cutoff(ScalarLaw::gaussian(), 0.1);
    const auto sample = sample_scalar(ScalarLaw::gaussian(), 1000000, 77);
    EXPECT_NEAR(tail_cutoff(sample, 0.1), analytic, 0.02 * analytic);
}

TEST(TailCutoff, OtherLawsMatchClosedForms) {
    // uniform on [-1,1] raw: E U^2 1{|U|>t} = (1 - t^3)/3, total 1/3
    const auto u = ScalarLaw::uniform_sym(false);
    const double xi = 0.2;
    const double t_u = std::cbrt(1.0 - xi / 2.0);
    EXPECT_NEAR(tail_cutoff(u, xi), t_u, 1e-6);
    // pareto raw alpha: E Z^2 1{|Z|>t} = alpha/(alpha-2) t^{2-alpha} for t >= 1
    const double alpha = 4.5;
    const auto p = ScalarLaw::pareto_sym(alpha, false);
    const double t_p = std::pow(xi / 2.0, 1.0 / (2.0 - alpha));
    EXPECT_NEAR(tail_cutoff(p, xi), t_p, 1e-6 * t_p);
    // standardization scales the cutoff
    EXPECT_NEAR(tail_cutoff(ScalarLaw::pareto_sym(alpha), xi), t_p * ScalarLaw::pareto_sym(alpha).scale(), 1e-6 * t_p);
}

TEST(TailCutoff, XiOutsideOpenIntervalIsRangeError) {
    const std::vector<double> v{1, 2};
    EXPECT_EQ(kind_of([&] { tail_cutoff(v, 0.0); }), ErrorKind::range);
    EXPECT_EQ(kind_of([&] { tail_cutoff(v, 1.0); }), ErrorKind::range);
}

TEST(SlbParams, BoundedSubstitution) {
    const auto p = slb_params_bounded(1000, 0.1, 1.0, 2.0);
    EXPECT_EQ(p.ell, 25);
    EXPECT_DOUBLE_EQ(p.k, 2.5);
    EXPECT_EQ(slb_params_bounded(100, 0.5, 4.0, 2.0).ell, 50);
}

TEST(SlbParams, BoundedXiHomogeneity) {
    const auto a = slb_params_bounded(1000, 0.1, 1.0, 3.0);
    const auto b = slb_params_bounded(1000, 0.2, 1.0, 3.0);
    EXPECT_NEAR(b.ell_raw / a.ell_raw, 2.0, 1e-12);
    EXPECT_NEAR(b.k / a.k, 4.0, 1e-12);
}

TEST(SlbParams, BoundedInconsistentMomentsRejected) {
    EXPECT_EQ(kind_of([] { slb_params_bounded(100, 0.1, 4.0, 1.0); }), ErrorKind::consistency);
}

TEST(SlbParams, LpSubstitutions) {
    EXPECT_EQ(slb_params_lp(100, 0.25, 4.0, 1.0, 1.0).ell, 6);
    // l2^2/lp^2 = 0.5
    EXPECT_EQ(slb_params_lp(1000, 0.5, 3.0, 1.0, std::sqrt(2.0)).ell, 15);
}

TEST(SlbParams, LpLargePApproachesBoundedExponent) {
    const double xi = 0.1;
    const auto a = slb_params_lp(1000, xi, 1e6, 1.0, 1.0);
    const auto b = slb_params_lp(1000, 2.0 * xi, 1e6, 1.0, 1.0);
    EXPECT_NEAR(std::log(b.ell_raw / a.ell_raw) / std::log(2.0), 1.0, 1e-5);
}

TEST(SlbParams, NormEquivSubstitutions) {
    EXPECT_EQ(slb_params_norm_equiv(10000, 0.1, 4.0, 1.0).ell, 100);
    EXPECT_EQ(slb_params_norm_equiv(10000, 0.2, 3.0, 1.0).ell, 80);
    // base xi/L^2 -> 1 gives ell_raw -> c0 m whatever q (base 1 itself needs xi >= 1)
    for (double q : {2.5, 3.0, 7.0}) {
        const double xi = 1.0 - 1e-12;
        EXPECT_NEAR(slb_params_norm_equiv(321, xi, q, 1.0).ell_raw, 321.0, 1e-7) << "q " << q;
    }
}

TEST(SlbParams, ZeroEllWarns) {
    const auto p = slb_params_norm_equiv(10, 0.01, 4.0, 3.0);
    EXPECT_EQ(p.ell, 0);
    EXPECT_FALSE(p.warnings.empty());
}

TEST(SlbParams, ProfileDispatch) {
    MomentProfile profile{BoundedRegime{2.0}, 1.0};
    EXPECT_EQ(slb_params(profile, 1000, 0.1).ell, 25);
    profile.regime = NormEquivRegime{4.0, 1.0};
    EXPECT_EQ(slb_params(profile, 10000, 0.1).ell, 100);
    profile.regime = UniformIntegrableRegime{[](double) { return 2.0; }};
    EXPECT_EQ(slb_params(profile, 1000, 0.1).ell, 25);
}

TEST(SlbFailure, ConstantModulusNeverFails) {
    const auto est = estimate_slb_failure(HSampler{ScalarLaw::rademacher(), {}, {}}, 100, 0.2, 19, 500, 3);
    EXPECT_EQ(est.failures, 0U);
    EXPECT_DOUBLE_EQ(est.rate, 0.0);
}

TEST(SlbFailure, FullTrimAlwaysFails) {
    const auto est = estimate_slb_failure(HSampler{ScalarLaw::gaussian(), {}, {}}, 50, 0.3, 50, 200, 3);
    EXPECT_DOUBLE_EQ(est.rate, 1.0);
}

TEST(SlbFailure, StandardErrorIsBinomial) {
    const auto est = estimate_slb_failure(HSampler{ScalarLaw::uniform_sym(), {}, {}}, 100, 0.1, 3, 2000, 8);
    EXPECT_GT(est.rate, 0.0);
    EXPECT_LT(est.rate, 1.0);
    EXPECT_NEAR(est.stderr_, std::sqrt(est.rate * (1 - est.rate) / 2000.0), 1e-15);
}

TEST(SlbFailure, TransformSecondMomentByMonteCarlo) {
    HSampler h{ScalarLaw::gaussian(), [](double z) { return 2.0 * z; }, {}};
    EXPECT_NEAR(sampler_second_moment(h, 1), 4.0, 0.05);
}

TEST(BernoulliFunctional, SingleSpike) {
    const std::vector<double> e1{1, 0, 0, 0};
    EXPECT_DOUBLE_EQ(bernoulli_moment_functional(e1, 2.0), 1.0);
}

TEST(BernoulliFunctional, ExhaustedTail) {
    const std::vector<double> ones(5, 1.0);
    EXPECT_DOUBLE_EQ(bernoulli_moment_functional(ones, 5.0), 5.0);
    EXPECT_DOUBLE_EQ(bernoulli_moment_functional(ones, 9.0), 5.0);
}

TEST(BernoulliFunctional, FlatVector) {
    const std::vector<double> ones(10, 1.0);
    EXPECT_NEAR(bernoulli_moment_functional(ones, 4.0), 4.0 + 2.0 * std::sqrt(6.0), 1e-12);
}

TEST(BernoulliFunctional, RearrangementAndSignInvariant) {
    const std::vector<double> a{0.1, -3.0, 2.0, 0.5, -0.7};
    const std::vector<double> b{-0.7, 0.5, 2.0, 3.0, -0.1};
    EXPECT_DOUBLE_EQ(bernoulli_moment_functional(a, 3.5), bernoulli_moment_functional(b, 3.5));
}

TEST(BernoulliFunctional, PBelowTwoIsRangeError) {
    const std::vector<double> v{1.0};
    EXPECT_EQ(kind_of([&] { bernoulli_moment_functional(v, 1.5); }), ErrorKind::range);
}

TEST(BernoulliMoment, UnitSpikeIsExactlyOne) {
    const std::vector<double> e1{1, 0, 0};
    for (double p : {2.0, 4.0, 7.5}) {
        EXPECT_DOUBLE_EQ(mc_bernoulli_moment(e1, p, 100, 1).value, 1.0);
        EXPECT_DOUBLE_EQ(exact_bernoulli_moment(e1, p), 1.0);
    }
}

TEST(BernoulliMoment, ZeroVector) {
    const std::vector<double> z(6, 0.0);
    EXPECT_DOUBLE_EQ(mc_bernoulli_moment(z, 4.0, 100, 1).value, 0.0);
    EXPECT_DOUBLE_EQ(exact_bernoulli_moment(z, 4.0), 0.0);
}

TEST(BernoulliMoment, ExactMatchesHandEnumeration) {
    // x = (1, 2): sums +-3, +-1 -> E S^2 = 5, E S^4 = (81 + 1)/2 = 41
    const std::vector<double> x{1, 2};
    EXPECT_NEAR(exact_bernoulli_moment(x, 2.0), std::sqrt(5.0), 1e-14);
    EXPECT_NEAR(exact_bernoulli_moment(x, 4.0), std::pow(41.0, 0.25), 1e-14);
    // p = 2 is the Euclidean norm for any x
    const std::vector<double> y{0.3, -1.2, 2.5, 0.7, 0.1, -0.9};
    EXPECT_NEAR(exact_bernoulli_moment(y, 2.0), std::sqrt(0.09 + 1.44 + 6.25 + 0.49 + 0.01 + 0.81), 1e-13);
}

TEST(BernoulliMoment, MonteCarloAgreesWithExact) {
    const std::vector<double> x{0.9, -0.4, 0.3, 0.2, 0.2, -0.1, 0.05, 0.6};
    const double exact = exact_bernoulli_moment(x, 4.0);
    const auto mc = mc_bernoulli_moment(x, 4.0, 200000, 5);
    EXPECT_NEAR(mc.value, exact, 4.0 * mc.stderr_);
}

TEST(BernoulliMoment, RandomUnitVectorWithinConstantFactor) {
    auto e = make_engine(4, 0);
    std::normal_distribution<double> g;
    std::vector<double> x(20);
    double n2 = 0.0;
    for (auto& v : x) {
        v = g(e);
        n2 += v * v;
    }
    for (auto& v : x) v /= std::sqrt(n2);
    const double ratio = mc_bernoulli_moment(x, 4.0, 100000, 6).value / bernoulli_moment_functional(x, 4.0);
    EXPECT_GE(ratio, 0.2);
    EXPECT_LE(ratio, 5.0);
}
