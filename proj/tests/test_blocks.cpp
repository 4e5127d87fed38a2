#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "smallball/blocks.hpp"
#include "smallball/distributions.hpp"

using namespace smallball;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::config;
}

// Independent brute-force packing oracle over an explicit distance matrix.
std::vector<std::size_t> brute_force_greedy(const Matrix& D, double rho) {
    std::vector<std::size_t> chosen;
    for (Eigen::Index i = 0; i < D.rows(); ++i) {
        bool ok = true;
        for (auto j : chosen) {
            ok = ok && D(i, static_cast<Eigen::Index>(j)) >= rho;
        }
        if (ok) chosen.push_back(static_cast<std::size_t>(i));
    }
    return chosen;
}

}  // namespace

TEST(Partition, ContiguousBlocks) {
    const auto part = partition(6, 3);
    EXPECT_EQ(part.m(), 2U);
    const auto blocks = part.blocks();
    ASSERT_EQ(blocks.size(), 3U);
    EXPECT_EQ(blocks[0], (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(blocks[1], (std::vector<std::size_t>{2, 3}));
    EXPECT_EQ(blocks[2], (std::vector<std::size_t>{4, 5}));
}

TEST(Partition, SingleBlock) {
    const auto blocks = partition(6, 1).blocks();
    ASSERT_EQ(blocks.size(), 1U);
    EXPECT_EQ(blocks[0].size(), 6U);
}

TEST(Partition, DivisibilityError) {
    EXPECT_EQ(kind_of([] { partition(7, 2); }), ErrorKind::divisibility);
    EXPECT_EQ(kind_of([] { partition(6, 0); }), ErrorKind::parameter);
}

TEST(GoodBlockCount, XiOneCountsEverything) {
    const std::vector<double> v{0, 0, 0, 0, 5, 0};
    EXPECT_EQ(good_block_count(v, partition(6, 3), 1.0, 1.0), 3U);
}

TEST(GoodBlockCount, ConstantFunction) {
    const std::vector<double> v(12, 1.7);
    for (double xi : {0.01, 0.5, 0.99}) {
        EXPECT_EQ(good_block_count(v, partition(12, 4), xi, 1.7), 4U);
    }
}

TEST(GoodBlockCount, HandComputed) {
    const std::vector<double> v{std::sqrt(2.0), std::sqrt(2.0), 0, 0};
    // block means of squares (2, 0) against threshold 0.5
    EXPECT_EQ(good_block_count(v, partition(4, 2), 0.5, 1.0), 1U);
    const std::vector<double> w{2, 0, 0, 0};
    EXPECT_EQ(good_block_count(w, partition(4, 2), 0.5, 1.0), 1U);
}

TEST(MinGoodBlocks, ConstantHandleReducesToSingleCount) {
    const Matrix X = sample_isotropic(ScalarLaw::gaussian(), 2, 20, 1);
    const auto net = explicit_net({FunctionHandle::constant(1.0)});
    const auto res = min_good_blocks_over_net(net, X, partition(20, 5), 0.3);
    EXPECT_EQ(res.min_count, 5U);
}

TEST(MinGoodBlocks, DuplicationInvariance) {
    const Matrix X = sample_isotropic(ScalarLaw::gaussian(), 3, 60, 2);
    const auto h = FunctionHandle::linear(Vector::Unit(3, 1), "e2");
    const auto part = partition(60, 12);
    const auto one = min_good_blocks_over_net(explicit_net({h}), X, part, 0.2);
    const auto two = min_good_blocks_over_net(explicit_net({h, h}), X, part, 0.2);
    EXPECT_EQ(one.min_count, two.min_count);
    EXPECT_EQ(two.argmin, 0U);  // lowest index on ties
}

TEST(MinGoodBlocks, MatchesPerHandleCounts) {
    const Matrix X = sample_isotropic(ScalarLaw::student_t(5), 4, 100, 3);
    const auto net = random_sphere_net(4, 30, 9);
    const auto part = partition(100, 10);
    const auto res = min_good_blocks_over_net(net, X, part, 0.25);
    std::size_t brute = part.n;
    for (const auto& h : net.points) {
        const Vector v = X * h.coefficients();
        brute = std::min(brute, good_block_count(std::span<const double>(v.data(), 100), part, 0.25, 1.0));
    }
    EXPECT_EQ(res.min_count, brute);
    EXPECT_EQ(res.argmin_id, net.points[res.argmin].id());
}

TEST(QuadraticInf, ConstantHandleIsOne) {
    const Matrix X = sample_isotropic(ScalarLaw::gaussian(), 2, 15, 4);
    EXPECT_DOUBLE_EQ(quadratic_inf(explicit_net({FunctionHandle::constant(2.5)}), X).value, 1.0);
}

TEST(QuadraticInf, ScalarLinearClass) {
    const Matrix X = sample_isotropic(ScalarLaw::gaussian(), 1, 50, 5);
    const auto net = explicit_net({FunctionHandle::linear(Vector::Constant(1, 1.0)),
                                   FunctionHandle::linear(Vector::Constant(1, -1.0))});
    EXPECT_NEAR(quadratic_inf(net, X).value, X.col(0).squaredNorm() / 50.0, 1e-14);
}

TEST(QuadraticInf, SphereNetGaussianRange) {
    const auto net = random_sphere_net(10, 200, 1);
    for (std::uint64_t t = 0; t < 100; ++t) {
        auto e = make_engine(123, t, Stream::design);
        const Matrix X = sample_isotropic(ScalarLaw::gaussian(), 10, 1000, e);
        const double v = quadratic_inf(net, X).value;
        EXPECT_GE(v, 0.6);
        EXPECT_LE(v, 1.0);
    }
}

TEST(RademacherSup, ZeroFunction) {
    const Matrix X = sample_isotropic(ScalarLaw::gaussian(), 2, 30, 1);
    EXPECT_DOUBLE_EQ(rademacher_sup(explicit_net({FunctionHandle::constant(0.0)}), X, 50, 2).value, 0.0);
}

TEST(RademacherSup, SingleHandleBelowKhintchineBound) {
    const Matrix X = sample_isotropic(ScalarLaw::gaussian(), 3, 200, 1);
    const auto h = FunctionHandle::linear(Vector::Unit(3, 0));
    const auto est = rademacher_sup(explicit_net({h}), X, 4000, 3);
    const double bound = X.col(0).norm() / 200.0;
    EXPECT_LE(est.value, bound + 3.0 * est.stderr_);
    // and above the lower Khintchine constant 1/sqrt(2)
    EXPECT_GE(est.value, bound / std::sqrt(2.0) - 3.0 * est.stderr_);
}

TEST(RademacherSup, NetBelowBall) {
    const Matrix X = sample_isotropic(ScalarLaw::gaussian(), 5, 300, 2);
    const auto net = random_sphere_net(5, 50, 4);
    const auto a = rademacher_sup(net, X, 500, 8);
    const auto b = rademacher_sup_linear_ball(X, 1.0, 500, 8);
    EXPECT_LE(a.value, b.value + 1e-12);  // same sign vectors, net inside the ball
}

TEST(RademacherBall, OrthogonalRows) {
    const Matrix X = Matrix::Identity(16, 16);
    const auto est = rademacher_sup_linear_ball(X, 1.5, 20, 1);
    EXPECT_NEAR(est.value, 1.5 / 4.0, 1e-14);
    EXPECT_NEAR(est.stderr_, 0.0, 1e-14);
}

TEST(RademacherBall, HomogeneousInRho) {
    const Matrix X = sample_isotropic(ScalarLaw::gaussian(), 4, 100, 3);
    const auto a = rademacher_sup_linear_ball(X, 1.0, 100, 5);
    const auto b = rademacher_sup_linear_ball(X, 2.0, 100, 5);
    EXPECT_NEAR(b.value, 2.0 * a.value, 1e-14);
}

TEST(RademacherBall, GaussianScale) {
    const Matrix X = sample_isotropic(ScalarLaw::gaussian(), 10, 1000, 6);
    const double v = rademacher_sup_linear_ball(X, 1.0, 1000, 7).value;
    const double target = std::sqrt(10.0 / 1000.0);
    EXPECT_GE(v, 0.8 * target);
    EXPECT_LE(v, 1.2 * target);
}

TEST(Packing, IdenticalCandidates) {
    const auto h = FunctionHandle::linear(Vector::Unit(3, 0));
    const auto p = packing_count(std::vector<FunctionHandle>(5, h), 0.1);
    EXPECT_EQ(p.count, 1U);
    EXPECT_TRUE(p.certified);
}

TEST(Packing, RhoAboveDiameter) {
    const auto net = random_sphere_net(4, 30, 2);
    EXPECT_EQ(packing_count(net.points, 2.01).count, 1U);
}

TEST(Packing, MatchesBruteForceOracle) {
    for (double rho : {0.5, 1.2, 1.45}) {
        const auto net = random_sphere_net(20, 100, 3);
        Matrix D(100, 100);
        for (int i = 0; i < 100; ++i) {
            for (int j = 0; j < 100; ++j) {
                D(i, j) = (net.points[static_cast<std::size_t>(i)].coefficients() -
                           net.points[static_cast<std::size_t>(j)].coefficients())
                              .norm();
            }
        }
        const auto oracle = brute_force_greedy(D, rho);
        const auto p = packing_count(net.points, rho);
        EXPECT_EQ(p.indices, oracle) << "rho " << rho;
        EXPECT_TRUE(p.certified);
        // maximality: every candidate is within rho of the packing
        for (int i = 0; i < 100; ++i) {
            double best = 1e9;
            for (auto j : oracle) best = std::min(best, D(i, static_cast<Eigen::Index>(j)));
            EXPECT_LT(best, rho + 1e-15);
        }
    }
}

TEST(Packing, ReferenceSampleForDictionaryHandles) {
    const Matrix ref = sample_isotropic(ScalarLaw::gaussian(), 1, 50000, 4);
    std::vector<FunctionHandle> hs;
    for (int k = 0; k < 5; ++k) {
        hs.push_back(FunctionHandle::dictionary("c" + std::to_string(k), [k](const auto&) { return 0.3 * k; }));
    }
    // constants 0, .3, .6, .9, 1.2 at separation 0.5 -> 0, .6, 1.2
    const auto p = packing_count(hs, 0.5, ref);
    EXPECT_EQ(p.indices, (std::vector<std::size_t>{0, 2, 4}));
}

TEST(GreedySphereNet, SeparationAndCoverage) {
    const auto net = greedy_sphere_net(3, 0.5, 2000, 5);
    for (std::size_t i = 0; i < net.size(); ++i) {
        for (std::size_t j = i + 1; j < net.size(); ++j) {
            EXPECT_GE(l2_distance(net.points[i], net.points[j]), 0.5);
        }
    }
    EXPECT_LT(net.coverage_radius, 0.6);
    EXPECT_EQ(net.construction, NetConstruction::greedy_random);
}

TEST(CriticalRadius, ZeroComplexityReturnsLowerEnd) {
    EXPECT_DOUBLE_EQ(solve_critical_radius([](double) { return 0.0; }, [](double r) { return r * r; }, 0.01, 10.0),
                     0.01);
}

TEST(CriticalRadius, BoundedCaseClosedForm) {
    const double d = 10, N = 1000, M = 3;
    const double r = solve_critical_radius([&](double r) { return std::sqrt(d / N) * r; },
                                           [&](double r) { return r * r / M; }, 1e-4, 100.0, 1e-10);
    EXPECT_NEAR(r, M * std::sqrt(d / N), 1e-8);
}

TEST(CriticalRadius, BracketError) {
    EXPECT_EQ(kind_of([] {
                  solve_critical_radius([](double r) { return 10.0 * r; }, [](double r) { return r * r; }, 0.1, 1.0);
              }),
              ErrorKind::bracket);
}

TEST(CriticalRadius, ShapeContractViolation) {
    // complexity(r)/r jumps up inside the bracket; bisection probes r = 5.5
    EXPECT_EQ(kind_of([] {
                  solve_critical_radius([](double r) { return r * (r < 5.0 ? 2.0 : r < 7.0 ? 3.0 : 0.5); },
                                        [](double r) { return r; }, 1.0, 10.0);
              }),
              ErrorKind::contract);
}

TEST(CriticalRadius, MonteCarloVersionMatchesDeterministic) {
    const Matrix X = sample_isotropic(ScalarLaw::gaussian(), 5, 200, 11);
    const auto complexity = [&](double r, std::size_t draws) { return rademacher_sup_linear_ball(X, r, draws, 3); };
    const auto res = solve_critical_radius_mc(complexity, [](double r) { return r * r; }, 1e-3, 10.0, 1e-4, 64, 4096);
    const double c1 = rademacher_sup_linear_ball(X, 1.0, 4096, 3).value;
    // complexity is linear in r, so the root of c1 r = r^2 is r = c1
    EXPECT_NEAR(res.r, c1, 0.05 * c1);
    EXPECT_FALSE(res.trace.empty());
}

TEST(StarHull, SingleLevelKeepsPoints) {
    std::vector<FunctionHandle> pts{FunctionHandle::linear(Vector::Unit(2, 0), "a"),
                                    FunctionHandle::linear(Vector::Unit(2, 1), "b")};
    const auto net = star_hull_net(pts, FunctionHandle::linear(Vector::Zero(2)), 1);
    ASSERT_EQ(net.size(), 2U);
    EXPECT_EQ(net.points[0].descriptor(), pts[0].descriptor());
    EXPECT_EQ(net.points[1].descriptor(), pts[1].descriptor());
}

TEST(StarHull, CenterInPointsStaysPresent) {
    const auto center = FunctionHandle::linear(Vector::Zero(2), "zero");
    std::vector<FunctionHandle> pts{center, FunctionHandle::linear(Vector::Ones(2), "one")};
    const auto net = star_hull_net(pts, center, 3);
    bool found = false;
    for (const auto& h : net.points) {
        found = found || h.descriptor() == center.descriptor();
    }
    EXPECT_TRUE(found);
    EXPECT_EQ(net.size(), 4U);  // center merged to one handle, plus three levels of "one"
}

TEST(StarHull, CardinalityBound) {
    const auto base = random_sphere_net(3, 5, 8);
    const auto net = star_hull_net(base.points, FunctionHandle::linear(Vector::Zero(3)), 4);
    EXPECT_LE(net.size(), 20U);
    EXPECT_EQ(net.size(), 20U);  // distinct directions give distinct scalings
}

TEST(Attack, NeverAboveNetMinimum) {
    const auto net = random_sphere_net(5, 40, 2);
    const Matrix X = sample_isotropic(ScalarLaw::gaussian(), 5, 200, 3);
    const auto part = partition(200, 20);
    const auto res = attack_min_good_blocks(net, X, part, 0.2);
    EXPECT_LE(res.min_count, res.net_min_count);
    EXPECT_NEAR(res.direction.norm(), 1.0, 1e-12);
    EXPECT_EQ(res.disagrees, res.min_count < res.net_min_count);
}
