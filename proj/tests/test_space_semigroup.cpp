#include <catch2/catch_amalgamated.hpp>

#include "bsee/semigroup.hpp"
#include "bsee/space.hpp"

using namespace bsee;

TEST_CASE("lp_norm closed forms") {
    SpaceSpec euclid(2, 2.0, 2.0);
    Vec v(2);
    v << 3.0, 4.0;
    CHECK(lp_norm(v, euclid) == Catch::Approx(5.0));

    SpaceSpec l4(2, 4.0, 2.0);
    Vec ones = Vec::Ones(2);
    CHECK(lp_norm(ones, l4) == Catch::Approx(std::pow(2.0, 0.25)));

    CHECK(lp_norm(Vec::Zero(2), l4) == 0.0);
    CHECK_THROWS_AS(lp_norm(Vec::Zero(3), euclid), std::invalid_argument);
}

TEST_CASE("lp_norm is a norm on sampled vectors") {
    SpaceSpec space(3, 2.7, 2.0);
    rng::GaussianStream gs(123, 0);
    for (int trial = 0; trial < 200; ++trial) {
        Vec a(3), b(3);
        for (int i = 0; i < 3; ++i) {
            a[i] = gs.next();
            b[i] = gs.next();
        }
        const double c = 2.0 * gs.next();
        CHECK(lp_norm(c * a, space) == Catch::Approx(std::abs(c) * lp_norm(a, space)).margin(1e-12));
        CHECK(lp_norm(a + b, space) <= lp_norm(a, space) + lp_norm(b, space) + 1e-12);
    }
}

TEST_CASE("space spec rejects endpoint exponents") {
    CHECK_THROWS_AS(SpaceSpec(2, 1.0, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(SpaceSpec(2, 2.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(SpaceSpec(0, 2.0, 2.0), std::invalid_argument);
}

TEST_CASE("matrix exponential closed forms") {
    CHECK(matrix_exponential(Mat::Zero(3, 3), 5.0).isIdentity(1e-14));

    Mat diag = Vec::LinSpaced(3, 1.0, 3.0).asDiagonal();
    Mat e = matrix_exponential(diag, 0.5);
    for (int i = 0; i < 3; ++i)
        CHECK(e(i, i) == Catch::Approx(std::exp(-0.5 * (i + 1))).epsilon(1e-12));

    Mat rot(2, 2);
    rot << 0.0, 1.0, -1.0, 0.0;
    Mat r = matrix_exponential(rot, std::numbers::pi);
    CHECK((r + Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);

    Mat bad(2, 2);
    bad << 1.0, std::numeric_limits<double>::quiet_NaN(), 0.0, 1.0;
    CHECK_THROWS_AS(matrix_exponential(bad, 1.0), std::invalid_argument);
}

TEST_CASE("semigroup cache satisfies the semigroup law") {
    Mat A(2, 2);
    A << 1.0, 0.3, -0.2, 2.0;
    SemigroupOperator sg(A, 1.0, 8);
    CHECK(sg.at(0).isIdentity(1e-15));
    for (int s = 0; s <= 8; ++s)
        for (int t = 0; s + t <= 8; ++t) {
            const Mat lhs = sg.at(s) * sg.at(t);
            CHECK((lhs - sg.at(s + t)).cwiseAbs().maxCoeff() < 1e-10);
        }
}

TEST_CASE("gamma bound: identity and contraction families in l2") {
    SpaceSpec space(2, 2.0, 2.0);
    SemigroupOperator id(Mat::Zero(2, 2), 1.0, 8);
    auto est = semigroup_gamma_bound(id, space, 8, 1);
    CHECK(est.kind == GammaBoundEstimate::Kind::exact_hilbert);
    CHECK(est.value == Catch::Approx(1.0).margin(1e-12));

    SemigroupOperator contraction(Vec::LinSpaced(2, 1.0, 2.0).asDiagonal(), 1.0, 8);
    CHECK(semigroup_gamma_bound(contraction, space, 8, 1).value ==
          Catch::Approx(1.0).margin(1e-12));

    SemigroupOperator growing(-Mat::Identity(1, 1), 1.0, 8);
    SpaceSpec line(1, 2.0, 2.0);
    CHECK(semigroup_gamma_bound(growing, line, 8, 1).value ==
          Catch::Approx(std::exp(1.0)).epsilon(1e-10));
}

TEST_CASE("gamma bound search dominates single-operator ratios and replays") {
    SpaceSpec space(2, 4.0, 2.0);
    Mat A(2, 2);
    A << -0.5, 0.4, 0.1, -0.8;
    SemigroupOperator sg(A, 1.0, 8);
    auto est = semigroup_gamma_bound(sg, space, 32, 17);
    CHECK(est.kind == GammaBoundEstimate::Kind::lower_bound_search);
    REQUIRE(est.witness.has_value());

    // uniform-boundedness lower bound
    rng::GaussianStream gs(5, 0);
    double single_best = 0.0;
    for (int i = 0; i <= sg.steps(); ++i)
        for (int rep = 0; rep < 8; ++rep) {
            Vec x(2);
            x << gs.next(), gs.next();
            single_best = std::max(single_best,
                                   lp_norm(sg.at(i) * x, space) / lp_norm(x, space));
        }
    CHECK(est.value >= single_best - 0.05);

    // witness replay reproduces the reported ratio
    const double replay = replay_gamma_bound_witness(sg, space, *est.witness);
    CHECK(replay == Catch::Approx(est.value).margin(1e-12));

    CHECK_THROWS_AS(semigroup_gamma_bound(sg, space, 0, 1), std::invalid_argument);
}
