#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bsee/gamma.hpp"

using namespace bsee;

namespace {

FiniteRankGammaElement basis_element(int d, int n) {
    Mat coeff = Mat::Zero(d, n);
    for (int j = 0; j < std::min(d, n); ++j) coeff(j, j) = 1.0;
    return {coeff, "test"};
}

Mat random_orthogonal(int n, std::uint64_t seed) {
    rng::GaussianStream gs(seed, 0);
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = gs.next();
    return Eigen::HouseholderQR<Mat>(a).householderQ();
}

// closed form (E |g|^p)^{1/p} for a standard Gaussian
double gaussian_abs_moment_root(double p) {
    return std::sqrt(2.0) * std::pow(std::tgamma((p + 1.0) / 2.0) / std::sqrt(std::numbers::pi),
                                     1.0 / p);
}

}  // namespace

TEST_CASE("hilbert exact norm is Frobenius") {
    SpaceSpec space(2, 2.0, 2.0);
    CHECK(gamma_norm_hilbert_exact(basis_element(2, 2), space).value ==
          Catch::Approx(std::sqrt(2.0)));
    Vec x(2);
    x << 3.0, 4.0;
    FiniteRankGammaElement rank_one{x, "one"};
    CHECK(gamma_norm_hilbert_exact(rank_one, space).value == Catch::Approx(5.0));
    FiniteRankGammaElement zero{Mat::Zero(2, 3), "z"};
    CHECK(gamma_norm_hilbert_exact(zero, space).value == 0.0);
    SpaceSpec l4(2, 4.0, 2.0);
    CHECK_THROWS_AS(gamma_norm_hilbert_exact(zero, l4), std::invalid_argument);
}

TEST_CASE("monte carlo matches the Hilbert oracle") {
    SpaceSpec space(2, 2.0, 2.0);
    auto est = gamma_norm_mc(basis_element(2, 2), space, 20000, 3);
    CHECK(std::abs(est.value - std::sqrt(2.0)) <= 3.0 * est.std_error);
    CHECK_THROWS_AS(gamma_norm_mc(basis_element(2, 2), space, 1, 3), std::invalid_argument);
}

TEST_CASE("rank-one element has norm ||x||_p in any space") {
    SpaceSpec l3(2, 3.0, 2.0);
    Vec x(2);
    x << 1.0, 2.0;
    FiniteRankGammaElement g{x, "one"};
    auto est = gamma_norm_mc(g, l3, 20000, 4);
    CHECK(std::abs(est.value - lp_norm(x, l3)) <= 3.0 * est.std_error);
}

TEST_CASE("quadrature oracle: closed forms and the l4 reference value") {
    SpaceSpec l2(2, 2.0, 2.0);
    auto q = gamma_norm_quadrature(basis_element(2, 2), l2, 40);
    CHECK(q.value == Catch::Approx(std::sqrt(2.0)).epsilon(1e-8));

    SpaceSpec l3(2, 3.0, 2.0);
    Vec x(2);
    x << 1.0, -2.0;
    FiniteRankGammaElement one{x, "one"};
    CHECK(gamma_norm_quadrature(one, l3, 40).value ==
          Catch::Approx(lp_norm(x, l3)).epsilon(1e-8));

    SpaceSpec l4(2, 4.0, 2.0);
    auto oracle = gamma_norm_quadrature(basis_element(2, 2), l4, 60);
    auto mc = gamma_norm_mc(basis_element(2, 2), l4, 40000, 9);
    CHECK(std::abs(mc.value - oracle.value) <= 3.0 * mc.std_error);

    CHECK_THROWS_AS(gamma_norm_quadrature(basis_element(2, 4), l4, 40), std::invalid_argument);
    CHECK_THROWS_AS(gamma_norm_quadrature(basis_element(2, 2), l4, 10), std::invalid_argument);
}

TEST_CASE("representation independence under orthogonal rotation") {
    SpaceSpec l4(2, 4.0, 2.0);
    rng::GaussianStream gs(21, 0);
    Mat coeff(2, 3);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) coeff(i, j) = gs.next();
    FiniteRankGammaElement g{coeff, "grid"};
    const Mat q = random_orthogonal(3, 5);
    FiniteRankGammaElement rotated{coeff * q, "grid"};
    auto a = gamma_norm_mc(g, l4, 30000, 31);
    auto b = gamma_norm_mc(rotated, l4, 30000, 37);
    CHECK(std::abs(a.value - b.value) <= 3.0 * (a.std_error + b.std_error));
}

TEST_CASE("gamma_p_norm: moment closed form and monotonicity") {
    SpaceSpec l2(2, 2.0, 2.0);
    Vec x(2);
    x << 2.0, 1.0;
    FiniteRankGammaElement one{x, "one"};

    auto p2 = gamma_p_norm(one, l2, 2.0, 20000, 8);
    CHECK(std::abs(p2.value - x.norm()) <= 3.0 * p2.std_error);

    auto p4 = gamma_p_norm(one, l2, 4.0, 60000, 8);
    const double expected = x.norm() * gaussian_abs_moment_root(4.0);
    CHECK(std::abs(p4.value - expected) <= 3.0 * p4.std_error);

    // L^p-monotonicity in the moment
    FiniteRankGammaElement g = basis_element(2, 2);
    const double v1 = gamma_p_norm(g, l2, 1.0, 40000, 10).value;
    const double v4 = gamma_p_norm(g, l2, 4.0, 40000, 10).value;
    CHECK(v1 <= v4 + 1e-3);
}

TEST_CASE("kalton-weis extension") {
    SpaceSpec l2(2, 2.0, 2.0);
    FiniteRankGammaElement g = basis_element(2, 2);
    auto same = kalton_weis_extend(Mat::Identity(2, 2), g);
    CHECK((same.coefficients - g.coefficients).norm() == 0.0);

    // integral of a constant over [0,T]: row of sqrt(dt) cell masses
    const int n = 16;
    const double T = 2.0, dt = T / n;
    Vec x(2);
    x << 1.0, -3.0;
    std::vector<Vec> constant(n, x);
    auto embedded = embed_grid_process(constant, dt);
    Mat row = Mat::Constant(1, n, std::sqrt(dt));
    auto integral = kalton_weis_extend(row, embedded);
    REQUIRE(integral.rank() == 1);
    CHECK((integral.coefficients.col(0) - T * x).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(kalton_weis_extend(Mat::Identity(3, 3), g), std::invalid_argument);
}

TEST_CASE("ideal property of the extension in l2") {
    SpaceSpec l2(3, 2.0, 2.0);
    rng::GaussianStream gs(77, 0);
    for (int trial = 0; trial < 30; ++trial) {
        Mat coeff(3, 4), op(5, 4);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) coeff(i, j) = gs.next();
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 4; ++j) op(i, j) = gs.next();
        FiniteRankGammaElement g{coeff, "grid"};
        const double before = gamma_norm_hilbert_exact(g, l2).value;
        const double after = gamma_norm_hilbert_exact(kalton_weis_extend(op, g), l2).value;
        const double opnorm = Eigen::JacobiSVD<Mat>(op).singularValues()[0];
        CHECK(after <= opnorm * before + 1e-10);
    }
}

TEST_CASE("pointwise multiplier bound") {
    SpaceSpec l2(2, 2.0, 2.0);
    FiniteRankGammaElement g = basis_element(2, 2);

    std::vector<Mat> ids(2, Mat::Identity(2, 2));
    CHECK((pointwise_multiply(ids, g).coefficients - g.coefficients).norm() == 0.0);

    std::vector<Mat> scaled(2, Mat(-2.5 * Mat::Identity(2, 2)));
    CHECK(gamma_norm_hilbert_exact(pointwise_multiply(scaled, g), l2).value ==
          Catch::Approx(2.5 * gamma_norm_hilbert_exact(g, l2).value));

    // contraction semigroup columns shrink the norm
    SemigroupOperator sg(Mat::Identity(2, 2), 1.0, 8);
    rng::GaussianStream gs(13, 0);
    for (int trial = 0; trial < 20; ++trial) {
        Mat coeff(2, 8);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 8; ++j) coeff(i, j) = gs.next();
        FiniteRankGammaElement h{coeff, "grid"};
        std::vector<Mat> mult;
        for (int j = 0; j < 8; ++j) mult.push_back(sg.at(j));
        CHECK(gamma_norm_hilbert_exact(pointwise_multiply(mult, h), l2).value <=
              gamma_norm_hilbert_exact(h, l2).value + 1e-12);
    }
}

TEST_CASE("semigroup convolution closed forms") {
    const int n = 64;
    const double T = 1.0, dt = T / n;
    Vec x(1);
    x << 2.0;

    SemigroupOperator id(Mat::Zero(1, 1), T, n);
    std::vector<Vec> constant(n, x);
    auto running = convolve_semigroup(id, constant);
    for (int i = 0; i < n; ++i)
        CHECK(running[i][0] == Catch::Approx(i * dt * x[0]).margin(1e-12));

    std::vector<Vec> zeros(n, Vec::Zero(1));
    for (const Vec& v : convolve_semigroup(id, zeros)) CHECK(v.norm() == 0.0);

    const double a = 1.7;
    SemigroupOperator decay(a * Mat::Identity(1, 1), T, n);
    auto conv = convolve_semigroup(decay, constant);
    for (int i = 0; i < n; ++i) {
        const double exact = (1.0 - std::exp(-a * i * dt)) / a * x[0];
        CHECK(std::abs(conv[i][0] - exact) < 3.0 * a * dt);  // O(dt) rule
    }
}

TEST_CASE("kernel convolution closed forms and support errors") {
    const int n = 64;
    const double T = 1.0, dt = T / n;
    Vec x(1);
    x << 1.5;

    auto k = KernelGammaElement::zeros(1, n, dt);
    for (int s = 0; s < n; ++s)
        for (int j = 0; j < s; ++j) k.values[s].col(j) = x;

    SemigroupOperator id(Mat::Zero(1, 1), T, n);
    auto slice = convolve_kernel(id, k);
    for (int j = 0; j < n; ++j)
        CHECK(slice[j][0] == Catch::Approx((T - (j + 1) * dt) * x[0]).margin(1e-12));

    const double a = 0.9;
    SemigroupOperator decay(a * Mat::Identity(1, 1), T, n);
    auto conv = convolve_kernel(decay, k);
    for (int j = 0; j < n; ++j) {
        const double sigma = j * dt;
        const double exact = (1.0 - std::exp(-a * (T - sigma))) / a * x[0];
        CHECK(std::abs(conv[j][0] - exact) < 4.0 * dt);
    }

    auto zero = KernelGammaElement::zeros(1, n, dt);
    for (const Vec& v : convolve_kernel(id, zero)) CHECK(v.norm() == 0.0);

    auto bad = KernelGammaElement::zeros(1, n, dt);
    bad.values[2].col(5) = x;  // sigma >= s with mask declared
    CHECK_THROWS_AS(convolve_kernel(id, bad), std::invalid_argument);
}

TEST_CASE("nest_flatten: Frobenius identity in l2") {
    SpaceSpec l2(2, 2.0, 2.0);
    rng::GaussianStream gs(55, 0);
    const int n = 10;
    auto k = KernelGammaElement::zeros(2, n, 0.1);
    for (int s = 0; s < n; ++s)
        for (int j = 0; j < s; ++j) {
            k.values[s](0, j) = gs.next();
            k.values[s](1, j) = gs.next();
        }
    const double nested = kernel_nested_norm_hilbert(k);
    const double flat = gamma_norm_hilbert_exact(nest_flatten(k), l2).value;
    CHECK(std::abs(nested - flat) < 1e-10);

    auto zero = KernelGammaElement::zeros(2, n, 0.1);
    CHECK(gamma_norm_hilbert_exact(nest_flatten(zero), l2).value == 0.0);
}

TEST_CASE("indefinite integral bound from the extension operator") {
    // || sum_{s<=t_j<t} sqrt(dt) x_j || <= (t-s)^{1/2} ||g||_gamma in l2
    SpaceSpec l2(2, 2.0, 2.0);
    const int n = 32;
    const double dt = 1.0 / n;
    rng::GaussianStream gs(91, 0);
    for (int trial = 0; trial < 25; ++trial) {
        Mat coeff(2, n);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < n; ++j) coeff(i, j) = gs.next();
        FiniteRankGammaElement g{coeff, "grid"};
        const int a = trial % 8, b = n - (trial % 5);
        Vec sum = Vec::Zero(2);
        for (int j = a; j < b; ++j) sum += std::sqrt(dt) * coeff.col(j);
        const double window = (b - a) * dt;
        CHECK(lp_norm(sum, l2) <=
              std::sqrt(window) * gamma_norm_hilbert_exact(g, l2).value + 1e-12);
    }
}
