#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsee/gamma.hpp"
#include "bsee/solvers.hpp"

namespace bsee {

/// One measured property: `measured` compared against `threshold` with the
/// recorded relation ("<=", ">=").
struct CheckResult {
    std::string name;
    double measured = 0.0;
    double threshold = 0.0;
    std::string relation = "<=";
    bool pass = false;
};

inline CheckResult check_le(std::string name, double measured, double threshold) {
    return {std::move(name), measured, threshold, "<=", measured <= threshold};
}

inline CheckResult check_ge(std::string name, double measured, double threshold) {
    return {std::move(name), measured, threshold, ">=", measured >= threshold};
}

namespace verify {

inline std::vector<CheckResult> gamma_suite(std::uint64_t seed) {
    std::vector<CheckResult> out;
    rng::GaussianStream gs(seed, 17);

    // Monte Carlo vs the Hilbert (Frobenius) oracle, worst z-score over trials
    SpaceSpec l2(3, 2.0, 2.0);
    double worst_z = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
        Mat coeff(3, 4);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) coeff(r, c) = gs.next();
        FiniteRankGammaElement g{coeff, "verify"};
        const double exact = gamma_norm_hilbert_exact(g, l2).value;
        const auto mc = gamma_norm_mc(g, l2, 4000, seed ^ (trial + 1));
        worst_z = std::max(worst_z, std::abs(mc.value - exact) / std::max(mc.std_error, 1e-12));
    }
    out.push_back(check_le("gamma_mc_vs_frobenius_worst_z", worst_z, 3.0));

    // l4 Monte Carlo vs Gauss-Hermite quadrature on <=3 column elements
    SpaceSpec l4(2, 4.0, 2.0);
    double worst_z4 = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        Mat coeff(2, 3);
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 3; ++c) coeff(r, c) = gs.next();
        FiniteRankGammaElement g{coeff, "verify"};
        const double quad = gamma_norm_quadrature(g, l4, 24).value;
        const auto mc = gamma_norm_mc(g, l4, 4000, seed ^ (1000 + trial));
        worst_z4 = std::max(worst_z4, std::abs(mc.value - quad) / std::max(mc.std_error, 1e-12));
    }
    out.push_back(check_le("gamma_mc_vs_quadrature_l4_worst_z", worst_z4, 3.0));

    // Kalton-Weis extension: identity operator leaves the norm unchanged
    {
        Mat coeff(3, 5);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 5; ++c) coeff(r, c) = gs.next();
        FiniteRankGammaElement g{coeff, "verify"};
        const auto lifted = kalton_weis_extend(Mat::Identity(5, 5), g);
        out.push_back(check_le(
            "kalton_weis_identity_defect",
            std::abs(gamma_norm_hilbert_exact(lifted, l2).value -
                     gamma_norm_hilbert_exact(g, l2).value),
            1e-12));
    }

    // nested vs flattened kernel norm in the Hilbert case
    {
        const int N = 6;
        auto k = KernelGammaElement::zeros(3, N, 1.0 / N);
        for (int s = 0; s < N; ++s)
            for (int j = 0; j < s; ++j)
                for (int r = 0; r < 3; ++r) k.values[s](r, j) = gs.next();
        const double nested = kernel_nested_norm_hilbert(k);
        const double flat = gamma_norm_hilbert_exact(nest_flatten(k), l2).value;
        out.push_back(check_le("nest_flatten_defect", std::abs(nested - flat), 1e-10));
    }
    return out;
}

inline std::vector<CheckResult> stochastic_suite(std::uint64_t seed) {
    std::vector<CheckResult> out;
    auto m = StochasticModel::tree(1.0, 10);
    SpaceSpec l2(2, 2.0, 2.0);

    // increment moments
    double moment_defect = 0.0;
    for (int level = 1; level <= 10; ++level) {
        double mean = 0.0, var = 0.0;
        for (int s = 0; s < m.states(level); ++s) {
            const double inc = m.increment(level - 1, level, s);
            mean += m.weight(level) * inc;
            var += m.weight(level) * inc * inc;
        }
        moment_defect = std::max(moment_defect, std::abs(mean));
        moment_defect = std::max(moment_defect, std::abs(var - m.dt()));
    }
    out.push_back(check_le("tree_increment_moment_defect", moment_defect, 1e-12));

    // exact Ito isometry over a small corpus
    double iso_defect = 0.0;
    std::vector<std::function<Vec(double, double)>> corpus = {
        [](double, double w) {
            Vec v(2);
            v << w, 1.0;
            return v;
        },
        [](double t, double w) {
            Vec v(2);
            v << std::sin(w), t + w * w;
            return v;
        },
        [](double, double w) {
            Vec v(2);
            v << std::exp(0.3 * w), std::abs(w);
            return v;
        }};
    for (const auto& fn : corpus) {
        auto phi = AdaptedProcess::from_brownian(m, 10, fn);
        auto integral = ito_integral(phi, 0, 10);
        double lhs = 0.0;
        for (int s = 0; s < m.states(10); ++s)
            lhs += m.weight(10) * integral.values.col(s).squaredNorm();
        double rhs = 0.0;
        for (int i = 0; i < 10; ++i)
            for (int s = 0; s < m.states(i); ++s)
                rhs += m.weight(i) * phi.values[i].col(s).squaredNorm() * m.dt();
        iso_defect = std::max(iso_defect, std::abs(lhs - rhs));
    }
    out.push_back(check_le("ito_isometry_defect", iso_defect, 1e-10));

    // tower property of conditional expectation
    auto xi = RandomVector::from_brownian(m, 10, [](double, double w) {
        Vec v(2);
        v << w * w * w, std::cos(w);
        return v;
    });
    auto once = conditional_expectation(conditional_expectation(xi, 6), 2);
    auto direct = conditional_expectation(xi, 2);
    out.push_back(check_le("tower_property_defect",
                           (once.values - direct.values).cwiseAbs().maxCoeff(), 1e-12));

    // path model mean sanity at the given seed
    auto pm = StochasticModel::paths(1.0, 4, 20000, seed);
    double worst_mean = 0.0;
    for (int i = 0; i < 4; ++i) {
        double mean = 0.0;
        for (int p = 0; p < pm.path_count(); ++p) mean += pm.increment(i, i + 1, p);
        worst_mean = std::max(worst_mean, std::abs(mean / pm.path_count()));
    }
    out.push_back(check_le("path_increment_mean_5sigma", worst_mean,
                           5.0 * std::sqrt(pm.dt()) / std::sqrt(double(pm.path_count()))));
    return out;
}

inline std::vector<CheckResult> representation_suite(std::uint64_t seed) {
    std::vector<CheckResult> out;
    auto m = StochasticModel::tree(1.0, 10);
    rng::GaussianStream gs(seed, 5);

    // reconstruction residual over the corpus
    double worst = 0.0;
    std::vector<std::function<Vec(double, double)>> corpus = {
        [](double, double w) {
            Vec v(2);
            v << w, 0.0;
            return v;
        },
        [](double, double w) {
            Vec v(2);
            v << w * w, 0.0;
            return v;
        },
        [](double, double w) {
            Vec v(2);
            v << std::sin(w), std::exp(0.4 * w);
            return v;
        }};
    for (const auto& fn : corpus)
        worst = std::max(worst,
                         martingale_representation(RandomVector::from_brownian(m, 10, fn))
                             .residual);
    out.push_back(check_le("representation_residual", worst, 1e-10));

    // V_i = 2 W(t_i) e1 for xi = W(T)^2 e1, exhaustive enumeration
    auto rep = martingale_representation(
        RandomVector::from_brownian(m, 10, [](double, double w) {
            Vec v(2);
            v << w * w, 0.0;
            return v;
        }));
    double vdef = 0.0;
    for (int i = 0; i < 10; ++i)
        for (int s = 0; s < m.states(i); ++s)
            vdef = std::max(vdef,
                            std::abs(rep.integrand.values[i](0, s) - 2.0 * m.brownian(i, s)));
    out.push_back(check_le("wiener_square_integrand_defect", vdef, 1e-10));

    // kernel support + slice residual for a random adapted process
    auto f = AdaptedProcess::from_brownian(m, 10, [&](double t, double w) {
        Vec v(2);
        v << std::sin(w + t), w * w;
        return v;
    });
    auto kc = kernel_construction(f);
    out.push_back(check_le("kernel_slice_residual", kc.residual, 1e-10));
    double support = 0.0;
    for (int st : {0, 5})
        try {
            kc.kernel.slice_at_state(10, st).check_support();
        } catch (const std::invalid_argument&) {
            support = 1.0;
        }
    out.push_back(check_le("kernel_support_violations", support, 0.0));
    return out;
}

inline std::vector<CheckResult> solvers_suite(std::uint64_t seed) {
    std::vector<CheckResult> out;
    const double T = 1.0;
    const int N = 10;
    auto m = StochasticModel::tree(T, N);
    SpaceSpec space(2, 2.0, 2.0);
    Vec x(2);
    x << 1.0, -1.0;

    // a0 martingale closed form
    auto zero_f = AdaptedProcess::zeros(m, 2, N);
    auto wT = RandomVector::from_brownian(m, N, [&](double, double w) { return Vec(w * x); });
    auto a0 = solve_a0(zero_f, wT, space);
    double a0_defect = a0.residual;
    for (int i = 0; i < N; ++i)
        for (int s = 0; s < m.states(i); ++s)
            a0_defect = std::max(a0_defect,
                                 (a0.V.values[i].col(s) - x).cwiseAbs().maxCoeff());
    out.push_back(check_le("a0_martingale_closed_form", a0_defect, 1e-10));

    // linear drift reduces to a0 when A = 0
    SemigroupOperator id(Mat::Zero(2, 2), T, N);
    auto f = AdaptedProcess::from_brownian(m, N, [](double t, double w) {
        Vec v(2);
        v << std::sin(w) + t, w;
        return v;
    });
    auto u_T = RandomVector::from_brownian(m, N, [](double, double w) {
        Vec v(2);
        v << w * w, std::cos(w);
        return v;
    });
    auto lhs = solve_a0(f, u_T, space);
    auto rhs = solve_linear_drift(id, f, u_T, space);
    double consist = 0.0;
    for (int i = 0; i <= N; ++i)
        consist = std::max(consist,
                           (lhs.U.values[i] - rhs.U.values[i]).cwiseAbs().maxCoeff());
    for (int i = 0; i < N; ++i)
        consist = std::max(consist,
                           (lhs.V.values[i] - rhs.V.values[i]).cwiseAbs().maxCoeff());
    out.push_back(check_le("linear_drift_a0_consistency", consist, 1e-10));

    // oracle residual by telescoping
    Mat A(2, 2);
    A << 0.7, 0.2, -0.1, 1.1;
    SemigroupOperator sg(A, T, N);
    auto driver = Driver::nonlinear(
        [](double, const Vec& u, const Vec&) { return Vec(0.5 * u.array().sin().matrix()); },
        0.5, 0.5, 2);
    auto oracle = backward_recursion_oracle(sg, driver, u_T, space);
    out.push_back(check_le("oracle_mild_residual", oracle.residual, 1e-9));

    // Picard vs oracle, nonlinear Lipschitz driver
    PicardConfig pc;
    pc.delta = 0.2;
    pc.tol = 1e-10;
    auto picard = solve_general_picard(id, driver, u_T, space, pc);
    auto oracle0 = backward_recursion_oracle(id, driver, u_T, space);
    double dist = 0.0;
    for (int i = 0; i <= N; ++i)
        dist = std::max(dist,
                        (picard.U.values[i] - oracle0.U.values[i]).cwiseAbs().maxCoeff());
    for (int i = 0; i < N; ++i)
        dist = std::max(dist,
                        (picard.V.values[i] - oracle0.V.values[i]).cwiseAbs().maxCoeff());
    out.push_back(check_le("picard_vs_oracle", dist, 10.0 * pc.tol));

    // uniqueness across two initializations
    auto uniq = uniqueness_check(id, driver, u_T, space, pc, seed);
    out.push_back(check_le("picard_uniqueness_distance", uniq.distance, uniq.tolerance));
    return out;
}

inline std::vector<CheckResult> run_suite(const std::string& name, std::uint64_t seed) {
    if (name == "gamma") return gamma_suite(seed);
    if (name == "stochastic") return stochastic_suite(seed);
    if (name == "representation") return representation_suite(seed);
    if (name == "solvers") return solvers_suite(seed);
    if (name == "all") {
        std::vector<CheckResult> out;
        for (const char* s : {"gamma", "stochastic", "representation", "solvers"}) {
            auto part = run_suite(s, seed);
            out.insert(out.end(), part.begin(), part.end());
        }
        return out;
    }
    throw std::invalid_argument("unknown suite '" + name +
                                "': expected all|gamma|stochastic|representation|solvers");
}

inline nlohmann::json report_json(const std::vector<CheckResult>& checks) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks)
        arr.push_back({{"name", c.name},
                       {"measured", c.measured},
                       {"relation", c.relation},
                       {"threshold", c.threshold},
                       {"pass", c.pass}});
    return arr;
}

}  // namespace verify
}  // namespace bsee
