#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bsee/representation.hpp"
#include "bsee/semigroup.hpp"
#include "bsee/stochastic.hpp"

namespace bsee {

class NonContractionError : public std::runtime_error {
public:
    explicit NonContractionError(double guard)
        : std::runtime_error("Picard map is not a contraction: guard theta = " +
                             std::to_string(guard) + " >= 1; choose a smaller delta"),
          guard_(guard) {}
    double guard() const { return guard_; }

private:
    double guard_;
};

class NoConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Driver f(t, omega, U, V). The omega-dependence of time-only drivers is an
/// adapted process; the (U,V)-dependence is a deterministic map with declared
/// Lipschitz and growth constants.
struct Driver {
    enum class Kind { zero, constant, time_process, affine, nonlinear };

    Kind kind = Kind::zero;
    int dim = 0;
    Vec constant_value;
    std::optional<AdaptedProcess> time_part;  // f(t, omega) for time_process
    double affine_u = 0.0;                    // coefficient of U
    double affine_v = 0.0;                    // coefficient of V
    std::function<Vec(double)> affine_c;      // deterministic c(t), may be null
    std::function<Vec(double, const Vec&, const Vec&)> fn;  // nonlinear part
    double lipschitz = 0.0;
    double growth = 0.0;

    static Driver zero_driver(int d) { return Driver{Kind::zero, d}; }

    static Driver constant(Vec c) {
        Driver dr;
        dr.kind = Kind::constant;
        dr.dim = static_cast<int>(c.size());
        dr.growth = c.norm();
        dr.constant_value = std::move(c);
        return dr;
    }

    static Driver time_process_driver(AdaptedProcess f) {
        Driver dr;
        dr.kind = Kind::time_process;
        dr.dim = f.dim();
        dr.time_part = std::move(f);
        return dr;
    }

    static Driver affine(double a, double b, std::function<Vec(double)> c, int d) {
        Driver dr;
        dr.kind = Kind::affine;
        dr.dim = d;
        dr.affine_u = a;
        dr.affine_v = b;
        dr.affine_c = std::move(c);
        dr.lipschitz = std::max(std::abs(a), std::abs(b));
        dr.growth = std::max(dr.lipschitz, dr.affine_c ? 1.0 : 0.0);
        return dr;
    }

    static Driver nonlinear(std::function<Vec(double, const Vec&, const Vec&)> f,
                            double lipschitz_L, double growth_C, int d) {
        Driver dr;
        dr.kind = Kind::nonlinear;
        dr.dim = d;
        dr.fn = std::move(f);
        dr.lipschitz = lipschitz_L;
        dr.growth = growth_C;
        return dr;
    }

    bool depends_on_solution() const {
        return (kind == Kind::affine && (affine_u != 0.0 || affine_v != 0.0)) ||
               kind == Kind::nonlinear;
    }

    bool is_zero() const { return kind == Kind::zero; }

    Vec evaluate(const StochasticModel& m, int i, int state, const Vec& u,
                 const Vec& v) const {
        const double t = m.grid().node(i);
        switch (kind) {
            case Kind::zero:
                return Vec::Zero(dim);
            case Kind::constant:
                return constant_value;
            case Kind::time_process:
                return time_part->values[i].col(state);
            case Kind::affine: {
                Vec out = affine_u * u + affine_v * v;
                if (affine_c) out += affine_c(t);
                return out;
            }
            case Kind::nonlinear:
                return fn(t, u, v);
        }
        return Vec::Zero(dim);
    }

    /// Sampled surrogate for the declared Lipschitz and growth bounds.
    /// Throws on the first violating sample.
    void check_bounds(const SpaceSpec& space, int samples = 10000,
                      std::uint64_t seed = 7) const {
        if (!depends_on_solution()) return;
        rng::GaussianStream gs(seed, 42);
        for (int s = 0; s < samples; ++s) {
            Vec x(dim), x2(dim), y(dim), y2(dim);
            for (int c = 0; c < dim; ++c) {
                x[c] = 2.0 * gs.next();
                x2[c] = 2.0 * gs.next();
                y[c] = 2.0 * gs.next();
                y2[c] = 2.0 * gs.next();
            }
            const double t = gs.uniform();
            const Vec f1 = kind == Kind::nonlinear ? fn(t, x, y)
                                                   : Vec(affine_u * x + affine_v * y);
            const Vec f2 = kind == Kind::nonlinear ? fn(t, x2, y2)
                                                   : Vec(affine_u * x2 + affine_v * y2);
            const double lhs = lp_norm(f1 - f2, space);
            const double rhs =
                lipschitz * (lp_norm(x - x2, space) + lp_norm(y - y2, space));
            if (lhs > rhs * (1.0 + 1e-12) + 1e-12)
                throw std::invalid_argument("Driver: declared Lipschitz bound violated on sample");
            Vec fc = kind == Kind::nonlinear ? fn(t, x, y)
                                             : Vec(affine_u * x + affine_v * y);
            double allowance = growth * (1.0 + lp_norm(x, space) + lp_norm(y, space));
            if (affine_c) {
                fc += affine_c(t);
                allowance += lp_norm(affine_c(t), space);  // declared bound covers the homogeneous part
            }
            if (lp_norm(fc, space) > allowance + 1e-12)
                throw std::invalid_argument("Driver: declared growth bound violated on sample");
        }
    }
};

/// The pair (U, V). U has N+1 time slots (terminal included), V has N.
struct SolutionPair {
    AdaptedProcess U;
    AdaptedProcess V;
    double residual = 0.0;
    int iterations = 0;
    std::vector<std::vector<double>> contraction_history;  // one list per interval
};

struct PicardConfig {
    double delta;
    double tol = 1e-10;
    int max_iter = 60;
    std::optional<double> gamma_bound;  // gamma(S); computed when absent

    double contraction_guard(double L, double gammaS, double effective_delta) const {
        const double d = effective_delta;
        return L * d * gammaS + L * std::sqrt(d) * gammaS * (1.0 + std::sqrt(d) * gammaS);
    }
};

/// Worst L^p defect of the discrete mild equation on [t_a, t_b]:
/// D_i = U_i + sum_{j>=i} S(t_j-t_i) f_j dt + sum_{j>=i} S(t_j-t_i) V_j DW_{j+1}
///       - S(t_b - t_i) u_T.
inline std::vector<double> discrete_mild_residual_profile(
    const SolutionPair& sol, const SemigroupOperator& sg, const Driver& driver,
    const RandomVector& u_T, const SpaceSpec& space, int a = 0, int b = -1) {
    const StochasticModel& m = *sol.U.model;
    if (b < 0) b = m.steps();
    if (sg.steps() < b - a || u_T.level != b)
        throw std::invalid_argument("discrete_mild_residual: grid mismatch");
    const int d = sol.U.dim();
    const double dt = m.dt();

    // driver evaluated along the candidate solution
    AdaptedProcess f = AdaptedProcess::zeros(m, d, b);
    for (int j = a; j < b; ++j)
        for (int s = 0; s < m.states(j); ++s)
            f.values[j].col(s) = driver.evaluate(m, j, s, sol.U.values[j].col(s),
                                                 sol.V.values[j].col(s));

    std::vector<double> profile;
    profile.reserve(b - a + 1);
    for (int i = a; i <= b; ++i) {
        Mat defect = sol.U.at(i).lift(b).values;
        for (int j = i; j < b; ++j) {
            const Mat sf = sg.at(j - i) * f.values[j] * dt;
            defect += RandomVector{&m, j, sf}.lift(b).values;
        }
        AdaptedProcess weighted = AdaptedProcess::zeros(m, d, b);
        for (int j = i; j < b; ++j) weighted.values[j] = sg.at(j - i) * sol.V.values[j];
        defect += ito_integral(weighted, i, b).values;
        defect -= sg.at(b - i) * u_T.values;
        profile.push_back(lp_moment(RandomVector{&m, b, defect}, space));
    }
    return profile;
}

inline double discrete_mild_residual(const SolutionPair& sol, const SemigroupOperator& sg,
                                     const Driver& driver, const RandomVector& u_T,
                                     const SpaceSpec& space, int a = 0, int b = -1) {
    const auto profile = discrete_mild_residual_profile(sol, sg, driver, u_T, space, a, b);
    return *std::max_element(profile.begin(), profile.end());
}

/// A = 0 solver: V from the martingale representation of
/// u_T - sum_j f(t_j) dt, and U(t_i) = M_i + sum_{j<i} f(t_j) dt.
inline SolutionPair solve_a0(const AdaptedProcess& f, const RandomVector& u_T,
                             const SpaceSpec& space) {
    const StochasticModel& m = *u_T.model;
    const int N = m.steps();
    if (u_T.level != N) throw std::invalid_argument("solve_a0: terminal value not at final level");
    const int d = u_T.dim();
    const double dt = m.dt();

    Mat xi = u_T.values;
    for (int j = 0; j < N; ++j) xi -= f.at(j).lift(N).values * dt;
    RepresentationResult rep = martingale_representation(RandomVector{&m, N, xi});

    SolutionPair sol;
    sol.V = rep.integrand;
    sol.U = AdaptedProcess::zeros(m, d, N + 1);
    for (int i = 0; i <= N; ++i) {
        Mat u = rep.martingale.values[i];
        for (int j = 0; j < i; ++j) u += f.at(j).lift(i).values * dt;
        sol.U.values[i] = std::move(u);
    }
    SemigroupOperator identity(Mat::Zero(d, d), m.horizon(), N);
    sol.residual = discrete_mild_residual(sol, identity, Driver::time_process_driver(f),
                                          u_T, space);
    return sol;
}

/// Linear-drift solver on grid indices [a, b] (defaults to the full horizon).
/// U(t_i) = E(S(t_b-t_i) u_T | F_i) - sum_{j>=i} S(t_j-t_i) E(f_j|F_i) dt and
/// V(sigma) = S(t_b-sigma) phi(sigma) - sum_{s>sigma} S(t_s-sigma) k(s,sigma) dt
/// with phi the representation integrand of u_T and k the kernel of f.
inline SolutionPair solve_linear_drift(const SemigroupOperator& sg, const AdaptedProcess& f,
                                       const RandomVector& u_T, const SpaceSpec& space,
                                       int a = 0, bool compute_residual = true) {
    const StochasticModel& m = *u_T.model;
    const int b = u_T.level;
    const int N = m.steps();
    if (f.length() < b) throw std::invalid_argument("solve_linear_drift: driver too short");
    const int d = u_T.dim();
    const double dt = m.dt();

    RepresentationResult rep = martingale_representation(u_T, a);
    KernelConstructionResult kc = kernel_construction(f, a);

    SolutionPair sol;
    sol.U = AdaptedProcess::zeros(m, d, N + 1);
    sol.V = AdaptedProcess::zeros(m, d, N);

    // deterministic part of U: subtract sum_j S(t_j - t_i) E(f_j | F_i) dt,
    // accumulating the conditional expectations of each slice in one sweep
    for (int i = a; i <= b; ++i) sol.U.values[i] = sg.at(b - i) * rep.martingale.values[i];
    for (int j = a; j < b; ++j) {
        Mat cond = f.values[j];
        for (int i = j; i >= a; --i) {
            sol.U.values[i] -= sg.at(j - i) * cond * dt;
            if (i > a) cond = conditional_expectation(RandomVector{&m, i, cond}, i - 1).values;
        }
    }
    sol.U.values[b] = u_T.values;

    for (int j = a; j < b; ++j) {
        Mat v = sg.at(b - j) * rep.integrand.values[j];
        for (int s = j + 1; s < b; ++s) {
            // k(s, .) lives at level j; lower it into the sum directly
            v -= sg.at(s - j) * kc.kernel.values[s][j] * dt;
        }
        sol.V.values[j] = std::move(v);
    }

    if (compute_residual)
        sol.residual = discrete_mild_residual(sol, sg, Driver::time_process_driver(f),
                                              u_T, space, a, b);
    return sol;
}

/// Independent dynamic-programming solution of the discrete mild equation on
/// the tree: backward one-step recursion with an inner fixed point for the
/// implicit U_i.
inline SolutionPair backward_recursion_oracle(const SemigroupOperator& sg,
                                              const Driver& driver,
                                              const RandomVector& u_T,
                                              const SpaceSpec& space) {
    const StochasticModel& m = *u_T.model;
    if (m.kind() != ModelKind::tree)
        throw std::invalid_argument("backward_recursion_oracle: tree model required");
    const int N = m.steps();
    const int d = u_T.dim();
    const double dt = m.dt();
    if (dt * driver.lipschitz >= 1.0)
        throw NoConvergenceError("backward_recursion_oracle: dt * L >= 1, inner fixed point ill-posed");
    const double sdt = std::sqrt(dt);
    const Mat& step = sg.at(1);

    SolutionPair sol;
    sol.U = AdaptedProcess::zeros(m, d, N + 1);
    sol.V = AdaptedProcess::zeros(m, d, N);
    sol.U.values[N] = u_T.values;

    for (int i = N - 1; i >= 0; --i) {
        const Mat next = step * sol.U.values[i + 1];
        for (int n = 0; n < m.states(i); ++n) {
            const Vec mean = 0.5 * (next.col(2 * n) + next.col(2 * n + 1));
            const Vec v = (next.col(2 * n + 1) - next.col(2 * n)) / (2.0 * sdt);
            Vec u = mean;
            for (int it = 0; it < 400; ++it) {
                const Vec u_next = mean - dt * driver.evaluate(m, i, n, u, v);
                const double diff = (u_next - u).cwiseAbs().maxCoeff();
                u = u_next;
                if (diff <= 1e-12) break;
                if (it == 399)
                    throw NoConvergenceError("backward_recursion_oracle: inner iteration did not settle");
            }
            sol.U.values[i].col(n) = u;
            sol.V.values[i].col(n) = v;
        }
    }
    sol.residual = discrete_mild_residual(sol, sg, driver, u_T, space);
    return sol;
}

namespace detail {

inline double pair_distance(const AdaptedProcess& U1, const AdaptedProcess& V1,
                            const AdaptedProcess& U2, const AdaptedProcess& V2,
                            const SpaceSpec& space, int a, int b) {
    AdaptedProcess dU = AdaptedProcess::zeros(*U1.model, U1.dim(), b);
    AdaptedProcess dV = AdaptedProcess::zeros(*U1.model, U1.dim(), b);
    for (int i = a; i < b; ++i) {
        dU.values[i] = U1.values[i] - U2.values[i];
        dV.values[i] = V1.values[i] - V2.values[i];
    }
    return gamma_norm_of_process(dU, space, a, b, 4000, 1) +
           gamma_norm_of_process(dV, space, a, b, 4000, 1);
}

}  // namespace detail

/// Picard iteration for the general Lipschitz driver: the horizon is split
/// into subintervals short enough for the frozen-driver map to contract; each
/// interval is solved by repeated linear-drift solves and the intervals are
/// patched right to left through their terminal values.
inline SolutionPair solve_general_picard(
    const SemigroupOperator& sg, const Driver& driver, const RandomVector& u_T,
    const SpaceSpec& space, const PicardConfig& cfg,
    const std::optional<std::pair<AdaptedProcess, AdaptedProcess>>& initial = std::nullopt) {
    const StochasticModel& m = *u_T.model;
    const int N = m.steps();
    const int d = u_T.dim();
    const double dt = m.dt();
    if (cfg.delta <= 0.0 || cfg.delta > m.horizon() + 1e-12)
        throw std::invalid_argument("solve_general_picard: delta must lie in (0, T]");
    driver.check_bounds(space);

    SolutionPair sol;
    sol.U = AdaptedProcess::zeros(m, d, N + 1);
    sol.V = AdaptedProcess::zeros(m, d, N);

    // degenerate problem: the zero pair is the fixed point, no work to do
    if (driver.is_zero() && u_T.values.isZero(0.0)) {
        sol.iterations = 0;
        sol.residual = 0.0;
        return sol;
    }

    const double gammaS =
        cfg.gamma_bound ? *cfg.gamma_bound
                        : semigroup_gamma_bound(sg, space, 64, 11).value;
    int steps_per = std::max(1, static_cast<int>(std::floor(cfg.delta / dt + 1e-9)));
    const double eff_delta = steps_per * dt;
    const double theta = cfg.contraction_guard(driver.lipschitz, gammaS, eff_delta);
    if (theta >= 1.0) throw NonContractionError(theta);

    RandomVector terminal = u_T;
    int b = N;
    while (b > 0) {
        const int a = std::max(0, b - steps_per);
        AdaptedProcess U_prev = AdaptedProcess::zeros(m, d, N + 1);
        AdaptedProcess V_prev = AdaptedProcess::zeros(m, d, N);
        if (initial) {
            for (int i = a; i < b; ++i) {
                U_prev.values[i] = initial->first.values[i];
                V_prev.values[i] = initial->second.values[i];
            }
        }
        std::vector<double> history;
        SolutionPair local;
        for (int it = 0;; ++it) {
            if (it >= cfg.max_iter)
                throw NoConvergenceError("solve_general_picard: max_iter exceeded on interval");
            AdaptedProcess g = AdaptedProcess::zeros(m, d, b);
            for (int j = a; j < b; ++j)
                for (int s = 0; s < m.states(j); ++s)
                    g.values[j].col(s) = driver.evaluate(m, j, s, U_prev.values[j].col(s),
                                                         V_prev.values[j].col(s));
            local = solve_linear_drift(sg, g, terminal, space, a, false);
            ++sol.iterations;
            const double diff = detail::pair_distance(local.U, local.V, U_prev, V_prev,
                                                      space, a, b);
            history.push_back(diff);
            U_prev = local.U;
            V_prev = local.V;
            if (diff < cfg.tol) break;
        }
        sol.contraction_history.push_back(std::move(history));
        for (int i = a; i < b; ++i) {
            sol.U.values[i] = local.U.values[i];
            sol.V.values[i] = local.V.values[i];
        }
        terminal = RandomVector{&m, a, local.U.values[a]};
        b = a;
    }
    sol.U.values[N] = u_T.values;
    sol.residual = discrete_mild_residual(sol, sg, driver, u_T, space);
    return sol;
}

/// max_i ||U_{i+1} - U_i||_{L^p} / sqrt(dt); the discrete Holder-1/2 quotient.
inline double continuity_modulus(const SolutionPair& sol, const SpaceSpec& space) {
    const StochasticModel& m = *sol.U.model;
    const double sdt = std::sqrt(m.dt());
    double worst = 0.0;
    for (int i = 0; i + 1 < sol.U.length(); ++i) {
        const Mat diff = sol.U.at(i + 1).values - sol.U.at(i).lift(i + 1).values;
        worst = std::max(worst, lp_moment(RandomVector{&m, i + 1, diff}, space) / sdt);
    }
    return worst;
}

struct UniquenessReport {
    double distance;   // between the two fixed points, in L^p(Omega; gamma)
    double tolerance;  // 10 * cfg.tol
    bool pass() const { return distance <= tolerance; }
};

/// Runs the Picard solver from (0,0) and from a perturbed oracle start and
/// measures the distance between the two fixed points.
inline UniquenessReport uniqueness_check(const SemigroupOperator& sg, const Driver& driver,
                                         const RandomVector& u_T, const SpaceSpec& space,
                                         const PicardConfig& cfg,
                                         std::uint64_t perturb_seed = 99) {
    const StochasticModel& m = *u_T.model;
    const int N = m.steps();
    const int d = u_T.dim();

    SolutionPair base = solve_general_picard(sg, driver, u_T, space, cfg);

    SolutionPair oracle = backward_recursion_oracle(sg, driver, u_T, space);
    AdaptedProcess noiseU = AdaptedProcess::zeros(m, d, N + 1);
    AdaptedProcess noiseV = AdaptedProcess::zeros(m, d, N);
    rng::GaussianStream gs(perturb_seed, 3);
    for (int i = 0; i < N; ++i)
        for (int s = 0; s < m.states(i); ++s)
            for (int c = 0; c < d; ++c) {
                noiseU.values[i](c, s) = gs.next();
                noiseV.values[i](c, s) = gs.next();
            }
    const double nU = gamma_norm_of_process(noiseU, space, 0, N, 4000, 1);
    const double nV = gamma_norm_of_process(noiseV, space, 0, N, 4000, 1);
    AdaptedProcess initU = oracle.U;
    AdaptedProcess initV = oracle.V;
    for (int i = 0; i < N; ++i) {
        initU.values[i] += noiseU.values[i] / std::max(nU, 1e-300);
        initV.values[i] += noiseV.values[i] / std::max(nV, 1e-300);
    }
    SolutionPair alt = solve_general_picard(sg, driver, u_T, space, cfg,
                                            std::make_pair(initU, initV));

    UniquenessReport rep;
    rep.distance = detail::pair_distance(base.U, base.V, alt.U, alt.V, space, 0, N);
    rep.tolerance = 10.0 * cfg.tol;
    return rep;
}

}  // namespace bsee
