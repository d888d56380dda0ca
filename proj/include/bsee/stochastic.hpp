#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "bsee/gamma.hpp"
#include "bsee/rng.hpp"
#include "bsee/space.hpp"

namespace bsee {

struct TimeGrid {
    double horizon;
    int steps;

    TimeGrid(double T, int N) : horizon(T), steps(N) {
        if (T <= 0.0) throw std::invalid_argument("TimeGrid: horizon must be positive");
        if (N <= 0) throw std::invalid_argument("TimeGrid: steps must be positive");
    }
    double dt() const { return horizon / steps; }
    double node(int i) const { return i * horizon / steps; }
};

enum class ModelKind { tree, paths };

/// Brownian driver with its filtration. Either the exact binary tree
/// (increments +-sqrt(dt), all 2^N sign paths, uniform weight) or a seeded
/// ensemble of Gaussian paths. Immutable after construction.
class StochasticModel {
public:
    static constexpr int kMaxTreeDepth = 24;

    static StochasticModel tree(double horizon, int steps) {
        if (steps > kMaxTreeDepth)
            throw std::invalid_argument("StochasticModel: tree depth exceeds hard limit 24");
        StochasticModel m(ModelKind::tree, TimeGrid(horizon, steps));
        return m;
    }

    static StochasticModel paths(double horizon, int steps, int path_count,
                                 std::uint64_t seed) {
        if (path_count <= 0)
            throw std::invalid_argument("StochasticModel: path_count must be positive");
        StochasticModel m(ModelKind::paths, TimeGrid(horizon, steps));
        m.path_count_ = path_count;
        m.seed_ = seed;
        const double sdt = std::sqrt(m.grid_.dt());
        m.increments_ = Mat(steps, path_count);
        for (int p = 0; p < path_count; ++p)
            for (int i = 0; i < steps; ++i)
                m.increments_(i, p) = sdt * rng::gaussian(seed, static_cast<std::uint64_t>(p),
                                                          static_cast<std::uint64_t>(i));
        m.cumulative_ = Mat::Zero(steps + 1, path_count);
        for (int i = 0; i < steps; ++i)
            m.cumulative_.row(i + 1) = m.cumulative_.row(i) + m.increments_.row(i);
        return m;
    }

    /// Path ensemble with caller-supplied increments (rows = cells, cols = paths).
    static StochasticModel paths_from_increments(double horizon, Mat increments) {
        const int steps = static_cast<int>(increments.rows());
        const int path_count = static_cast<int>(increments.cols());
        if (path_count <= 0 || steps <= 0)
            throw std::invalid_argument("StochasticModel: empty increment matrix");
        StochasticModel m(ModelKind::paths, TimeGrid(horizon, steps));
        m.path_count_ = path_count;
        m.increments_ = std::move(increments);
        m.cumulative_ = Mat::Zero(steps + 1, path_count);
        for (int i = 0; i < steps; ++i)
            m.cumulative_.row(i + 1) = m.cumulative_.row(i) + m.increments_.row(i);
        return m;
    }

    ModelKind kind() const { return kind_; }
    const TimeGrid& grid() const { return grid_; }
    int steps() const { return grid_.steps; }
    double dt() const { return grid_.dt(); }
    double horizon() const { return grid_.horizon; }
    int path_count() const { return path_count_; }
    std::uint64_t seed() const { return seed_; }
    const Mat& increments() const { return increments_; }

    /// Number of distinguishable states at time level i.
    int states(int level) const {
        return kind_ == ModelKind::tree ? (1 << level) : path_count_;
    }
    double weight(int level) const {
        return kind_ == ModelKind::tree ? std::ldexp(1.0, -level) : 1.0 / path_count_;
    }

    /// Increment DW over cell j, seen from a state at level `level` (> j).
    double increment(int cell, int level, int state) const {
        if (kind_ == ModelKind::paths) return increments_(cell, state);
        const int bit = (state >> (level - 1 - cell)) & 1;
        return (bit ? 1.0 : -1.0) * std::sqrt(grid_.dt());
    }

    /// W(t_level) at a state of that level.
    double brownian(int level, int state) const {
        if (kind_ == ModelKind::paths) return cumulative_(level, state);
        double w = 0.0;
        for (int j = 0; j < level; ++j) w += increment(j, level, state);
        return w;
    }

    /// Tree only: state at level `to` on the path through `state` at `from`.
    int ancestor(int from, int state, int to) const {
        return state >> (from - to);
    }

private:
    StochasticModel(ModelKind k, TimeGrid g) : kind_(k), grid_(g) {}

    ModelKind kind_;
    TimeGrid grid_;
    int path_count_ = 0;
    std::uint64_t seed_ = 0;
    Mat increments_;  // steps x path_count
    Mat cumulative_;  // (steps+1) x path_count
};

/// F_{t_level}-measurable X-valued random vector: one column per state (tree)
/// or per path.
struct RandomVector {
    const StochasticModel* model = nullptr;
    int level = 0;
    Mat values;  // d x states(level)

    static RandomVector constant(const StochasticModel& m, const Vec& x, int level = 0) {
        RandomVector r{&m, level, Mat(x.size(), m.states(level))};
        r.values.colwise() = x;
        return r;
    }

    /// Value as a function of (t_level, W(t_level)); adapted by construction.
    static RandomVector from_brownian(const StochasticModel& m, int level,
                                      const std::function<Vec(double, double)>& fn) {
        const double t = m.grid().node(level);
        Vec probe = fn(t, 0.0);
        RandomVector r{&m, level, Mat(probe.size(), m.states(level))};
        for (int s = 0; s < m.states(level); ++s)
            r.values.col(s) = fn(t, m.brownian(level, s));
        return r;
    }

    int dim() const { return static_cast<int>(values.rows()); }

    /// Re-index to a finer level (no new information).
    RandomVector lift(int target) const {
        if (target < level) throw std::invalid_argument("RandomVector::lift: target below level");
        if (target == level) return *this;
        RandomVector out{model, target, Mat(values.rows(), model->states(target))};
        if (model->kind() == ModelKind::paths) {
            out.values = values;
        } else {
            for (int s = 0; s < model->states(target); ++s)
                out.values.col(s) = values.col(model->ancestor(target, s, level));
        }
        return out;
    }
};

/// Grid-indexed adapted process: values[i] holds the value at t_i per state
/// of level i. Indices run over 0..length-1.
struct AdaptedProcess {
    const StochasticModel* model = nullptr;
    std::vector<Mat> values;  // values[i]: d x states(i)

    static AdaptedProcess zeros(const StochasticModel& m, int dim, int length) {
        AdaptedProcess p{&m, {}};
        p.values.reserve(length);
        for (int i = 0; i < length; ++i) p.values.push_back(Mat::Zero(dim, m.states(i)));
        return p;
    }

    static AdaptedProcess constant(const StochasticModel& m, const Vec& x, int length) {
        AdaptedProcess p = zeros(m, static_cast<int>(x.size()), length);
        for (int i = 0; i < length; ++i) p.values[i].colwise() = x;
        return p;
    }

    /// phi(t_i) = fn(t_i, W(t_i)); adapted by construction.
    static AdaptedProcess from_brownian(const StochasticModel& m, int length,
                                        const std::function<Vec(double, double)>& fn) {
        Vec probe = fn(0.0, 0.0);
        AdaptedProcess p = zeros(m, static_cast<int>(probe.size()), length);
        for (int i = 0; i < length; ++i)
            for (int s = 0; s < m.states(i); ++s)
                p.values[i].col(s) = fn(m.grid().node(i), m.brownian(i, s));
        return p;
    }

    int length() const { return static_cast<int>(values.size()); }
    int dim() const { return values.empty() ? 0 : static_cast<int>(values[0].rows()); }

    RandomVector at(int i) const { return RandomVector{model, i, values[i]}; }
};

namespace detail {

// Ridge-regularized least squares of each row of `target` (per path) on
// polynomials of W(t_level) up to degree 3.
inline Mat regress_on_brownian(const StochasticModel& m, int level, const Mat& target) {
    constexpr int kDegree = 3;
    constexpr double kRidge = 1e-8;
    const int M = m.path_count();
    Mat basis(M, kDegree + 1);
    for (int p = 0; p < M; ++p) {
        const double w = m.brownian(level, p);
        double pw = 1.0;
        for (int k = 0; k <= kDegree; ++k) {
            basis(p, k) = pw;
            pw *= w;
        }
    }
    Mat gram = basis.transpose() * basis;
    gram.diagonal().array() += kRidge;
    Eigen::LDLT<Mat> ldlt(gram);
    Mat coeffs = ldlt.solve(basis.transpose() * target.transpose());  // (deg+1) x d
    return (basis * coeffs).transpose();                              // d x M
}

}  // namespace detail

/// E(xi | F_{t_level}): exact child averaging on the tree, least-squares
/// regression on W(t_level) for path models.
inline RandomVector conditional_expectation(const RandomVector& xi, int level) {
    const StochasticModel& m = *xi.model;
    if (level < 0 || level > m.steps())
        throw std::out_of_range("conditional_expectation: level out of range");
    if (level > xi.level)
        throw std::invalid_argument("conditional_expectation: level above measurability level");
    if (level == xi.level) return xi;
    if (m.kind() == ModelKind::tree) {
        Mat cur = xi.values;
        for (int l = xi.level; l > level; --l) {
            Mat next(cur.rows(), m.states(l - 1));
            for (int n = 0; n < m.states(l - 1); ++n)
                next.col(n) = 0.5 * (cur.col(2 * n) + cur.col(2 * n + 1));
            cur = std::move(next);
        }
        return RandomVector{&m, level, std::move(cur)};
    }
    return RandomVector{&m, level, detail::regress_on_brownian(m, level, xi.values)};
}

/// Left-endpoint Ito sum  sum_{i=a}^{b-1} phi(t_i) DW_{i+1}, measurable at level b.
inline RandomVector ito_integral(const AdaptedProcess& phi, int a, int b) {
    const StochasticModel& m = *phi.model;
    if (a > b || a < 0) throw std::invalid_argument("ito_integral: bad index range");
    if (b > phi.length() || b > m.steps())
        throw std::out_of_range("ito_integral: range exceeds process length");
    const int d = phi.dim();
    if (m.kind() == ModelKind::paths) {
        Mat acc = Mat::Zero(d, m.path_count());
        for (int i = a; i < b; ++i)
            for (int p = 0; p < m.path_count(); ++p)
                acc.col(p) += phi.values[i].col(p) * m.increment(i, i + 1, p);
        return RandomVector{&m, b, std::move(acc)};
    }
    Mat cur = Mat::Zero(d, m.states(a));
    for (int i = a; i < b; ++i) {
        Mat next(d, m.states(i + 1));
        const double sdt = std::sqrt(m.dt());
        for (int n = 0; n < m.states(i); ++n) {
            next.col(2 * n) = cur.col(n) - phi.values[i].col(n) * sdt;
            next.col(2 * n + 1) = cur.col(n) + phi.values[i].col(n) * sdt;
        }
        cur = std::move(next);
    }
    return RandomVector{&m, b, std::move(cur)};
}

/// (E ||xi||^p)^{1/p}: exact weighted sum on the tree, sample mean on paths.
inline double lp_moment(const RandomVector& xi, const SpaceSpec& space) {
    const StochasticModel& m = *xi.model;
    const double p = space.moment_exponent;
    const double w = m.weight(xi.level);
    double acc = 0.0;
    for (int s = 0; s < m.states(xi.level); ++s)
        acc += w * std::pow(lp_norm(xi.values.col(s), space), p);
    return std::pow(acc, 1.0 / p);
}

/// Path models: moment estimate plus the standard error of the p-th root.
struct MomentEstimate {
    double value;
    double std_error;
};

inline MomentEstimate lp_moment_with_se(const RandomVector& xi, const SpaceSpec& space) {
    const StochasticModel& m = *xi.model;
    const double p = space.moment_exponent;
    const int n = m.states(xi.level);
    double sum = 0.0, sumsq = 0.0;
    for (int s = 0; s < n; ++s) {
        const double y = std::pow(lp_norm(xi.values.col(s), space), p);
        sum += y;
        sumsq += y * y;
    }
    const double mean = sum / n;
    const double var = std::max(0.0, sumsq / n - mean * mean);
    const double se_mean = std::sqrt(var / n);
    MomentEstimate e;
    e.value = std::pow(mean, 1.0 / p);
    e.std_error = mean > 0.0 ? std::pow(mean, 1.0 / p - 1.0) / p * se_mean : se_mean;
    return e;
}

/// Adapted two-parameter kernel: values[s][j] (j < s) holds k(t_s, sigma_j)
/// per state of level j; k is F_{sigma_j}-measurable in its second time slot.
struct AdaptedKernel {
    const StochasticModel* model = nullptr;
    int steps = 0;
    std::vector<std::vector<Mat>> values;  // values[s][j], j < s: d x states(j)

    static AdaptedKernel zeros(const StochasticModel& m, int dim, int steps) {
        AdaptedKernel k{&m, steps, {}};
        k.values.resize(steps);
        for (int s = 0; s < steps; ++s) {
            k.values[s].reserve(s);
            for (int j = 0; j < s; ++j)
                k.values[s].push_back(Mat::Zero(dim, m.states(j)));
        }
        return k;
    }

    int dim() const {
        for (const auto& row : values)
            if (!row.empty()) return static_cast<int>(row[0].rows());
        return 0;
    }

    /// Deterministic slice along the path through `state` at level `steps`.
    KernelGammaElement slice_at_state(int terminal_level, int state) const {
        KernelGammaElement out = KernelGammaElement::zeros(dim(), steps, model->dt());
        for (int s = 0; s < steps; ++s)
            for (int j = 0; j < s; ++j) {
                const int anc = model->kind() == ModelKind::tree
                                    ? model->ancestor(terminal_level, state, j)
                                    : state;
                out.values[s].col(j) = values[s][j].col(anc);
            }
        return out;
    }
};

struct FubiniReport {
    double max_discrepancy;
};

/// Evaluates sum_s h(s) dt [sum_{j<s} k(s,j) DW_{j+1}] and the swapped order
/// sum_j [sum_{s>j} h(s) k(s,j) dt] DW_{j+1}; both are finite double sums, so
/// they must agree nodewise up to rounding.
inline FubiniReport stochastic_fubini_swap(const AdaptedKernel& k,
                                           const std::vector<double>& h) {
    const StochasticModel& m = *k.model;
    if (static_cast<int>(h.size()) != k.steps)
        throw std::invalid_argument("stochastic_fubini_swap: weight grid mismatch");
    const int N = k.steps;
    const int d = k.dim();
    const double dt = m.dt();

    // side 1: integrate in sigma first
    Mat side1 = Mat::Zero(d, m.states(N));
    for (int s = 1; s < N; ++s) {
        AdaptedProcess row = AdaptedProcess::zeros(m, d, s);
        for (int j = 0; j < s; ++j) row.values[j] = k.values[s][j];
        RandomVector inner = ito_integral(row, 0, s).lift(N);
        side1 += h[s] * dt * inner.values;
    }

    // side 2: integrate in s first
    AdaptedProcess swapped = AdaptedProcess::zeros(m, d, N);
    for (int j = 0; j < N; ++j)
        for (int s = j + 1; s < N; ++s)
            swapped.values[j] += h[s] * k.values[s][j] * dt;
    Mat side2 = ito_integral(swapped, 0, N).values;

    return FubiniReport{(side1 - side2).cwiseAbs().maxCoeff()};
}

/// L^p(Omega; gamma(a,b; X)) norm of the process restricted to [t_a, t_b):
/// per state/path, embed the time slice and take its gamma-norm, then the
/// p-th moment. Exact on the tree in the Hilbert case.
inline double gamma_norm_of_process(const AdaptedProcess& phi, const SpaceSpec& space,
                                    int a, int b, long samples,
                                    std::uint64_t seed) {
    if (b <= a) return 0.0;
    const StochasticModel& m = *phi.model;
    const double dt = m.dt();
    const double p = space.moment_exponent;
    const int terminal = b;  // slice values are measurable at level b
    const double w = m.weight(terminal);
    double acc = 0.0;
    for (int s = 0; s < m.states(terminal); ++s) {
        std::vector<Vec> slice;
        slice.reserve(b - a);
        for (int i = a; i < b; ++i) {
            const int anc = m.kind() == ModelKind::tree ? m.ancestor(terminal, s, i) : s;
            slice.push_back(phi.values[i].col(anc));
        }
        const FiniteRankGammaElement g = embed_grid_process(slice, dt);
        double norm;
        if (space.is_hilbert())
            norm = gamma_norm_hilbert_exact(g, space).value;
        else
            norm = gamma_norm_mc(g, space, samples,
                                 seed ^ (0x9e37ULL * (s + 1))).value;
        acc += w * std::pow(norm, p);
    }
    return std::pow(acc, 1.0 / p);
}

inline double gamma_norm_of_process(const AdaptedProcess& phi, const SpaceSpec& space,
                                    long samples = 4000, std::uint64_t seed = 1) {
    return gamma_norm_of_process(phi, space, 0, phi.length(), samples, seed);
}

}  // namespace bsee
