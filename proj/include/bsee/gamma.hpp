#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsee/rng.hpp"
#include "bsee/semigroup.hpp"
#include "bsee/space.hpp"

namespace bsee {

/// Finite-rank element of gamma(H, X): column j of `coefficients` is the
/// vector x_j paired with the j-th member of an implicit orthonormal family
/// in H. For a process discretized on a grid of N cells of width dt the
/// family is the normalized cell indicators and column j equals
/// sqrt(dt) * phi(t_j).
struct FiniteRankGammaElement {
    Mat coefficients;            // d x n
    std::string hilbert_dim_tag; // description of H

    int rank() const { return static_cast<int>(coefficients.cols()); }
    int dim() const { return static_cast<int>(coefficients.rows()); }
};

struct GammaNormEstimate {
    enum class Method { hilbert_exact, monte_carlo, quadrature };
    double value = 0.0;
    double std_error = 0.0;
    long samples = 0;
    Method method = Method::hilbert_exact;
};

/// Two-time-variable element of gamma(0,T; gamma(0,T; X)). values[s] holds
/// the vectors k(t_s, sigma_j) as columns j = 0..steps-1.
struct KernelGammaElement {
    std::vector<Mat> values;  // size steps; each d x steps
    int steps = 0;
    double dt = 0.0;
    bool lower_triangular = true;

    static KernelGammaElement zeros(int d, int steps, double dt) {
        KernelGammaElement k;
        k.steps = steps;
        k.dt = dt;
        k.values.assign(steps, Mat::Zero(d, steps));
        return k;
    }

    const Vec value(int s, int sigma) const { return values[s].col(sigma); }

    void check_support() const {
        if (!lower_triangular) return;
        for (int s = 0; s < steps; ++s)
            for (int j = s; j < steps; ++j)
                if (!values[s].col(j).isZero(0.0))
                    throw std::invalid_argument(
                        "KernelGammaElement: nonzero entry violates triangular support");
    }
};

/// Embed a grid-discretized process (values at the left endpoints of N cells
/// of width dt) into gamma(0,T; X).
inline FiniteRankGammaElement embed_grid_process(const std::vector<Vec>& phi, double dt,
                                                 const std::string& tag = "time grid") {
    if (phi.empty()) throw std::invalid_argument("embed_grid_process: empty process");
    const int d = static_cast<int>(phi[0].size());
    Mat coeff(d, static_cast<int>(phi.size()));
    const double w = std::sqrt(dt);
    for (std::size_t j = 0; j < phi.size(); ++j) coeff.col(static_cast<int>(j)) = w * phi[j];
    return {std::move(coeff), tag};
}

/// gamma(H,X) = Hilbert-Schmidt operators when X is Hilbert: the norm is the
/// Frobenius norm of the coefficient matrix.
inline GammaNormEstimate gamma_norm_hilbert_exact(const FiniteRankGammaElement& g,
                                                  const SpaceSpec& space) {
    if (!space.is_hilbert())
        throw std::invalid_argument("gamma_norm_hilbert_exact: requires norm_exponent = 2");
    GammaNormEstimate e;
    e.value = g.coefficients.norm();
    e.method = GammaNormEstimate::Method::hilbert_exact;
    return e;
}

/// Monte-Carlo estimate of (E || sum_j g_j x_j ||^2)^{1/2} with delta-method
/// standard error for the square-root transform.
inline GammaNormEstimate gamma_norm_mc(const FiniteRankGammaElement& g,
                                       const SpaceSpec& space, long samples,
                                       std::uint64_t seed) {
    if (samples < 2) throw std::invalid_argument("gamma_norm_mc: need at least 2 samples");
    const int n = g.rank();
    double sum = 0.0, sumsq = 0.0;
    for (long s = 0; s < samples; ++s) {
        Vec acc = Vec::Zero(g.dim());
        for (int j = 0; j < n; ++j)
            acc += rng::gaussian(seed, static_cast<std::uint64_t>(j),
                                 static_cast<std::uint64_t>(s)) * g.coefficients.col(j);
        const double nv = lp_norm(acc, space);
        sum += nv * nv;
        sumsq += nv * nv * nv * nv;
    }
    const double mean = sum / samples;
    const double var = std::max(0.0, sumsq / samples - mean * mean);
    const double se_mean = std::sqrt(var / samples);
    GammaNormEstimate e;
    e.value = std::sqrt(mean);
    e.std_error = mean > 0.0 ? se_mean / (2.0 * std::sqrt(mean)) : se_mean;
    e.samples = samples;
    e.method = GammaNormEstimate::Method::monte_carlo;
    return e;
}

namespace detail {

// Probabilists' Gauss-Hermite rule via Golub-Welsch: nodes/weights for
// integration against the standard normal density.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline GaussHermiteRule gauss_hermite(int n) {
    Mat J = Mat::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double b = std::sqrt(static_cast<double>(k));
        J(k, k - 1) = b;
        J(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(J);
    GaussHermiteRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = es.eigenvalues()[i];
        const double v0 = es.eigenvectors()(0, i);
        rule.weights[i] = v0 * v0;
    }
    return rule;
}

}  // namespace detail

/// Deterministic oracle for E || sum_j g_j x_j ||^2 by tensor Gauss-Hermite
/// quadrature. Only for n <= 3 Gaussian dimensions.
inline GammaNormEstimate gamma_norm_quadrature(const FiniteRankGammaElement& g,
                                               const SpaceSpec& space,
                                               int nodes_per_dim) {
    const int n = g.rank();
    if (n > 3) throw std::invalid_argument("gamma_norm_quadrature: more than 3 columns");
    if (nodes_per_dim < 20)
        throw std::invalid_argument("gamma_norm_quadrature: need at least 20 nodes per dim");
    const auto rule = detail::gauss_hermite(nodes_per_dim);

    double mean = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    const long total = static_cast<long>(std::pow(nodes_per_dim, n));
    for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        double w = 1.0;
        Vec acc = Vec::Zero(g.dim());
        for (int j = 0; j < n; ++j) {
            const int i = static_cast<int>(rem % nodes_per_dim);
            rem /= nodes_per_dim;
            w *= rule.weights[i];
            acc += rule.nodes[i] * g.coefficients.col(j);
        }
        const double nv = lp_norm(acc, space);
        mean += w * nv * nv;
    }
    GammaNormEstimate e;
    e.value = std::sqrt(mean);
    e.samples = total;
    e.method = GammaNormEstimate::Method::quadrature;
    return e;
}

/// Kahane-Khintchine p-variant: (E || sum_j g_j x_j ||^p)^{1/p}.
inline GammaNormEstimate gamma_p_norm(const FiniteRankGammaElement& g,
                                      const SpaceSpec& space, double moment,
                                      long samples, std::uint64_t seed) {
    if (moment < 1.0) throw std::invalid_argument("gamma_p_norm: moment must be >= 1");
    if (samples < 2) throw std::invalid_argument("gamma_p_norm: need at least 2 samples");
    const int n = g.rank();
    double sum = 0.0, sumsq = 0.0;
    for (long s = 0; s < samples; ++s) {
        Vec acc = Vec::Zero(g.dim());
        for (int j = 0; j < n; ++j)
            acc += rng::gaussian(seed, static_cast<std::uint64_t>(j),
                                 static_cast<std::uint64_t>(s)) * g.coefficients.col(j);
        const double y = std::pow(lp_norm(acc, space), moment);
        sum += y;
        sumsq += y * y;
    }
    const double mean = sum / samples;
    const double var = std::max(0.0, sumsq / samples - mean * mean);
    const double se_mean = std::sqrt(var / samples);
    GammaNormEstimate e;
    e.value = std::pow(mean, 1.0 / moment);
    e.std_error = mean > 0.0
                      ? std::pow(mean, 1.0 / moment - 1.0) / moment * se_mean
                      : se_mean;
    e.samples = samples;
    e.method = GammaNormEstimate::Method::monte_carlo;
    return e;
}

/// Kalton-Weis extension: the scalar operator given by `op_matrix` on the
/// Hilbert side lifts to coefficients -> coefficients * op^T.
inline FiniteRankGammaElement kalton_weis_extend(const Mat& op_matrix,
                                                 const FiniteRankGammaElement& g) {
    if (op_matrix.cols() != g.coefficients.cols())
        throw std::invalid_argument("kalton_weis_extend: operator shape incompatible with element");
    return {g.coefficients * op_matrix.transpose(), g.hilbert_dim_tag};
}

/// Kalton-Weis multiplier: apply M_j to column j.
inline FiniteRankGammaElement pointwise_multiply(const std::vector<Mat>& multipliers,
                                                 const FiniteRankGammaElement& g) {
    if (static_cast<int>(multipliers.size()) != g.rank())
        throw std::invalid_argument("pointwise_multiply: need one matrix per column");
    Mat out(g.dim(), g.rank());
    for (int j = 0; j < g.rank(); ++j) {
        if (multipliers[j].cols() != g.dim())
            throw std::invalid_argument("pointwise_multiply: multiplier shape mismatch");
        out.col(j) = multipliers[j] * g.coefficients.col(j);
    }
    return {std::move(out), g.hilbert_dim_tag};
}

/// Discrete stochastic-convolution map (Phi f)(t_i) = sum_{j<i} S(t_i-t_j) f(t_j) dt,
/// left-endpoint rule. Output indexed like the input grid.
inline std::vector<Vec> convolve_semigroup(const SemigroupOperator& sg,
                                           const std::vector<Vec>& g) {
    if (static_cast<int>(g.size()) != sg.steps())
        throw std::invalid_argument("convolve_semigroup: process grid does not match semigroup cache");
    const double dt = sg.dt();
    std::vector<Vec> out(g.size(), Vec::Zero(sg.dim()));
    for (int i = 0; i < static_cast<int>(g.size()); ++i) {
        Vec acc = Vec::Zero(sg.dim());
        for (int j = 0; j < i; ++j) acc += sg.at(i - j) * g[j] * dt;
        out[i] = acc;
    }
    return out;
}

/// sigma |-> sum_{i>j} S(t_i - sigma_j) k(t_i, sigma_j) dt, the deterministic
/// convolution of the second part of the two-part lemma.
inline std::vector<Vec> convolve_kernel(const SemigroupOperator& sg,
                                        const KernelGammaElement& k) {
    if (k.steps != sg.steps())
        throw std::invalid_argument("convolve_kernel: grid mismatch");
    k.check_support();
    std::vector<Vec> out(static_cast<std::size_t>(k.steps), Vec::Zero(sg.dim()));
    for (int j = 0; j < k.steps; ++j) {
        Vec acc = Vec::Zero(sg.dim());
        for (int i = j + 1; i < k.steps; ++i) acc += sg.at(i - j) * k.value(i, j) * k.dt;
        out[static_cast<std::size_t>(j)] = acc;
    }
    return out;
}

/// Reinterpret the nested element as a single element over the product grid
/// (0,T) x (0,T). Column (s, sigma) carries dt * k(s, sigma).
inline FiniteRankGammaElement nest_flatten(const KernelGammaElement& k) {
    const int d = k.steps > 0 ? static_cast<int>(k.values[0].rows()) : 0;
    Mat coeff(d, k.steps * k.steps);
    for (int s = 0; s < k.steps; ++s)
        for (int j = 0; j < k.steps; ++j)
            coeff.col(s * k.steps + j) = k.dt * k.value(s, j);
    return {std::move(coeff), "product grid"};
}

/// Exact nested norm ||k||_{gamma(0,T; gamma(0,T; X))} in the Hilbert case:
/// both levels collapse to Frobenius sums.
inline double kernel_nested_norm_hilbert(const KernelGammaElement& k) {
    double acc = 0.0;
    for (int s = 0; s < k.steps; ++s) acc += k.values[s].squaredNorm();
    return k.dt * std::sqrt(acc);
}

/// Monte-Carlo nested norm: (E'E'' || sum_{s,j} g'_s g''_j dt k(s,j) ||^2)^{1/2},
/// the doubly-indexed Gaussian sum of the upper contraction property.
inline GammaNormEstimate kernel_nested_norm_mc(const KernelGammaElement& k,
                                               const SpaceSpec& space, long samples,
                                               std::uint64_t seed) {
    if (samples < 2) throw std::invalid_argument("kernel_nested_norm_mc: need at least 2 samples");
    double sum = 0.0, sumsq = 0.0;
    const int d = k.steps > 0 ? static_cast<int>(k.values[0].rows()) : 0;
    for (long smp = 0; smp < samples; ++smp) {
        Vec acc = Vec::Zero(d);
        for (int s = 0; s < k.steps; ++s) {
            const double gs = rng::gaussian(seed, static_cast<std::uint64_t>(s),
                                            static_cast<std::uint64_t>(smp));
            for (int j = 0; j < k.steps; ++j) {
                const double gj = rng::gaussian(seed, 10000 + static_cast<std::uint64_t>(j),
                                                static_cast<std::uint64_t>(smp));
                acc += gs * gj * k.dt * k.value(s, j);
            }
        }
        const double nv = lp_norm(acc, space);
        sum += nv * nv;
        sumsq += nv * nv * nv * nv;
    }
    const double mean = sum / samples;
    const double var = std::max(0.0, sumsq / samples - mean * mean);
    GammaNormEstimate e;
    e.value = std::sqrt(mean);
    e.std_error = mean > 0.0 ? std::sqrt(var / samples) / (2.0 * std::sqrt(mean)) : 0.0;
    e.samples = samples;
    e.method = GammaNormEstimate::Method::monte_carlo;
    return e;
}

}  // namespace bsee
