#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bsee {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Finite-dimensional state space: R^d with the l^q norm, paired with the
/// moment exponent p used for L^p(Omega) norms. Both exponents must lie in
/// the open interval (1, inf).
struct SpaceSpec {
    int dim;
    double norm_exponent;    // q of the l^q norm on R^d
    double moment_exponent;  // p of L^p(Omega; X)

    SpaceSpec(int d, double q, double p)
        : dim(d), norm_exponent(q), moment_exponent(p) {
        if (d <= 0) throw std::invalid_argument("SpaceSpec: dim must be positive");
        if (!(q > 1.0) || !std::isfinite(q))
            throw std::invalid_argument("SpaceSpec: norm_exponent must lie in (1,inf)");
        if (!(p > 1.0) || !std::isfinite(p))
            throw std::invalid_argument("SpaceSpec: moment_exponent must lie in (1,inf)");
    }

    bool is_hilbert() const { return norm_exponent == 2.0; }
};

/// l^q norm of v, q = space.norm_exponent.
inline double lp_norm(const Vec& v, const SpaceSpec& space) {
    if (v.size() != space.dim)
        throw std::invalid_argument("lp_norm: vector length " + std::to_string(v.size()) +
                                    " does not match space dim " + std::to_string(space.dim));
    const double q = space.norm_exponent;
    if (q == 2.0) return v.norm();
    double acc = 0.0;
    for (int i = 0; i < v.size(); ++i) acc += std::pow(std::abs(v[i]), q);
    return std::pow(acc, 1.0 / q);
}

}  // namespace bsee
