#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "bsee/stochastic.hpp"

namespace bsee {

/// Output of the discrete martingale representation
/// xi = E(xi | F_{t_a}) + sum_{i=a}^{b-1} V_i DW_{i+1}.
/// On the tree the identity holds nodewise; `residual` is its worst defect.
struct RepresentationResult {
    int from = 0;
    int to = 0;
    RandomVector conditional_mean;  // E(xi | F_{t_from})
    AdaptedProcess integrand;       // V, indices [from, to); zero below `from`
    AdaptedProcess martingale;      // M_i = E(xi | F_{t_i}), i in [from, to]
    double residual = 0.0;

    Vec mean() const {
        return conditional_expectation(conditional_mean, 0).values.col(0);
    }
};

/// Discrete martingale representation of a random vector measurable at level
/// `to`, unrolled from level `from`. Exact on the tree: the binary increment
/// spans the one-step martingale space, so V_i is the unique solution of
/// M_{i+1} - M_i = V_i DW_{i+1}.
inline RepresentationResult martingale_representation(const RandomVector& xi,
                                                      int from = 0) {
    const StochasticModel& m = *xi.model;
    const int to = xi.level;
    if (from < 0 || from > to)
        throw std::invalid_argument("martingale_representation: bad start level");
    const int d = xi.dim();

    RepresentationResult res;
    res.from = from;
    res.to = to;
    res.integrand = AdaptedProcess::zeros(m, d, to);
    res.martingale = AdaptedProcess::zeros(m, d, to + 1);

    // conditional expectations at every level in [from, to]
    res.martingale.values[to] = xi.values;
    for (int i = to - 1; i >= from; --i)
        res.martingale.values[i] =
            conditional_expectation(RandomVector{&m, i + 1, res.martingale.values[i + 1]}, i)
                .values;
    res.conditional_mean = RandomVector{&m, from, res.martingale.values[from]};

    double worst = 0.0;
    const double dt = m.dt();
    if (m.kind() == ModelKind::tree) {
        const double sdt = std::sqrt(dt);
        for (int i = from; i < to; ++i) {
            const Mat& next = res.martingale.values[i + 1];
            const Mat& cur = res.martingale.values[i];
            Mat& v = res.integrand.values[i];
            for (int n = 0; n < m.states(i); ++n) {
                v.col(n) = (next.col(2 * n + 1) - next.col(2 * n)) / (2.0 * sdt);
                worst = std::max(worst,
                                 (next.col(2 * n + 1) - cur.col(n) - v.col(n) * sdt)
                                     .cwiseAbs()
                                     .maxCoeff());
                worst = std::max(worst,
                                 (next.col(2 * n) - cur.col(n) + v.col(n) * sdt)
                                     .cwiseAbs()
                                     .maxCoeff());
            }
        }
    } else {
        // regression mode: V_i = E(M_{i+1} DW_{i+1} | F_{t_i}) / dt
        for (int i = from; i < to; ++i) {
            Mat target(d, m.path_count());
            for (int p = 0; p < m.path_count(); ++p)
                target.col(p) = res.martingale.values[i + 1].col(p) *
                                (m.increment(i, i + 1, p) / dt);
            res.integrand.values[i] = detail::regress_on_brownian(m, i, target);
        }
        // L2 residual of the one-step identity, reported not asserted
        for (int i = from; i < to; ++i) {
            double acc = 0.0;
            for (int p = 0; p < m.path_count(); ++p) {
                const Vec defect = res.martingale.values[i + 1].col(p) -
                                   res.martingale.values[i].col(p) -
                                   res.integrand.values[i].col(p) * m.increment(i, i + 1, p);
                acc += defect.squaredNorm();
            }
            worst = std::max(worst, std::sqrt(acc / m.path_count()));
        }
    }
    res.residual = worst;
    return res;
}

/// Kernel of the representation lemma, built slice by slice: for each grid
/// time s = t_i the vector f(t_i) is represented from level `from`, giving
/// k(t_i, sigma_j) for from <= j < i and zero elsewhere.
struct KernelConstructionResult {
    AdaptedKernel kernel;
    std::vector<RandomVector> slice_means;  // E(f(t_s) | F_{t_from}) per s
    double residual = 0.0;
};

inline KernelConstructionResult kernel_construction(const AdaptedProcess& f,
                                                    int from = 0) {
    const StochasticModel& m = *f.model;
    const int steps = f.length();
    KernelConstructionResult out;
    out.kernel = AdaptedKernel::zeros(m, f.dim(), steps);
    out.slice_means.reserve(steps);
    for (int s = 0; s < steps; ++s) {
        if (s <= from) {
            // slice already F_{t_from}-measurable: its conditional mean is itself
            out.slice_means.push_back(f.at(s).lift(from));
            continue;
        }
        RepresentationResult rep = martingale_representation(f.at(s), from);
        out.residual = std::max(out.residual, rep.residual);
        out.slice_means.push_back(rep.conditional_mean);
        for (int j = from; j < s; ++j)
            out.kernel.values[s][j] = rep.integrand.values[j];
    }
    return out;
}

}  // namespace bsee
