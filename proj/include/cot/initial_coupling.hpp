// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cot/errors.hpp"
#include "cot/normal.hpp"
#include "cot/pwl.hpp"

namespace cot {

/// Weak-OT initial layer for discrete starting laws: distribute the chain's
/// initial mass across the target's atoms to maximize the attained values.
struct InitialSolution {
    double value = 0.0;
    std::vector<double> kernel;  // r_y = mass on state 1 per atom
};

struct InitialAtom {
    double weight = 0.0;
    PwlFn value_fn;  // concave on [0,1], p -> V(0, y, (p, 1-p))
};

/// Maximize sum_y w_y V_y(r_y) subject to sum_y w_y r_y = mu01, r_y in [0,1].
/// Exact separable concave allocation: segments are filled globally in
/// decreasing slope order. Within the final, partially filled slope class
/// the budget is split proportionally to segment capacity, which makes the
/// degenerate all-linear tie return the uniform kernel.
inline InitialSolution solve_initial(const std::vector<InitialAtom>& atoms, double mu01) {
    if (atoms.empty()) throw input_error("solve_initial: no atoms");
    if (!(mu01 >= -1e-12 && mu01 <= 1.0 + 1e-12))
        throw input_error("solve_initial: initial chain mass outside [0,1]");
    mu01 = std::min(1.0, std::max(0.0, mu01));
    double wsum = 0.0;
    for (const auto& a : atoms) {
        if (a.weight < 0.0) throw input_error("solve_initial: negative weight");
        if (a.value_fn.xmin() > 0.0 || a.value_fn.xmax() < 1.0)
            throw input_error("solve_initial: value function must cover [0,1]");
        wsum += a.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-10) throw input_error("solve_initial: weights must sum to 1");

    struct Seg {
        double slope;
        std::size_t atom;
        double q_lo, q_hi;  // filter interval of this segment
    };
    std::vector<Seg> segs;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        PwlFn f = restrict_domain(atoms[k].value_fn, 0.0, 1.0);
        for (std::size_t i = 0; i + 1 < f.size(); ++i)
            segs.push_back({f.segment_slope(i), k, f.xs()[i], f.xs()[i + 1]});
        if (f.size() == 1) segs.push_back({0.0, k, 0.0, 1.0});
    }
    std::stable_sort(segs.begin(), segs.end(), [](const Seg& a, const Seg& b) {
        if (a.slope != b.slope) return a.slope > b.slope;
        return a.atom < b.atom;
    });

    std::vector<double> r(atoms.size(), 0.0);
    double budget = mu01;
    std::size_t i = 0;
    const double slope_tie = 1e-12;
    while (i < segs.size() && budget > 1e-15) {
        // slope class [i, j)
        std::size_t j = i;
        double cap = 0.0;
        while (j < segs.size() && segs[j].slope >= segs[i].slope - slope_tie) {
            cap += atoms[segs[j].atom].weight * (segs[j].q_hi - segs[j].q_lo);
            ++j;
        }
        if (cap <= budget + 1e-15) {
            for (std::size_t k = i; k < j; ++k)
                r[segs[k].atom] += segs[k].q_hi - segs[k].q_lo;
            budget -= cap;
            budget = std::max(budget, 0.0);
        } else {
            double frac = cap > 0.0 ? budget / cap : 0.0;
            for (std::size_t k = i; k < j; ++k)
                r[segs[k].atom] += frac * (segs[k].q_hi - segs[k].q_lo);
            budget = 0.0;
        }
        i = j;
    }

    InitialSolution sol;
    sol.kernel = r;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        sol.kernel[k] = std::min(1.0, std::max(0.0, sol.kernel[k]));
        sol.value += atoms[k].weight * atoms[k].value_fn(sol.kernel[k]);
    }
    return sol;
}

/// Quantile kernel of the constant-chain initial layer: for the scalar
/// statistic a*Y0 + s*Z with discrete Y0 ~ sum q_j delta_{x_j}, computes the
/// mixture cdf F(r) = sum_j q_j Phi((r - a x_j)/s), inverts it at the
/// cumulative levels of the chain marginal, and returns the bin edges plus
/// the comonotone kernel rows at the atoms.
struct QuantileKernel {
    std::vector<double> edges;                 // w_1..w_{K-1}
    std::vector<std::vector<double>> kernel;   // kernel[j][k] = R_{x_j}({x_k})
};

inline QuantileKernel quantile_kernel(const std::vector<double>& xs,
                                      const std::vector<double>& qs, double a, double s) {
    if (xs.size() != qs.size() || xs.empty())
        throw input_error("quantile_kernel: xs/qs size mismatch");
    if (!(s > 0.0)) throw input_error("quantile_kernel: s must be positive");
    for (std::size_t i = 0; i + 1 < xs.size(); ++i)
        if (!(xs[i + 1] > xs[i])) throw input_error("quantile_kernel: xs must increase");
    double mass = std::accumulate(qs.begin(), qs.end(), 0.0);
    if (std::abs(mass - 1.0) > 1e-12) throw input_error("quantile_kernel: qs must sum to 1");

    const std::size_t k = xs.size();
    auto cdf = [&](double r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += qs[j] * norm_cdf((r - a * xs[j]) / s);
        return acc;
    };

    QuantileKernel out;
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < k; ++i) {
        cum += qs[i];
        // bracketed bisection for F(w) = cum
        double lo = *std::min_element(xs.begin(), xs.end()) * std::abs(a) - 12.0 * s -
                    std::abs(a) * 1.0;
        double hi = *std::max_element(xs.begin(), xs.end()) * std::abs(a) + 12.0 * s +
                    std::abs(a) * 1.0;
        while (cdf(lo) > cum) lo -= 10.0 * s;
        while (cdf(hi) < cum) hi += 10.0 * s;
        for (int iter = 0; iter < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(hi)); ++iter) {
            double mid = 0.5 * (lo + hi);
            (cdf(mid) < cum ? lo : hi) = mid;
        }
        out.edges.push_back(0.5 * (lo + hi));
    }

    out.kernel.assign(k, std::vector<double>(k, 0.0));
    for (std::size_t j = 0; j < k; ++j) {
        double prev = 0.0;
        for (std::size_t bin = 0; bin < k; ++bin) {
            double upper =
                bin + 1 < k ? norm_cdf((out.edges[bin] - a * xs[j]) / s) : 1.0;
            out.kernel[j][bin] = upper - prev;
            prev = upper;
        }
    }
    return out;
}

}  // namespace cot
