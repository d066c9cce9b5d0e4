// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "cot/errors.hpp"
#include "cot/matrix.hpp"
#include "cot/normal.hpp"

namespace cot {

/// Constant-chain analytics: maximal covariance between the chain marginal
/// and a Gaussian, its closed form L(p), the value functions of the
/// terminal- and running-cost variants, and the constrained Hamiltonian
/// identity used to verify them.
struct ConstantChainExample {
    std::vector<double> xs;  // strictly increasing state values
    std::vector<double> p;   // simplex point
    double tau = 0.0;        // remaining time
    double y = 0.0;          // current diffusion value

    void validate() const {
        if (xs.size() != p.size() || xs.empty())
            throw input_error("constant chain: xs/p size mismatch");
        for (std::size_t i = 0; i + 1 < xs.size(); ++i)
            if (!(xs[i + 1] > xs[i])) throw input_error("constant chain: xs must increase");
        double mass = 0.0;
        for (double v : p) {
            if (v < -1e-12) throw input_error("constant chain: negative probability");
            mass += v;
        }
        if (std::abs(mass - 1.0) > 1e-10) throw input_error("constant chain: p must sum to 1");
        if (tau < 0.0) throw input_error("constant chain: tau must be nonnegative");
    }

    double mean() const {
        double m = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) m += xs[i] * p[i];
        return m;
    }

    std::vector<double> partial_sums() const {
        std::vector<double> s(p.size() + 1, 0.0);
        for (std::size_t i = 0; i < p.size(); ++i) s[i + 1] = s[i] + p[i];
        s.back() = 1.0;  // pin the top exactly
        return s;
    }
};

/// L(p) = sum_i x_i (h(s_{i-1}) - h(s_i)): the maximal covariance of the
/// chain marginal with a standard normal under the comonotone coupling.
inline double max_cov_L(const ConstantChainExample& ex) {
    ex.validate();
    auto s = ex.partial_sums();
    double acc = 0.0;
    for (std::size_t i = 0; i < ex.xs.size(); ++i)
        acc += ex.xs[i] * (normal_h(std::min(1.0, s[i])) - normal_h(std::min(1.0, s[i + 1])));
    return acc;
}

/// Terminal-cost value y m(p) + sqrt(tau) L(p).
inline double v_term(const ConstantChainExample& ex) {
    return ex.y * ex.mean() + std::sqrt(ex.tau) * max_cov_L(ex);
}

/// Running-cost value tau y m(p) + tau^{3/2}/sqrt(3) L(p).
inline double v_run(const ConstantChainExample& ex) {
    return ex.tau * ex.y * ex.mean() + std::pow(ex.tau, 1.5) / std::sqrt(3.0) * max_cov_L(ex);
}

/// Hessian of L in the reduced coordinates (p_1..p_{K-1}):
/// H_ij = sum_{l=max(i,j)}^{K-1} (x_l - x_{l+1}) / h(s_l), 1-based l.
inline Matrix hessian_L(const ConstantChainExample& ex) {
    ex.validate();
    auto s = ex.partial_sums();
    const std::size_t km1 = ex.xs.size() - 1;
    for (std::size_t l = 1; l <= km1; ++l)
        if (normal_h(s[l]) <= 0.0)
            throw domain_error("hessian_L: boundary simplex point (h(s_l) = 0)");
    Matrix h(km1);
    for (std::size_t i = 1; i <= km1; ++i)
        for (std::size_t j = 1; j <= km1; ++j) {
            double acc = 0.0;
            for (std::size_t l = std::max(i, j); l <= km1; ++l)
                acc += (ex.xs[l - 1] - ex.xs[l]) / normal_h(s[l]);
            h(i - 1, j - 1) = acc;
        }
    return h;
}

struct HamiltonianCheck {
    double lhs = 0.0;  // numeric constrained maximum
    double rhs = 0.0;  // alpha^2/(2 beta) L(p)
    double gap = 0.0;
};

/// Numerically maximize alpha sum_i x_i z_i + (beta/2) z~^T H z~ over
/// sum_i z_i = 0 (z~ the reduced coordinates) by grid refinement around the
/// closed-form maximizer z*_i = (alpha/beta)(h(s_{i-1}) - h(s_i)), and
/// compare with alpha^2/(2 beta) L(p).
inline HamiltonianCheck hamiltonian_identity_check(const ConstantChainExample& ex, double alpha,
                                                   double beta, int grid = 8,
                                                   int refinements = 24) {
    ex.validate();
    if (!(alpha > 0.0) || !(beta > 0.0))
        throw input_error("hamiltonian_identity_check: alpha, beta must be positive");
    for (double v : ex.p)
        if (v <= 0.0)
            throw domain_error("hamiltonian_identity_check: p must be interior");
    const std::size_t k = ex.xs.size();
    const std::size_t km1 = k - 1;
    Matrix h = hessian_L(ex);
    auto s = ex.partial_sums();

    auto objective = [&](const std::vector<double>& zr) {
        double lin = 0.0, zk = 0.0;
        for (std::size_t i = 0; i < km1; ++i) {
            lin += ex.xs[i] * zr[i];
            zk += zr[i];
        }
        lin += ex.xs[km1] * (-zk);
        double quad = 0.0;
        for (std::size_t i = 0; i < km1; ++i)
            for (std::size_t j = 0; j < km1; ++j) quad += zr[i] * h(i, j) * zr[j];
        return alpha * lin + 0.5 * beta * quad;
    };

    std::vector<double> center(km1);
    for (std::size_t i = 0; i < km1; ++i)
        center[i] = alpha / beta * (normal_h(s[i]) - normal_h(s[i + 1]));
    double width = 0.0;
    for (double c : center) width = std::max(width, std::abs(c));
    width = std::max(width, alpha / beta);

    std::vector<double> best = center;
    double best_val = objective(center);
    for (int round = 0; round < refinements; ++round) {
        std::vector<double> z = best;
        std::vector<int> idx(km1, -grid);
        bool carry = false;
        while (!carry) {
            for (std::size_t i = 0; i < km1; ++i)
                z[i] = best[i] + width * idx[i] / grid;
            double v = objective(z);
            if (v > best_val) {
                best_val = v;
                center = z;
            }
            std::size_t pos = 0;
            while (pos < km1 && ++idx[pos] > grid) {
                idx[pos] = -grid;
                ++pos;
            }
            carry = pos == km1;
        }
        best = center;
        width *= 0.5;
    }

    HamiltonianCheck out;
    out.lhs = best_val;
    out.rhs = alpha * alpha / (2.0 * beta) * max_cov_L(ex);
    out.gap = std::abs(out.lhs - out.rhs);
    return out;
}

}  // namespace cot
