// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "cot/errors.hpp"
#include "cot/matrix.hpp"

namespace cot {

/// Finite-state Markov chain: generator, initial law, number of states.
/// Immutable after construction; validation happens on construction.
struct ChainSpec {
    int K = 0;
    Matrix lambda;            // K x K generator, row sums 0, off-diagonal >= 0
    std::vector<double> p0;   // initial law on {1..K}

    ChainSpec() = default;
    ChainSpec(int k, Matrix gen, std::vector<double> init)
        : K(k), lambda(std::move(gen)), p0(std::move(init)) {
        validate();
    }

    void validate() const {
        if (K < 1) throw input_error("chain: K must be positive");
        if (lambda.size() != static_cast<std::size_t>(K))
            throw input_error("chain: lambda must be K x K");
        if (p0.size() != static_cast<std::size_t>(K))
            throw input_error("chain: p0 must have length K");
        if (!lambda.all_finite()) throw input_error("chain: lambda has non-finite entries");
        for (int i = 0; i < K; ++i) {
            double row = 0.0;
            for (int j = 0; j < K; ++j) {
                row += lambda(i, j);
                if (i != j && lambda(i, j) < 0.0)
                    throw input_error("chain: negative off-diagonal generator entry at (" +
                                      std::to_string(i) + "," + std::to_string(j) + ")");
            }
            if (std::abs(row) > 1e-12)
                throw input_error("chain: generator row " + std::to_string(i) +
                                  " does not sum to 0 (sum=" + std::to_string(row) + ")");
        }
        double mass = 0.0;
        for (double w : p0) {
            if (w < 0.0) throw input_error("chain: p0 has a negative entry");
            mass += w;
        }
        if (std::abs(mass - 1.0) > 1e-12)
            throw input_error("chain: p0 does not sum to 1");
    }

    /// Two-state convenience: rates a = lambda_{12}, b = lambda_{21}.
    double rate_a() const { return lambda(0, 1); }
    double rate_b() const { return lambda(1, 0); }
};

namespace detail {

/// Scaling-and-squaring with the diagonal [13/13] Pade approximant.
inline Matrix expm_pade(const Matrix& a) {
    const std::size_t n = a.size();
    // Coefficients of the degree-13 Pade numerator.
    static constexpr double b[14] = {
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0,  129060195264000.0,   10559470521600.0,
        670442572800.0,      33522128640.0,       1323241920.0,
        40840800.0,          960960.0,            16380.0,
        182.0,               1.0};
    constexpr double theta13 = 5.371920351148152;

    double nrm = a.norm_inf();
    int squarings = 0;
    Matrix as = a;
    if (nrm > theta13) {
        squarings = static_cast<int>(std::ceil(std::log2(nrm / theta13)));
        as *= std::ldexp(1.0, -squarings);
    }

    Matrix a2 = as * as;
    Matrix a4 = a2 * a2;
    Matrix a6 = a2 * a4;
    Matrix id = Matrix::identity(n);

    Matrix u_inner = a6 * b[13] + a4 * b[11] + a2 * b[9];
    Matrix u = as * (a6 * u_inner + a6 * b[7] + a4 * b[5] + a2 * b[3] + id * b[1]);
    Matrix v_inner = a6 * b[12] + a4 * b[10] + a2 * b[8];
    Matrix v = a6 * v_inner + a6 * b[6] + a4 * b[4] + a2 * b[2] + id * b[0];

    // Solve (v - u) r = (v + u) column by column.
    Matrix lhs = v + (u * -1.0);
    Matrix rhs = v + u;
    Matrix r(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> col(n), x;
        for (std::size_t i = 0; i < n; ++i) col[i] = rhs(i, j);
        if (!solve_linear(lhs, col, x)) throw numerical_error("expm: Pade solve failed");
        for (std::size_t i = 0; i < n; ++i) r(i, j) = x[i];
    }
    for (int s = 0; s < squarings; ++s) r = r * r;
    return r;
}

}  // namespace detail

/// e^{t Lambda}. Negative t gives the inverse semigroup; the exponential is
/// globally defined so no separate inversion path is needed. For K=2 the
/// closed form is used, which is exact for the flagship two-state examples.
inline Matrix expm(const ChainSpec& chain, double t) {
    if (!chain.lambda.all_finite()) throw input_error("expm: non-finite generator");
    if (t == 0.0) return Matrix::identity(chain.K);
    if (chain.K == 2) {
        const double a = chain.rate_a(), b = chain.rate_b();
        const double c = a + b;
        Matrix p(2);
        if (c == 0.0) return Matrix::identity(2);
        const double e = std::exp(-c * t);
        p(0, 0) = (b + a * e) / c;
        p(0, 1) = a * (1.0 - e) / c;
        p(1, 0) = b * (1.0 - e) / c;
        p(1, 1) = (a + b * e) / c;
        return p;
    }
    return detail::expm_pade(chain.lambda * t);
}

/// Semigroup P(t) = e^{t Lambda} with a small evaluation cache. The cache is
/// not synchronized: pre-populate before sharing across threads.
class Semigroup {
public:
    explicit Semigroup(ChainSpec chain) : chain_(std::move(chain)) {}

    const ChainSpec& chain() const { return chain_; }

    const Matrix& at(double t) const {
        auto it = cache_.find(t);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(t, expm(chain_, t)).first->second;
    }

private:
    ChainSpec chain_;
    mutable std::map<double, Matrix> cache_;
};

/// True iff the directed graph of strictly positive off-diagonal rates is
/// strongly connected.
inline bool is_irreducible(const ChainSpec& chain) {
    const int k = chain.K;
    if (k == 1) return true;
    auto reach = [&](bool transpose) {
        std::vector<char> seen(k, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int w = 0; w < k; ++w) {
                if (w == v || seen[w]) continue;
                double rate = transpose ? chain.lambda(w, v) : chain.lambda(v, w);
                if (rate > 0.0) {
                    seen[w] = 1;
                    stack.push_back(w);
                }
            }
        }
        return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
    };
    return reach(false) && reach(true);
}

/// Stationary distribution: the unique pi with pi Lambda = 0, sum pi = 1,
/// pi > 0. Requires irreducibility (simple zero eigenvalue).
inline std::vector<double> stationary(const ChainSpec& chain) {
    if (!is_irreducible(chain))
        throw structure_error("stationary: chain is reducible, zero eigenvalue not simple");
    const int k = chain.K;
    // Solve pi Lambda = 0 with the last equation replaced by sum(pi) = 1.
    Matrix a(k);
    std::vector<double> b(k, 0.0);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < k; ++i) a(j, i) = chain.lambda(i, j);
    for (int i = 0; i < k; ++i) a(k - 1, i) = 1.0;
    b[k - 1] = 1.0;
    std::vector<double> pi;
    if (!solve_linear(a, b, pi))
        throw structure_error("stationary: singular system, zero eigenvalue not simple");
    // Residual check on the full null-space equation.
    std::vector<double> res = row_times(pi, chain.lambda);
    for (double r : res)
        if (std::abs(r) > 1e-10)
            throw numerical_error("stationary: residual above 1e-10");
    for (double v : pi)
        if (!(v > 0.0)) throw structure_error("stationary: non-positive component");
    return pi;
}

}  // namespace cot
