// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "cot/errors.hpp"

namespace cot {

/// Dense two-phase simplex for the small validation LPs (tens of rows).
/// Variables are nonnegative; general rows with <=, >=, = relations.
/// Bland's rule, so termination is guaranteed.
struct LpProblem {
    int nvars = 0;
    std::vector<double> c;  // objective, minimized
    struct Row {
        std::vector<double> a;
        double b = 0.0;
        char rel = '<';  // '<', '>', '='
    };
    std::vector<Row> rows;
};

struct LpSolution {
    bool optimal = false;
    double objective = 0.0;
    std::vector<double> x;
};

inline LpSolution solve_lp(const LpProblem& prob) {
    const int n = prob.nvars;
    const int m = static_cast<int>(prob.rows.size());
    int nslack = 0;
    for (const auto& r : prob.rows)
        if (r.rel != '=') ++nslack;

    const int total = n + nslack + m;  // structural + slack + artificial
    std::vector<std::vector<double>> t(static_cast<std::size_t>(m) + 2,
                                       std::vector<double>(static_cast<std::size_t>(total) + 1, 0.0));
    std::vector<int> basis(static_cast<std::size_t>(m));

    int scol = n, acol = n + nslack;
    for (int i = 0; i < m; ++i) {
        const auto& r = prob.rows[static_cast<std::size_t>(i)];
        double sgn = r.b < 0.0 ? -1.0 : 1.0;
        for (int j = 0; j < n; ++j)
            t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                sgn * r.a[static_cast<std::size_t>(j)];
        t[static_cast<std::size_t>(i)][static_cast<std::size_t>(total)] = sgn * r.b;
        char rel = r.rel;
        if (sgn < 0.0 && rel == '<') rel = '>';
        else if (sgn < 0.0 && rel == '>') rel = '<';
        if (rel == '<') {
            t[static_cast<std::size_t>(i)][static_cast<std::size_t>(scol)] = 1.0;
            basis[static_cast<std::size_t>(i)] = scol++;
        } else if (rel == '>') {
            t[static_cast<std::size_t>(i)][static_cast<std::size_t>(scol)] = -1.0;
            ++scol;
            t[static_cast<std::size_t>(i)][static_cast<std::size_t>(acol)] = 1.0;
            basis[static_cast<std::size_t>(i)] = acol++;
        } else {
            t[static_cast<std::size_t>(i)][static_cast<std::size_t>(acol)] = 1.0;
            basis[static_cast<std::size_t>(i)] = acol++;
        }
    }
    // Row m: phase-2 objective. Row m+1: phase-1 objective (sum of artificials).
    for (int j = 0; j < n; ++j)
        t[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)] = prob.c[static_cast<std::size_t>(j)];
    for (int i = 0; i < m; ++i)
        if (basis[static_cast<std::size_t>(i)] >= n + nslack)
            for (int j = 0; j <= total; ++j)
                t[static_cast<std::size_t>(m) + 1][static_cast<std::size_t>(j)] -=
                    t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

    auto pivot = [&](int pr, int pc) {
        double pv = t[static_cast<std::size_t>(pr)][static_cast<std::size_t>(pc)];
        for (int j = 0; j <= total; ++j) t[static_cast<std::size_t>(pr)][static_cast<std::size_t>(j)] /= pv;
        for (int i = 0; i <= m + 1; ++i) {
            if (i == pr) continue;
            double f = t[static_cast<std::size_t>(i)][static_cast<std::size_t>(pc)];
            if (f == 0.0) continue;
            for (int j = 0; j <= total; ++j)
                t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] -=
                    f * t[static_cast<std::size_t>(pr)][static_cast<std::size_t>(j)];
        }
        basis[static_cast<std::size_t>(pr)] = pc;
    };

    auto run = [&](int objrow, int maxcol) -> bool {
        for (int iter = 0; iter < 50000; ++iter) {
            int pc = -1;
            for (int j = 0; j < maxcol; ++j)  // Bland: first negative reduced cost
                if (t[static_cast<std::size_t>(objrow)][static_cast<std::size_t>(j)] < -1e-9) {
                    pc = j;
                    break;
                }
            if (pc < 0) return true;
            int pr = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m; ++i) {
                double aij = t[static_cast<std::size_t>(i)][static_cast<std::size_t>(pc)];
                if (aij > 1e-11) {
                    double ratio = t[static_cast<std::size_t>(i)][static_cast<std::size_t>(total)] / aij;
                    if (ratio < best - 1e-12 ||
                        (ratio < best + 1e-12 && (pr < 0 || basis[static_cast<std::size_t>(i)] <
                                                                 basis[static_cast<std::size_t>(pr)]))) {
                        best = ratio;
                        pr = i;
                    }
                }
            }
            if (pr < 0) return false;  // unbounded
            pivot(pr, pc);
        }
        throw numerical_error("simplex: iteration limit");
    };

    if (!run(m + 1, n + nslack)) throw numerical_error("simplex: phase 1 unbounded");
    if (t[static_cast<std::size_t>(m) + 1][static_cast<std::size_t>(total)] < -1e-7)
        throw numerical_error("simplex: infeasible");
    // Drive any artificial still in the basis out (or its row is redundant).
    for (int i = 0; i < m; ++i) {
        if (basis[static_cast<std::size_t>(i)] >= n + nslack) {
            int pc = -1;
            for (int j = 0; j < n + nslack; ++j)
                if (std::abs(t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) > 1e-9) {
                    pc = j;
                    break;
                }
            if (pc >= 0) pivot(i, pc);
        }
    }
    LpSolution sol;
    if (!run(m, n + nslack)) {
        sol.optimal = false;  // unbounded phase 2
        return sol;
    }
    sol.optimal = true;
    sol.x.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < m; ++i)
        if (basis[static_cast<std::size_t>(i)] < n)
            sol.x[static_cast<std::size_t>(basis[static_cast<std::size_t>(i)])] =
                t[static_cast<std::size_t>(i)][static_cast<std::size_t>(total)];
    sol.objective = -t[static_cast<std::size_t>(m)][static_cast<std::size_t>(total)];
    return sol;
}

}  // namespace cot
