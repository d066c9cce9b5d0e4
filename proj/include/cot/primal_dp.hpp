// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "cot/chain.hpp"
#include "cot/errors.hpp"
#include "cot/instance.hpp"
#include "cot/lattice.hpp"
#include "cot/pwl.hpp"

namespace cot {

struct PrimalOptions {
    bool keep_tables = false;
    double simplify_eps = 0.0;  // breakpoint-count control, off by default
};

/// Lower bound V^{N,M}: the root value function q -> V^N(0, y0, (q, 1-q))
/// together with its evaluation at p0.
struct PrimalResult {
    PwlFn value_at;  // concave on [0,1]
    double value = 0.0;
    double N = 0.0;
    int M = 0;
    DriftMap dmap;
    double trunc_r = 0.0;  // N sqrt(dt)
    std::shared_ptr<const std::vector<std::vector<PwlFn>>> tables;  // [n][j] when kept
};

namespace detail {

/// argmax of (A(m+d) + B(m-d))/2 over |d| <= min(r, m-lo, hi-m); exact.
inline std::pair<double, double> windowed_point_argmax(const PwlFn& a, const PwlFn& b, double r,
                                                       double lo, double hi, double m) {
    double w = std::min({r, m - lo, hi - m});
    w = std::max(w, 0.0);
    std::vector<double> cands{-w, w};
    for (double ax : a.xs()) {
        double d = ax - m;
        if (d > -w && d < w) cands.push_back(d);
    }
    for (double bx : b.xs()) {
        double d = m - bx;
        if (d > -w && d < w) cands.push_back(d);
    }
    double best = -std::numeric_limits<double>::infinity(), arg = 0.0;
    for (double d : cands) {
        double v = 0.5 * (a(m + d) + b(m - d));
        if (v > best) {
            best = v;
            arg = d;
        }
    }
    return {best, arg};
}

}  // namespace detail

/// Exact backward induction for the truncated state-constrained primal on
/// the lattice (K = 2). Terminal values are linear in the filter; each step
/// composes the windowed pair max with the one-step conditional-mean map and
/// adds the left-endpoint running cost.
inline PrimalResult solve_primal(const ProblemInstance& inst, const Lattice& lat, double N,
                                 const PrimalOptions& opts = {}) {
    if (inst.chain.K != 2)
        throw unsupported_error("solve_primal: exact PL solver requires K=2 (use the grid solver)");
    if (N < 0.0) throw input_error("solve_primal: N must be nonnegative");
    const DriftMap dm = drift_map(inst.chain, lat.dt);
    const double r = N * std::sqrt(lat.dt);
    const auto& g0 = inst.cost.g0;
    const auto& f0 = inst.cost.f0;

    auto tables = std::make_shared<std::vector<std::vector<PwlFn>>>(
        static_cast<std::size_t>(lat.M) + 1);

    std::vector<PwlFn> level(static_cast<std::size_t>(lat.M) + 1);
    for (int j = 0; j <= lat.M; ++j) {
        double y = lat.y_value(lat.M, j);
        level[static_cast<std::size_t>(j)] = PwlFn::from_points(
            Curvature::concave, {0.0, 1.0}, {g0(1, y), g0(0, y)});
    }
    if (opts.keep_tables) (*tables)[static_cast<std::size_t>(lat.M)] = level;

    for (int n = lat.M - 1; n >= 0; --n) {
        std::vector<PwlFn> next(static_cast<std::size_t>(n) + 1);
        for (int j = 0; j <= n; ++j) {
            const PwlFn& up = level[static_cast<std::size_t>(j) + 1];
            const PwlFn& dn = level[static_cast<std::size_t>(j)];
            PwlFn g = (r == 0.0)
                          ? sum(scale_add(up, 0.5, 0.0, 0.0), scale_add(dn, 0.5, 0.0, 0.0))
                          : windowed_pair_max(up, dn, r, 0.0, 1.0, 0.0, 1.0);
            PwlFn v = restrict_domain(affine_compose(g, dm.alpha, dm.beta), 0.0, 1.0);
            double y = lat.y_value(n, j);
            double f1 = f0(0, y), f2 = f0(1, y);
            if (f1 != 0.0 || f2 != 0.0)
                v = scale_add(v, 1.0, lat.dt * (f1 - f2), lat.dt * f2);
            if (opts.simplify_eps > 0.0) v = simplify(v, opts.simplify_eps);
            next[static_cast<std::size_t>(j)] = std::move(v);
        }
        level = std::move(next);
        if (opts.keep_tables) (*tables)[static_cast<std::size_t>(n)] = level;
    }

    PrimalResult res;
    res.value_at = level[0];
    res.value = res.value_at(inst.chain.p0[0]);
    res.N = N;
    res.M = lat.M;
    res.dmap = dm;
    res.trunc_r = r;
    if (opts.keep_tables) res.tables = tables;
    return res;
}

/// Optimal filter spread at node (n, j) for current filter value q.
/// Requires tables kept by solve_primal.
inline double primal_delta_at(const PrimalResult& res, int n, int j, double q) {
    if (!res.tables) throw input_error("primal_delta_at: solve with keep_tables");
    if (n < 0 || n >= res.M) throw input_error("primal_delta_at: step out of range");
    const auto& nxt = (*res.tables)[static_cast<std::size_t>(n) + 1];
    double m = res.dmap(q);
    return detail::windowed_point_argmax(nxt[static_cast<std::size_t>(j) + 1],
                                         nxt[static_cast<std::size_t>(j)], res.trunc_r, 0.0, 1.0,
                                         m)
        .second;
}

/// Terminal filter q_T of the extracted optimal control along every path
/// (bit n of the path index = up-move at step n). Exponential in M.
inline std::vector<double> primal_terminal_filter(const PrimalResult& res, double q0) {
    if (!res.tables) throw input_error("primal_terminal_filter: solve with keep_tables");
    if (res.M > 20) throw input_error("primal_terminal_filter: M too large for path enumeration");
    std::size_t paths = std::size_t{1} << res.M;
    std::vector<double> qt(paths);
    for (std::size_t path = 0; path < paths; ++path) {
        double q = q0;
        int ups = 0;
        for (int n = 0; n < res.M; ++n) {
            int j = ups;
            double d = primal_delta_at(res, n, j, q);
            bool up = (path >> n) & 1u;
            q = res.dmap(q) + (up ? d : -d);
            q = std::min(1.0, std::max(0.0, q));
            ups += up ? 1 : 0;
        }
        qt[path] = q;
    }
    return qt;
}

// ---------------------------------------------------------------------------
// Grid-DP oracle (K = 2 or 3) and path-tree brute force (validation only).
// ---------------------------------------------------------------------------

namespace detail {

inline double interp1(const std::vector<double>& vals, double x, int grid_n) {
    double t = x * (grid_n - 1);
    int i = static_cast<int>(t);
    if (i >= grid_n - 1) return vals[static_cast<std::size_t>(grid_n) - 1];
    if (i < 0) return vals[0];
    double fr = t - i;
    return vals[static_cast<std::size_t>(i)] * (1.0 - fr) +
           vals[static_cast<std::size_t>(i) + 1] * fr;
}

}  // namespace detail

/// Tabulated-value oracle for solve_primal. Same recursion on a uniform
/// filter grid with linear interpolation and a matching-resolution spread
/// search. For K=3 the filter lives on a triangular simplex grid and the
/// spread is a per-coordinate box with zero sum.
inline PrimalResult solve_primal_grid(const ProblemInstance& inst, const Lattice& lat, double N,
                                      int q_grid_size) {
    if (q_grid_size < 2) throw input_error("solve_primal_grid: grid too small");
    const double r = N * std::sqrt(lat.dt);
    const auto& g0 = inst.cost.g0;
    const auto& f0 = inst.cost.f0;

    if (inst.chain.K == 2) {
        const DriftMap dm = drift_map(inst.chain, lat.dt);
        const int gq = q_grid_size;
        const double step = 1.0 / (gq - 1);
        if (N > 0.0 && r > 0.0 && 2.0 * r < 2.0 * step)
            throw numerical_error("solve_primal_grid: delta grid coarser than the window");
        std::vector<std::vector<double>> level(
            static_cast<std::size_t>(lat.M) + 1, std::vector<double>(static_cast<std::size_t>(gq)));
        for (int j = 0; j <= lat.M; ++j) {
            double y = lat.y_value(lat.M, j);
            for (int i = 0; i < gq; ++i) {
                double q = i * step;
                level[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
                    q * g0(0, y) + (1.0 - q) * g0(1, y);
            }
        }
        for (int n = lat.M - 1; n >= 0; --n) {
            std::vector<std::vector<double>> next(
                static_cast<std::size_t>(n) + 1,
                std::vector<double>(static_cast<std::size_t>(gq)));
            for (int j = 0; j <= n; ++j) {
                const auto& up = level[static_cast<std::size_t>(j) + 1];
                const auto& dn = level[static_cast<std::size_t>(j)];
                double y = lat.y_value(n, j);
                double fq = lat.dt * f0(0, y), f1q = lat.dt * f0(1, y);
                for (int i = 0; i < gq; ++i) {
                    double q = i * step;
                    double m = dm(q);
                    double w = std::max(0.0, std::min({r, m, 1.0 - m}));
                    int nd = static_cast<int>(std::floor(w / step));
                    double best = -std::numeric_limits<double>::infinity();
                    for (int di = -nd; di <= nd; ++di) {
                        double d = di * step;
                        double v = 0.5 * (detail::interp1(up, m + d, gq) +
                                          detail::interp1(dn, m - d, gq));
                        best = std::max(best, v);
                    }
                    // window endpoints, which the uniform grid misses
                    for (double d : {w, -w}) {
                        double v = 0.5 * (detail::interp1(up, m + d, gq) +
                                          detail::interp1(dn, m - d, gq));
                        best = std::max(best, v);
                    }
                    next[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
                        q * fq + (1.0 - q) * f1q + best;
                }
            }
            level = std::move(next);
        }
        PrimalResult res;
        res.value = detail::interp1(level[0], inst.chain.p0[0], gq);
        res.N = N;
        res.M = lat.M;
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i < gq; ++i)
            pts.emplace_back(i * step, level[0][static_cast<std::size_t>(i)]);
        res.value_at = make_from_samples(Curvature::concave, std::move(pts), 1.0);
        return res;
    }

    if (inst.chain.K != 3)
        throw unsupported_error("solve_primal_grid: K must be 2 or 3");

    // K = 3: triangular grid over (p1, p2), p3 = 1 - p1 - p2.
    const int g = q_grid_size - 1;  // cells per side
    const double step = 1.0 / g;
    const Matrix pmat = expm(inst.chain, lat.dt);
    auto idx = [&](int i, int j) {
        // row-major over i (p1), valid for i + j <= g
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(g + 2) -
               static_cast<std::size_t>(i) * (static_cast<std::size_t>(i) + 1) / 2 +
               static_cast<std::size_t>(j);
    };
    const std::size_t nn = idx(g, 0) + 1;
    auto tri_interp = [&](const std::vector<double>& vals, double x, double yy) {
        x = std::min(std::max(x, 0.0), 1.0);
        yy = std::min(std::max(yy, 0.0), 1.0 - x);
        double tx = x * g, ty = yy * g;
        int i = std::min(static_cast<int>(tx), g - 1);
        int j = std::min(static_cast<int>(ty), g - 1);
        double fx = tx - i, fy = ty - j;
        if (i + j >= g) {  // boundary sliver: clamp to the hypotenuse cell
            i = std::max(0, std::min(i, g - 1 - j));
            fx = tx - i;
            fy = ty - j;
        }
        if (fx + fy <= 1.0) {
            double v0 = vals[idx(i, j)];
            return v0 + fx * (vals[idx(i + 1, j)] - v0) + fy * (vals[idx(i, j + 1)] - v0);
        }
        double v3 = vals[idx(i + 1, j + 1)];
        return v3 + (1.0 - fx) * (vals[idx(i, j + 1)] - v3) +
               (1.0 - fy) * (vals[idx(i + 1, j)] - v3);
    };

    std::vector<std::vector<double>> level(static_cast<std::size_t>(lat.M) + 1,
                                           std::vector<double>(nn));
    for (int jj = 0; jj <= lat.M; ++jj) {
        double y = lat.y_value(lat.M, jj);
        for (int i = 0; i <= g; ++i)
            for (int j = 0; j + i <= g; ++j) {
                double p1 = i * step, p2 = j * step, p3 = 1.0 - p1 - p2;
                level[static_cast<std::size_t>(jj)][idx(i, j)] =
                    p1 * g0(0, y) + p2 * g0(1, y) + p3 * g0(2, y);
            }
    }
    int nd = std::max(1, static_cast<int>(std::floor(r / step)));
    for (int n = lat.M - 1; n >= 0; --n) {
        std::vector<std::vector<double>> next(static_cast<std::size_t>(n) + 1,
                                              std::vector<double>(nn));
        for (int jj = 0; jj <= n; ++jj) {
            const auto& up = level[static_cast<std::size_t>(jj) + 1];
            const auto& dn = level[static_cast<std::size_t>(jj)];
            double y = lat.y_value(n, jj);
            double f1 = f0(0, y), f2 = f0(1, y), f3 = f0(2, y);
            for (int i = 0; i <= g; ++i)
                for (int j = 0; j + i <= g; ++j) {
                    std::vector<double> p{i * step, j * step, 1.0 - i * step - j * step};
                    auto m = row_times(p, pmat);
                    double best = -std::numeric_limits<double>::infinity();
                    for (int a = -nd; a <= nd; ++a)
                        for (int b = -nd; b <= nd; ++b) {
                            double d1 = a * r / nd, d2 = b * r / nd, d3 = -d1 - d2;
                            if (std::abs(d3) > r) continue;
                            double u1 = m[0] + d1, u2 = m[1] + d2, u3 = m[2] + d3;
                            double l1 = m[0] - d1, l2 = m[1] - d2, l3 = m[2] - d3;
                            if (u1 < 0 || u2 < 0 || u3 < 0 || l1 < 0 || l2 < 0 || l3 < 0)
                                continue;
                            double v = 0.5 * (tri_interp(up, u1, u2) + tri_interp(dn, l1, l2));
                            best = std::max(best, v);
                        }
                    next[static_cast<std::size_t>(jj)][idx(i, j)] =
                        lat.dt * (p[0] * f1 + p[1] * f2 + p[2] * f3) + best;
                }
        }
        level = std::move(next);
    }
    PrimalResult res;
    res.value = tri_interp(level[0], inst.chain.p0[0], inst.chain.p0[1]);
    res.N = N;
    res.M = lat.M;
    res.value_at = PwlFn::from_points(Curvature::concave, {0.0, 1.0}, {res.value, res.value});
    return res;
}

/// Exhaustive DP on the non-recombining path tree; validates that nodewise
/// (Markov) controls lose nothing against path-dependent ones.
inline double solve_primal_pathtree(const ProblemInstance& inst, const Lattice& lat, double N,
                                    int q_grid, int delta_grid) {
    if (inst.chain.K != 2) throw unsupported_error("solve_primal_pathtree: K=2 only");
    if (lat.M > 4) throw input_error("solve_primal_pathtree: M must be <= 4");
    const DriftMap dm = drift_map(inst.chain, lat.dt);
    const double r = N * std::sqrt(lat.dt);
    const auto& g0 = inst.cost.g0;
    const auto& f0 = inst.cost.f0;
    const double step = 1.0 / (q_grid - 1);

    // values[path] for paths at the current level, path bits little-endian
    std::size_t leaves = std::size_t{1} << lat.M;
    std::vector<std::vector<double>> level(leaves,
                                           std::vector<double>(static_cast<std::size_t>(q_grid)));
    for (std::size_t path = 0; path < leaves; ++path) {
        int ups = static_cast<int>(std::popcount(path));
        double y = lat.y_value(lat.M, ups);
        for (int i = 0; i < q_grid; ++i) {
            double q = i * step;
            level[path][static_cast<std::size_t>(i)] = q * g0(0, y) + (1.0 - q) * g0(1, y);
        }
    }
    for (int n = lat.M - 1; n >= 0; --n) {
        std::size_t cnt = std::size_t{1} << n;
        std::vector<std::vector<double>> next(cnt,
                                              std::vector<double>(static_cast<std::size_t>(q_grid)));
        for (std::size_t path = 0; path < cnt; ++path) {
            const auto& up = level[path | (std::size_t{1} << n)];
            const auto& dn = level[path];
            int ups = static_cast<int>(std::popcount(path));
            double y = lat.y_value(n, ups);
            for (int i = 0; i < q_grid; ++i) {
                double q = i * step;
                double m = dm(q);
                double w = std::max(0.0, std::min({r, m, 1.0 - m}));
                double best = -std::numeric_limits<double>::infinity();
                for (int di = 0; di <= delta_grid; ++di) {
                    double d = w * (2.0 * di / delta_grid - 1.0);
                    double v = 0.5 * (detail::interp1(up, m + d, q_grid) +
                                      detail::interp1(dn, m - d, q_grid));
                    best = std::max(best, v);
                }
                next[path][static_cast<std::size_t>(i)] =
                    lat.dt * (q * f0(0, y) + (1.0 - q) * f0(1, y)) + best;
            }
        }
        level = std::move(next);
    }
    return detail::interp1(level[0], inst.chain.p0[0], q_grid);
}

}  // namespace cot
