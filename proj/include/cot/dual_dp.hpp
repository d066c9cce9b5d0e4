// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "cot/chain.hpp"
#include "cot/errors.hpp"
#include "cot/instance.hpp"
#include "cot/lattice.hpp"
#include "cot/pwl.hpp"
#include "cot/simplex_lp.hpp"

namespace cot {

struct DualOptions {
    bool keep_tables = false;
    double simplify_eps = 0.0;
};

/// Upper bound v^{N,M} from the Lagrangian dual on the lattice.
///
/// The per-state accumulator a_i (static multiplier, process multipliers,
/// running costs, all pulled through P(t-T)) enters the terminal max
/// affinely, so the two-state value reduces to V(a) = a_2 + W(a_1 - a_2)
/// with W convex piecewise-linear in the scalar d = a_1 - a_2. Each
/// backward step is an exact infimal convolution with the parametric cost
/// kappa_n of producing a given shift of d from box-constrained multipliers,
/// and the static multiplier is eliminated in closed form by a Legendre
/// transform at the time-T chain marginal. Both reductions are validated
/// against the brute-force LP oracle below.
struct DualResult {
    double value = 0.0;
    PwlFn root_W;  // convex, reduced accumulator state
    std::vector<double> static_multiplier;
    double N = 0.0;
    int M = 0;
    std::shared_ptr<const std::vector<std::vector<PwlFn>>> tables;  // W per node
    std::vector<PwlFn> kappa;                                       // per step, when kept
    std::vector<double> fshift;                                     // d-shift per (n,j), flattened
};

namespace detail {

/// Minimal cost kappa(delta) of achieving shift delta = sum_j u_j l_j with
/// cost sum_j c_j l_j over l in [0, N]^2: the lower hull of the image
/// parallelogram.
inline PwlFn shift_cost(double u1, double c1, double u2, double c2, double bound) {
    std::vector<std::pair<double, double>> pts{
        {0.0, 0.0},
        {bound * u1, bound * c1},
        {bound * u2, bound * c2},
        {bound * (u1 + u2), bound * (c1 + c2)}};
    std::sort(pts.begin(), pts.end());
    // collapse equal x, keep cheapest
    std::vector<std::pair<double, double>> uniq;
    double span = std::max(1e-30, std::abs(pts.back().first - pts.front().first));
    for (auto& p : pts) {
        if (!uniq.empty() && p.first - uniq.back().first <= 1e-15 * span)
            uniq.back().second = std::min(uniq.back().second, p.second);
        else
            uniq.push_back(p);
    }
    if (uniq.size() == 1)
        return PwlFn::from_points(Curvature::convex, {uniq[0].first}, {uniq[0].second});
    // lower hull, monotone chain
    std::vector<std::pair<double, double>> hull;
    for (auto& p : uniq) {
        while (hull.size() >= 2) {
            auto& a = hull[hull.size() - 2];
            auto& b = hull[hull.size() - 1];
            double cross = (b.first - a.first) * (p.second - a.second) -
                           (b.second - a.second) * (p.first - a.first);
            if (cross <= 0.0)
                hull.pop_back();
            else
                break;
        }
        hull.push_back(p);
    }
    std::vector<double> xs, ys;
    for (auto& p : hull) {
        xs.push_back(p.first);
        ys.push_back(p.second);
    }
    return PwlFn::from_points(Curvature::convex, std::move(xs), std::move(ys));
}

}  // namespace detail

inline DualResult solve_dual(const ProblemInstance& inst, const Lattice& lat, double N,
                             const DualOptions& opts = {}) {
    if (inst.chain.K != 2)
        throw unsupported_error("solve_dual: exact reduced solver requires K=2");
    if (N < 0.0) throw input_error("solve_dual: N must be nonnegative");
    const auto& g0 = inst.cost.g0;
    const auto& f0 = inst.cost.f0;
    const double T = lat.horizon;

    std::vector<Matrix> pback(static_cast<std::size_t>(lat.M));
    for (int n = 0; n < lat.M; ++n)
        pback[static_cast<std::size_t>(n)] = expm(inst.chain, lat.t_value(n) - T);
    const Matrix pT = expm(inst.chain, T);
    const Matrix pmT = expm(inst.chain, -T);

    auto tables = std::make_shared<std::vector<std::vector<PwlFn>>>(
        static_cast<std::size_t>(lat.M) + 1);
    DualResult res;
    res.N = N;
    res.M = lat.M;

    std::vector<PwlFn> level(static_cast<std::size_t>(lat.M) + 1);
    for (int j = 0; j <= lat.M; ++j) {
        double y = lat.y_value(lat.M, j);
        double g1 = g0(0, y), g2 = g0(1, y);
        level[static_cast<std::size_t>(j)] = PwlFn::with_extensions(
            Curvature::convex, {g2 - g1}, {g2}, true, 0.0, true, 1.0);
    }
    if (opts.keep_tables) (*tables)[static_cast<std::size_t>(lat.M)] = level;

    res.fshift.assign(static_cast<std::size_t>(lat.M) * (static_cast<std::size_t>(lat.M) + 1) / 2,
                      0.0);
    auto shift_idx = [&](int n, int j) {
        return static_cast<std::size_t>(n) * (static_cast<std::size_t>(n) + 1) / 2 +
               static_cast<std::size_t>(j);
    };
    if (opts.keep_tables) res.kappa.resize(static_cast<std::size_t>(lat.M));

    for (int n = lat.M - 1; n >= 0; --n) {
        const Matrix& pb = pback[static_cast<std::size_t>(n)];
        PwlFn kapp = PwlFn::from_points(Curvature::convex, {0.0}, {0.0});
        bool have_kappa = N > 0.0;
        if (have_kappa) {
            double u1 = lat.dt * (pb(0, 0) - pb(1, 0));
            double c1 = lat.dt * pb(1, 0);
            double u2 = lat.dt * (pb(0, 1) - pb(1, 1));
            double c2 = lat.dt * pb(1, 1);
            kapp = detail::shift_cost(u1, c1, u2, c2, N);
        }
        std::vector<PwlFn> next(static_cast<std::size_t>(n) + 1);
        for (int j = 0; j <= n; ++j) {
            PwlFn g = scale_add(sum(level[static_cast<std::size_t>(j) + 1],
                                    level[static_cast<std::size_t>(j)]),
                                0.5, 0.0, 0.0);
            PwlFn conv = have_kappa ? inf_convolve(affine_compose(kapp, -1.0, 0.0), g)
                                    : std::move(g);
            double y = lat.y_value(n, j);
            double fv1 = f0(0, y), fv2 = f0(1, y);
            double phi1 = lat.dt * (pb(0, 0) * fv1 + pb(0, 1) * fv2);
            double phi2 = lat.dt * (pb(1, 0) * fv1 + pb(1, 1) * fv2);
            res.fshift[shift_idx(n, j)] = phi1 - phi2;
            PwlFn w = conv;
            if (phi1 != phi2) w = affine_compose(w, 1.0, phi1 - phi2);
            if (phi2 != 0.0) w = scale_add(w, 1.0, 0.0, phi2);
            if (opts.simplify_eps > 0.0) w = simplify(w, opts.simplify_eps);
            next[static_cast<std::size_t>(j)] = std::move(w);
        }
        level = std::move(next);
        if (opts.keep_tables) {
            (*tables)[static_cast<std::size_t>(n)] = level;
            res.kappa[static_cast<std::size_t>(n)] = kapp;
        }
    }

    const PwlFn& w_root = level[0];
    std::vector<double> pi = row_times(inst.chain.p0, pT);
    res.value = -legendre(w_root, pi[0]);
    res.root_W = w_root;

    // Reconstruct a static multiplier with lambda_2 = 0: the reduced-state
    // minimizer u* of W(u) - pi_1 u maps back through mu = P(-T) lambda.
    double ustar = w_root.xs().front();
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < w_root.size(); ++i) {
        double v = pi[0] * w_root.xs()[i] - w_root.ys()[i];
        if (v > best + 1e-15) {
            best = v;
            ustar = w_root.xs()[i];
        }
    }
    double denom = pmT(1, 0) - pmT(0, 0);
    res.static_multiplier = {std::abs(denom) > 1e-300 ? ustar / denom : 0.0, 0.0};
    if (opts.keep_tables) res.tables = tables;
    return res;
}

/// Dual upper bound as a concave PL function of the initial filter p^1,
/// obtained from the same root W by conjugation composed with the affine
/// map p -> (p P(T))_1. Used by the weak-OT initial layer.
inline PwlFn dual_value_function(const ProblemInstance& inst, const DualResult& res,
                                 const Lattice& lat) {
    const Matrix pT = expm(inst.chain, lat.horizon);
    PwlFn vfun = negate(conjugate(res.root_W));  // concave in s on [slope range]
    double a = pT(0, 0) - pT(1, 0);
    double b = pT(1, 0);
    // s(p) = a p + b with p in [0,1] stays inside [0,1], the slope range of W
    PwlFn composed = affine_compose(vfun, a, b);
    return restrict_domain(composed, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Brute-force oracle: the dual as an explicit LP over adapted multipliers.
// ---------------------------------------------------------------------------

/// Optimal multipliers recovered from the brute-force LP: lambda_static in
/// R^2 and process[n][j*2 + coord] per recombined node.
struct DualMultipliers {
    std::vector<double> lambda_static;
    std::vector<std::vector<double>> process;
};

/// Exact LP value of the tree dual with static multiplier lambda in R^2 and
/// per-node process multipliers in [0, N]^2, solved by the dense simplex.
/// With path_adapted = true the process multipliers may depend on the whole
/// path prefix rather than the recombined node, which verifies that nodewise
/// multipliers lose nothing.
inline double solve_dual_bruteforce(const ProblemInstance& inst, const Lattice& lat, double N,
                                    bool path_adapted = false,
                                    DualMultipliers* multipliers = nullptr) {
    if (inst.chain.K != 2) throw unsupported_error("solve_dual_bruteforce: K=2 only");
    if (lat.M > 3) throw input_error("solve_dual_bruteforce: M must be <= 3");
    const int M = lat.M;
    const double T = lat.horizon;
    const auto& g0 = inst.cost.g0;
    const auto& f0 = inst.cost.f0;

    std::vector<Matrix> pback(static_cast<std::size_t>(M));
    for (int n = 0; n < M; ++n) pback[static_cast<std::size_t>(n)] = expm(inst.chain, lat.t_value(n) - T);
    const Matrix pmT = expm(inst.chain, -T);

    // Multiplier slots: per step n, either one slot per recombined node
    // (j = 0..n) or one per path prefix (2^n of them).
    std::vector<std::vector<int>> slot(static_cast<std::size_t>(M));
    int nslots = 0;
    for (int n = 0; n < M; ++n) {
        int cnt = path_adapted ? (1 << n) : (n + 1);
        slot[static_cast<std::size_t>(n)].resize(static_cast<std::size_t>(cnt));
        for (int k = 0; k < cnt; ++k) slot[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)] = nslots++;
    }

    // Variables: [lp, lm (static, split)] x2, process multipliers (2 per
    // slot), t_path (split) per path.
    const int npaths = 1 << M;
    const int v_lsp = 0;              // lambda^1 = x0 - x1, lambda^2 = x2 - x3
    const int v_proc = 4;             // 2 per slot
    const int v_t = v_proc + 2 * nslots;  // t_path split: 2 per path
    const int nvars = v_t + 2 * npaths;

    LpProblem lp;
    lp.nvars = nvars;
    lp.c.assign(static_cast<std::size_t>(nvars), 0.0);
    // objective: sum_path 2^-M (tp - tm) + p0 . lambda
    for (int p = 0; p < npaths; ++p) {
        lp.c[static_cast<std::size_t>(v_t + 2 * p)] = std::ldexp(1.0, -M);
        lp.c[static_cast<std::size_t>(v_t + 2 * p) + 1] = -std::ldexp(1.0, -M);
    }
    lp.c[v_lsp + 0] += inst.chain.p0[0];
    lp.c[v_lsp + 1] -= inst.chain.p0[0];
    lp.c[v_lsp + 2] += inst.chain.p0[1];
    lp.c[v_lsp + 3] -= inst.chain.p0[1];

    // t_path >= inner expression for both states i
    for (int p = 0; p < npaths; ++p) {
        int ups = std::popcount(static_cast<unsigned>(p));
        double y_term = lat.y_value(M, ups);
        for (int i = 0; i < 2; ++i) {
            LpProblem::Row row;
            row.a.assign(static_cast<std::size_t>(nvars), 0.0);
            row.rel = '>';
            row.a[static_cast<std::size_t>(v_t + 2 * p)] = 1.0;
            row.a[static_cast<std::size_t>(v_t + 2 * p) + 1] = -1.0;
            double rhs = g0(i, y_term);
            // static multiplier: -(P(-T) lambda)_i
            for (int jj = 0; jj < 2; ++jj) {
                double coef = pmT(static_cast<std::size_t>(i), static_cast<std::size_t>(jj));
                row.a[static_cast<std::size_t>(v_lsp + 2 * jj)] += coef;
                row.a[static_cast<std::size_t>(v_lsp + 2 * jj + 1)] -= coef;
            }
            // process multipliers and running cost along the path
            int upcount = 0;
            for (int n = 0; n < M; ++n) {
                int node = path_adapted ? (p & ((1 << n) - 1)) : upcount;
                int s = slot[static_cast<std::size_t>(n)][static_cast<std::size_t>(node)];
                const Matrix& pb = pback[static_cast<std::size_t>(n)];
                for (int jj = 0; jj < 2; ++jj)
                    row.a[static_cast<std::size_t>(v_proc + 2 * s + jj)] -=
                        lat.dt * pb(static_cast<std::size_t>(i), static_cast<std::size_t>(jj));
                double y = lat.y_value(n, upcount);
                rhs += lat.dt * (pb(static_cast<std::size_t>(i), 0) * f0(0, y) +
                                 pb(static_cast<std::size_t>(i), 1) * f0(1, y));
                if ((p >> n) & 1) ++upcount;
            }
            row.b = rhs;
            lp.rows.push_back(std::move(row));
        }
    }
    // 0 <= process multipliers <= N
    for (int s = 0; s < nslots; ++s)
        for (int jj = 0; jj < 2; ++jj) {
            LpProblem::Row row;
            row.a.assign(static_cast<std::size_t>(nvars), 0.0);
            row.a[static_cast<std::size_t>(v_proc + 2 * s + jj)] = 1.0;
            row.b = N;
            row.rel = '<';
            lp.rows.push_back(std::move(row));
        }

    LpSolution sol = solve_lp(lp);
    if (!sol.optimal) throw numerical_error("solve_dual_bruteforce: LP not optimal");
    if (multipliers && !path_adapted) {
        multipliers->lambda_static = {sol.x[0] - sol.x[1], sol.x[2] - sol.x[3]};
        multipliers->process.assign(static_cast<std::size_t>(M), {});
        for (int n = 0; n < M; ++n) {
            auto& row = multipliers->process[static_cast<std::size_t>(n)];
            row.assign(2 * slot[static_cast<std::size_t>(n)].size(), 0.0);
            for (std::size_t k = 0; k < slot[static_cast<std::size_t>(n)].size(); ++k) {
                int s = slot[static_cast<std::size_t>(n)][k];
                row[2 * k] = sol.x[static_cast<std::size_t>(v_proc + 2 * s)];
                row[2 * k + 1] = sol.x[static_cast<std::size_t>(v_proc + 2 * s) + 1];
            }
        }
    }
    return sol.objective;
}

// ---------------------------------------------------------------------------
// Terminal-filter feasibility report (constraints C1 / C2 on the tree).
// ---------------------------------------------------------------------------

struct ConstraintReport {
    double min_c1_slack = 0.0;  // min over nodes, states of (E[p_T|node] P(t_n-T))_j
    double c2_residual = 0.0;   // || E[p_T] P(-T) - p0 ||_inf
    // per recombined node (n, j = up-moves) and state: the worst C1 slack
    // across path prefixes landing on that node; indexed [n][j*K + state]
    std::vector<std::vector<double>> node_slack;
};

/// Propagates candidate terminal filters (per path, bit n = up at step n)
/// up the binary path tree, multiplies by the inverse semigroup, and
/// reports the worst nonnegativity slack and the initial-condition residual.
inline ConstraintReport check_terminal_constraints(const std::vector<std::vector<double>>& p_T,
                                                   const ProblemInstance& inst,
                                                   const Lattice& lat) {
    const int M = lat.M;
    const std::size_t npaths = std::size_t{1} << M;
    if (p_T.size() != npaths)
        throw input_error("check_terminal_constraints: need one p_T per path");
    const int K = inst.chain.K;
    std::vector<std::vector<double>> cond = p_T;

    ConstraintReport rep;
    rep.min_c1_slack = std::numeric_limits<double>::infinity();
    rep.node_slack.resize(static_cast<std::size_t>(M) + 1);
    for (int n = 0; n <= M; ++n)
        rep.node_slack[static_cast<std::size_t>(n)].assign(
            static_cast<std::size_t>(n + 1) * static_cast<std::size_t>(K),
            std::numeric_limits<double>::infinity());
    auto note = [&](int n, std::size_t prefix, const std::vector<double>& filt) {
        int ups = static_cast<int>(std::popcount(prefix));
        for (int i = 0; i < K; ++i) {
            double v = filt[static_cast<std::size_t>(i)];
            rep.min_c1_slack = std::min(rep.min_c1_slack, v);
            auto& slot = rep.node_slack[static_cast<std::size_t>(n)]
                                       [static_cast<std::size_t>(ups) * static_cast<std::size_t>(K) +
                                        static_cast<std::size_t>(i)];
            slot = std::min(slot, v);
        }
    };
    for (std::size_t p = 0; p < npaths; ++p) note(M, p, cond[p]);
    for (int n = M; n-- > 0;) {
        std::size_t cnt = std::size_t{1} << n;
        std::vector<std::vector<double>> up(cnt);
        Matrix pb = expm(inst.chain, lat.t_value(n) - lat.horizon);
        for (std::size_t p = 0; p < cnt; ++p) {
            up[p].assign(static_cast<std::size_t>(K), 0.0);
            for (int i = 0; i < K; ++i)
                up[p][static_cast<std::size_t>(i)] =
                    0.5 * (cond[p][static_cast<std::size_t>(i)] +
                           cond[p | (std::size_t{1} << n)][static_cast<std::size_t>(i)]);
            auto filt = row_times(up[p], pb);
            note(n, p, filt);
        }
        cond = std::move(up);
    }
    Matrix pmT = expm(inst.chain, -lat.horizon);
    auto root = row_times(cond[0], pmT);
    rep.c2_residual = 0.0;
    for (int i = 0; i < K; ++i)
        rep.c2_residual = std::max(rep.c2_residual,
                                   std::abs(root[static_cast<std::size_t>(i)] - inst.chain.p0[static_cast<std::size_t>(i)]));
    return rep;
}

}  // namespace cot
