// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch.hpp>

#include <cmath>
#include <random>

#include "cot/dual_dp.hpp"
#include "cot/instance.hpp"
#include "cot/lattice.hpp"
#include "cot/primal_dp.hpp"

using namespace cot;

namespace {

ProblemInstance table1() {
    return parse_instance(R"json({
      "chain": {"K": 2, "lambda": [[-0.5, 0.5], [0.5, -0.5]], "p0": [0.5, 0.5]},
      "diffusion": {"dim": 1, "drift": {"form": "zero"},
                    "vol": {"form": "const", "params": {"value": 1.0}},
                    "y0_atoms": [{"y": 0.0, "w": 1.0}], "T": 1.0},
      "cost": {"f0": {"form": "zero"},
               "g0": {"form": "logistic", "params": {"slope": 8.0, "state": 1}}}
    })json");
}

ProblemInstance random_instance(std::mt19937& rng, bool with_f = true) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double a = 0.2 + 1.5 * unif(rng);
    double b = 0.2 + 1.5 * unif(rng);
    double p = 0.1 + 0.8 * unif(rng);
    Matrix lam(2);
    lam(0, 0) = -a;
    lam(0, 1) = a;
    lam(1, 0) = b;
    lam(1, 1) = -b;
    ProblemInstance inst;
    inst.chain = ChainSpec(2, lam, {p, 1.0 - p});
    inst.diffusion.dim = 1;
    inst.diffusion.vol.form = CoeffSpec::Form::constant;
    inst.diffusion.vol.value = 0.5 + unif(rng);
    inst.diffusion.kappa = inst.diffusion.vol.value;
    inst.diffusion.y0_atoms = {{{unif(rng) - 0.5}, 1.0}};
    inst.diffusion.horizon = 0.5 + unif(rng);
    inst.cost.g0.form = CostFn::Form::poly;
    inst.cost.g0.coeffs = {{unif(rng), 2 * unif(rng) - 1}, {unif(rng), 2 * unif(rng) - 1}};
    if (with_f) {
        inst.cost.f0.form = CostFn::Form::poly;
        inst.cost.f0.coeffs = {{0.5 * (unif(rng) - 0.5), 0.5 * (unif(rng) - 0.5)},
                               {0.5 * (unif(rng) - 0.5), 0.5 * (unif(rng) - 0.5)}};
    }
    return inst;
}

}  // namespace

TEST_CASE("benchmark sandwich: dual values") {
    auto inst = table1();
    auto lat = build_lattice(inst, 12);
    CHECK(solve_dual(inst, lat, 0.0).value == Approx(0.441703).margin(1e-5));
    CHECK(solve_dual(inst, lat, 0.25).value == Approx(0.436859).margin(1e-5));
    CHECK(solve_dual(inst, lat, 0.5).value == Approx(0.432210).margin(1e-5));
    CHECK(solve_dual(inst, lat, 1.0).value == Approx(0.426318).margin(1e-5));
    CHECK(solve_dual(inst, lat, 2.0).value == Approx(0.422032).margin(1e-5));
    CHECK(solve_dual(inst, lat, 5.0).value == Approx(0.418043).margin(1e-5));
    CHECK(solve_dual(inst, lat, 10.0).value == Approx(0.417777).margin(1e-5));
}

TEST_CASE("sandwich closes at N=10 on the numerical example") {
    auto inst = table1();
    auto lat = build_lattice(inst, 12);
    double lower = solve_primal(inst, lat, 10.0).value;
    double upper = solve_dual(inst, lat, 10.0).value;
    CHECK(upper >= lower - 1e-10);
    CHECK(upper - lower <= 1e-5);
}

TEST_CASE("dual monotone in N, weak duality on random instances") {
    std::mt19937 rng(41);
    for (int trial = 0; trial < 12; ++trial) {
        auto inst = random_instance(rng);
        auto lat = build_lattice(inst, 5 + trial % 4);
        double prev_dual = 1e300, prev_primal = -1e300;
        for (double n : {0.0, 0.5, 1.0, 2.0, 4.0}) {
            double up = solve_dual(inst, lat, n).value;
            double lo = solve_primal(inst, lat, n).value;
            CHECK(up <= prev_dual + 1e-10);
            CHECK(lo >= prev_primal - 1e-10);
            CHECK(up >= lo - 1e-10);
            prev_dual = up;
            prev_primal = lo;
        }
    }
}

TEST_CASE("reduced dual vs brute-force LP oracle") {
    auto inst = table1();
    for (int m : {1, 2, 3}) {
        auto lat = build_lattice(inst, m);
        for (double n : {0.0, 0.5, 1.5}) {
            double ex = solve_dual(inst, lat, n).value;
            double bf = solve_dual_bruteforce(inst, lat, n);
            CHECK(bf == Approx(ex).margin(2e-7));
        }
    }
    std::mt19937 rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        auto rinst = random_instance(rng, trial % 2 == 0);
        auto rlat = build_lattice(rinst, 1 + trial % 3);
        double n = 0.5 * (trial % 4);
        double ex = solve_dual(rinst, rlat, n).value;
        double bf = solve_dual_bruteforce(rinst, rlat, n);
        CHECK(bf == Approx(ex).margin(1e-6 + 2e-7 * std::abs(ex)));
    }
}

TEST_CASE("path-adapted multipliers do not improve the dual") {
    auto inst = table1();
    std::mt19937 rng(47);
    for (int m : {2, 3}) {
        auto lat = build_lattice(inst, m);
        for (double n : {0.7, 2.0}) {
            double node = solve_dual_bruteforce(inst, lat, n, false);
            double path = solve_dual_bruteforce(inst, lat, n, true);
            CHECK(path == Approx(node).margin(2e-7));
        }
    }
    auto rinst = random_instance(rng);
    auto rlat = build_lattice(rinst, 3);
    CHECK(solve_dual_bruteforce(rinst, rlat, 1.0, true) ==
          Approx(solve_dual_bruteforce(rinst, rlat, 1.0, false)).margin(2e-7));
}

TEST_CASE("M=1 N=0 closed form against a 2-D grid search") {
    auto inst = table1();
    auto lat = build_lattice(inst, 1);
    double lp = solve_dual_bruteforce(inst, lat, 0.0);
    double exact = solve_dual(inst, lat, 0.0).value;

    // direct 2-D scan over the static multiplier, golden-refined
    Matrix pmT = expm(inst.chain, -1.0);
    auto objective = [&](double l1, double l2) {
        double acc = 0.0;
        for (int up = 0; up < 2; ++up) {
            double y = lat.y_value(1, up);
            double best = -1e300;
            for (int i = 0; i < 2; ++i) {
                double v = inst.cost.g0(i, y) - (pmT(static_cast<std::size_t>(i), 0) * l1 +
                                                 pmT(static_cast<std::size_t>(i), 1) * l2);
                best = std::max(best, v);
            }
            acc += 0.5 * best;
        }
        return acc + 0.5 * l1 + 0.5 * l2;
    };
    double best = 1e300;
    for (int i = -60; i <= 60; ++i)
        for (int j = -60; j <= 60; ++j) best = std::min(best, objective(0.05 * i, 0.05 * j));
    CHECK(lp <= best + 1e-9);
    CHECK(exact <= best + 1e-9);
    CHECK(exact == Approx(lp).margin(1e-9));
    CHECK(best == Approx(exact).margin(2e-3));  // grid resolution bound
}

TEST_CASE("terminal constraint report") {
    auto inst = table1();
    auto lat = build_lattice(inst, 6);

    // uncontrolled filter: p_T = p0 P(T) at every leaf
    auto pT = row_times(inst.chain.p0, expm(inst.chain, lat.horizon));
    std::vector<std::vector<double>> flat(std::size_t{1} << 6, pT);
    auto rep = check_terminal_constraints(flat, inst, lat);
    CHECK(rep.c2_residual <= 1e-12);
    CHECK(rep.min_c1_slack >= 0.0);

    // vertex at every leaf with mismatched p0: C2 must fail
    std::vector<std::vector<double>> vert(std::size_t{1} << 6, {1.0, 0.0});
    auto repv = check_terminal_constraints(vert, inst, lat);
    CHECK(repv.c2_residual > 1e-3);

    // primal optimizer at N=10: feasible within tolerance
    auto lat12 = build_lattice(inst, 12);
    PrimalOptions opts;
    opts.keep_tables = true;
    auto res = solve_primal(inst, lat12, 10.0, opts);
    auto qt = primal_terminal_filter(res, inst.chain.p0[0]);
    std::vector<std::vector<double>> leaves(qt.size());
    for (std::size_t i = 0; i < qt.size(); ++i) leaves[i] = {qt[i], 1.0 - qt[i]};
    auto repo = check_terminal_constraints(leaves, inst, lat12);
    CHECK(repo.min_c1_slack >= -1e-10);
    CHECK(repo.c2_residual <= 1e-10);
}

TEST_CASE("complementary slackness between primal slacks and LP multipliers") {
    // The tree primal and the multiplier LP are a dual pair, so any optimal
    // primal filter and optimal multipliers satisfy complementary slackness:
    // a strictly positive C1 slack forces the matching multiplier to zero.
    auto inst = table1();
    auto lat = build_lattice(inst, 3);
    const double N = 6.0;

    PrimalOptions popts;
    popts.keep_tables = true;
    auto pres = solve_primal(inst, lat, N, popts);
    auto qt = primal_terminal_filter(pres, inst.chain.p0[0]);
    std::vector<std::vector<double>> leaves(qt.size());
    for (std::size_t i = 0; i < qt.size(); ++i) leaves[i] = {qt[i], 1.0 - qt[i]};
    auto rep = check_terminal_constraints(leaves, inst, lat);

    DualMultipliers mult;
    double bf = solve_dual_bruteforce(inst, lat, N, false, &mult);
    CHECK(bf == Approx(pres.value).margin(2e-6));  // strong duality of the pair

    double worst_product = 0.0;
    for (int n = 0; n < lat.M; ++n)
        for (int j = 0; j <= n; ++j)
            for (int state = 0; state < 2; ++state) {
                double lambda = mult.process[static_cast<std::size_t>(n)]
                                            [2 * static_cast<std::size_t>(j) +
                                             static_cast<std::size_t>(state)];
                double slack = rep.node_slack[static_cast<std::size_t>(n)]
                                             [static_cast<std::size_t>(j) * 2 +
                                              static_cast<std::size_t>(state)];
                if (slack > 1e-6) worst_product = std::max(worst_product, lambda * slack);
            }
    CHECK(worst_product <= 1e-6);

    // at least one multiplier is active at this truncation level
    double biggest = 0.0;
    for (const auto& row : mult.process)
        for (double v : row) biggest = std::max(biggest, v);
    CHECK(biggest > 1e-3);
}

TEST_CASE("root duality gap closes against the static multiplier") {
    auto inst = table1();
    auto lat = build_lattice(inst, 12);
    auto pres = solve_primal(inst, lat, 10.0);
    auto dres = solve_dual(inst, lat, 10.0);
    double gap = dres.value - pres.value;
    CHECK(gap >= -1e-10);
    CHECK(gap <= 1e-5);
    for (double l : dres.static_multiplier) CHECK(std::abs(gap * l) <= 1e-5);
}

TEST_CASE("dual value function of p is concave and consistent") {
    auto inst = table1();
    auto lat = build_lattice(inst, 12);
    auto res = solve_dual(inst, lat, 2.0);
    auto vfun = dual_value_function(inst, res, lat);
    CHECK(vfun(inst.chain.p0[0]) == Approx(res.value).margin(1e-12));
    auto slopes = vfun.all_slopes();
    for (std::size_t i = 0; i + 1 < slopes.size(); ++i) CHECK(slopes[i + 1] <= slopes[i] + 1e-11);

    // against a re-solve at a different p0
    auto inst2 = table1();
    inst2.chain.p0 = {0.3, 0.7};
    auto res2 = solve_dual(inst2, lat, 2.0);
    CHECK(vfun(0.3) == Approx(res2.value).margin(1e-12));
}
