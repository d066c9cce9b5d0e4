// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch.hpp>

#include <cmath>
#include <random>

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

/// Random valid two-state instance with polynomial costs, M small.
ProblemInstance random_instance(std::mt19937& rng) {
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
    inst.diffusion.drift.form = CoeffSpec::Form::constant;
    inst.diffusion.drift.value = unif(rng) - 0.5;
    inst.diffusion.y0_atoms = {{{0.0}, 1.0}};
    inst.diffusion.horizon = 0.5 + unif(rng);
    inst.cost.g0.form = CostFn::Form::poly;
    inst.cost.g0.coeffs = {{unif(rng), 2 * unif(rng) - 1}, {unif(rng), 2 * unif(rng) - 1}};
    inst.cost.f0.form = CostFn::Form::poly;
    inst.cost.f0.coeffs = {{unif(rng) - 0.5, unif(rng) - 0.5}, {unif(rng) - 0.5, unif(rng) - 0.5}};
    return inst;
}

}  // namespace

TEST_CASE("benchmark sandwich: primal values") {
    auto inst = table1();
    auto lat = build_lattice(inst, 12);
    CHECK(solve_primal(inst, lat, 0.0).value == Approx(0.250000).margin(1e-5));
    CHECK(solve_primal(inst, lat, 0.25).value == Approx(0.313991).margin(1e-5));
    CHECK(solve_primal(inst, lat, 0.5).value == Approx(0.375733).margin(1e-5));
    CHECK(solve_primal(inst, lat, 1.0).value == Approx(0.416128).margin(1e-5));
    CHECK(solve_primal(inst, lat, 2.0).value == Approx(0.417777).margin(1e-5));
    CHECK(solve_primal(inst, lat, 5.0).value == Approx(0.417777).margin(1e-5));
    CHECK(solve_primal(inst, lat, 10.0).value == Approx(0.417777).margin(1e-5));
}

TEST_CASE("primal monotone in N and concave") {
    auto inst = table1();
    auto lat = build_lattice(inst, 12);
    double prev = -1e300;
    for (double n : {0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0}) {
        auto res = solve_primal(inst, lat, n);
        CHECK(res.value >= prev - 1e-10);
        prev = res.value;
        auto slopes = res.value_at.all_slopes();
        for (std::size_t i = 0; i + 1 < slopes.size(); ++i)
            CHECK(slopes[i + 1] <= slopes[i] + 1e-10);
    }
}

TEST_CASE("uncontrolled value at N=0 matches the deterministic filter") {
    auto inst = table1();
    auto lat = build_lattice(inst, 12);
    auto res = solve_primal(inst, lat, 0.0);
    // with q0 = 1/2 the filter is stationary and E[rho(Y_M)] = 1/2 by symmetry
    CHECK(res.value == Approx(0.25).margin(1e-12));

    // N=0 from an arbitrary q: deterministic filter path + lattice expectation
    for (double q0 : {0.0, 0.3, 1.0}) {
        double q = q0;
        for (int n = 0; n < lat.M; ++n) q = res.dmap(q);
        double expv = 0.0;
        double w = std::ldexp(1.0, -lat.M);
        std::vector<double> binom(static_cast<std::size_t>(lat.M) + 1);
        binom[0] = 1.0;
        for (int n = 1; n <= lat.M; ++n)
            for (int j = n; j >= 0; --j)
                binom[static_cast<std::size_t>(j)] =
                    (j > 0 ? binom[static_cast<std::size_t>(j) - 1] : 0.0) +
                    (j < n ? binom[static_cast<std::size_t>(j)] : 0.0);
        for (int j = 0; j <= lat.M; ++j) {
            double y = lat.y_value(lat.M, j);
            expv += binom[static_cast<std::size_t>(j)] * w *
                    (q * inst.cost.g0(0, y) + (1 - q) * inst.cost.g0(1, y));
        }
        CHECK(res.value_at(q0) == Approx(expv).margin(1e-10));
    }
}

TEST_CASE("vertex values dominate the uncontrolled filter") {
    // From a vertex the tree still allows controls after the first step, so
    // the DP value weakly dominates the uncontrolled propagation.
    auto inst = table1();
    auto lat = build_lattice(inst, 12);
    auto res0 = solve_primal(inst, lat, 0.0);
    for (double n : {1.0, 5.0}) {
        auto res = solve_primal(inst, lat, n);
        CHECK(res.value_at(0.0) >= res0.value_at(0.0) - 1e-12);
        CHECK(res.value_at(1.0) >= res0.value_at(1.0) - 1e-12);
    }
}

TEST_CASE("root symmetry of the symmetric instance") {
    auto inst = table1();
    auto lat = build_lattice(inst, 12);
    // relabeling the states of the symmetric chain turns the instance into
    // itself with the payoff moved to state 2, so V(q) = V_relabeled(1-q)
    auto flipped = table1();
    flipped.cost.g0.state = 1;
    auto latf = build_lattice(flipped, 12);
    for (double n : {0.0, 0.7, 2.0}) {
        auto res = solve_primal(inst, lat, n);
        auto resf = solve_primal(flipped, latf, n);
        CHECK(res.value_at(0.5) == Approx(res.value).margin(1e-12));
        for (double q : {0.2, 0.5, 0.9})
            CHECK(res.value_at(q) == Approx(resf.value_at(1.0 - q)).margin(1e-12));
    }
}

TEST_CASE("exact primal vs grid oracle") {
    auto inst = table1();
    auto lat = build_lattice(inst, 12);
    auto exact = solve_primal(inst, lat, 10.0);
    auto grid = solve_primal_grid(inst, lat, 10.0, 4001);
    CHECK(grid.value == Approx(exact.value).margin(5e-4));

    auto exact0 = solve_primal(inst, lat, 0.0);
    auto grid0 = solve_primal_grid(inst, lat, 0.0, 101);
    CHECK(grid0.value == Approx(exact0.value).margin(1e-12));

    std::mt19937 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        auto rinst = random_instance(rng);
        auto rlat = build_lattice(rinst, 6);
        double n = trial * 0.5;
        auto ex = solve_primal(rinst, rlat, n);
        auto gr = solve_primal_grid(rinst, rlat, n, 4001);
        CHECK(gr.value == Approx(ex.value).margin(5e-4));
    }
}

TEST_CASE("exact primal vs path-tree brute force") {
    auto inst = table1();
    for (int m : {1, 2, 3, 4}) {
        auto lat = build_lattice(inst, m);
        for (double n : {0.0, 0.6, 2.0}) {
            double pt = solve_primal_pathtree(inst, lat, n, 801, 400);
            double ex = solve_primal(inst, lat, n).value;
            CHECK(pt == Approx(ex).margin(2e-3));
            CHECK(pt <= ex + 1e-9);  // grid search cannot beat the exact LP value
        }
    }
}

TEST_CASE("one-step hand computation") {
    // M=1, large N: value = m(q0) * avg-slope + delta_max * half-spread
    auto inst = table1();
    auto lat = build_lattice(inst, 1);
    auto res = solve_primal(inst, lat, 50.0);  // window clipped by the simplex
    double m = res.dmap(0.5);
    double rho_up = inst.cost.g0(0, 1.0), rho_dn = inst.cost.g0(0, -1.0);
    double w = std::min(m, 1.0 - m);  // = 1/2
    double expect = m * 0.5 * (rho_up + rho_dn) + w * 0.5 * (rho_up - rho_dn);
    CHECK(res.value == Approx(expect).margin(1e-12));
}

TEST_CASE("K=3 grid solver runs against the path tree") {
    // cyclic three-state chain, tiny horizon
    Matrix lam(3);
    lam(0, 0) = -1;
    lam(0, 1) = 1;
    lam(1, 1) = -1;
    lam(1, 2) = 1;
    lam(2, 2) = -1;
    lam(2, 0) = 1;
    ProblemInstance inst;
    inst.chain = ChainSpec(3, lam, {0.4, 0.3, 0.3});
    inst.diffusion.dim = 1;
    inst.diffusion.vol.form = CoeffSpec::Form::constant;
    inst.diffusion.vol.value = 1.0;
    inst.diffusion.kappa = 1.0;
    inst.diffusion.y0_atoms = {{{0.0}, 1.0}};
    inst.diffusion.horizon = 0.6;
    inst.cost.g0.form = CostFn::Form::linear_xy;
    inst.cost.g0.values = {-1.0, 0.0, 1.0};
    auto lat = build_lattice(inst, 3);
    auto res = solve_primal_grid(inst, lat, 0.8, 61);
    CHECK(std::isfinite(res.value));
    // against N=0 (uncontrolled): exact expectation of the linear payoff
    auto res0 = solve_primal_grid(inst, lat, 0.0, 61);
    auto pT = row_times(inst.chain.p0, expm(inst.chain, 0.6));
    // E[g] = sum_i pT_i x_i E[Y_T] = 0 since E[Y_T] = 0... payoff is x_i Y
    CHECK(res0.value == Approx(0.0).margin(1e-10));
    CHECK(res.value >= res0.value - 1e-10);
}
