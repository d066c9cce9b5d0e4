// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "cot/chain.hpp"
#include "cot/errors.hpp"
#include "cot/instance.hpp"

namespace cot {

/// Recombining binomial lattice for the target diffusion: node (n, j) with
/// j up-moves out of n steps, each branch with probability 1/2. Only
/// constant coefficients are supported so node values are exact.
struct Lattice {
    int M = 0;
    double dt = 0.0;
    double y0 = 0.0;
    double drift = 0.0;
    double vol = 1.0;
    double horizon = 0.0;

    double y_value(int n, int j) const {
        return y0 + drift * (n * dt) + vol * std::sqrt(dt) * (2 * j - n);
    }
    double t_value(int n) const { return n * dt; }
    int node_count() const { return (M + 1) * (M + 2) / 2; }
};

inline Lattice build_lattice(const ProblemInstance& inst, int steps, double y0_override = 0.0,
                             bool use_override = false) {
    if (inst.diffusion.dim != 1)
        throw unsupported_error("build_lattice: only d=1 diffusions are supported");
    if (!inst.diffusion.drift.is_constant() || !inst.diffusion.vol.is_constant())
        throw unsupported_error(
            "build_lattice: state-dependent coefficients are not supported on the lattice");
    if (steps < 1) throw input_error("build_lattice: M must be positive");
    Lattice lat;
    lat.M = steps;
    lat.horizon = inst.diffusion.horizon;
    lat.dt = inst.diffusion.horizon / steps;
    lat.y0 = use_override ? y0_override : inst.diffusion.y0_atoms.front().y.front();
    lat.drift = inst.diffusion.drift(0.0, lat.y0);
    lat.vol = inst.diffusion.vol(0.0, lat.y0);
    if (!(lat.vol > 0.0)) throw input_error("build_lattice: vol must be positive");
    return lat;
}

/// One-step conditional-mean map of the two-state filter on the lattice:
/// m(q) = b/c + (q - b/c) e^{-c dt}, the tree analogue of the filter's
/// martingale identity after one transition step. For c = 0 (constant
/// chain) this is the identity.
struct DriftMap {
    double alpha = 1.0;  // e^{-c dt}
    double beta = 0.0;   // (b/c)(1 - e^{-c dt})

    double operator()(double q) const { return beta + alpha * q; }
};

inline DriftMap drift_map(const ChainSpec& chain, double dt) {
    if (chain.K != 2)
        throw unsupported_error("drift_map: exact map requires K=2 (use the grid solver)");
    const double a = chain.rate_a(), b = chain.rate_b();
    const double c = a + b;
    DriftMap m;
    if (c == 0.0) return m;
    m.alpha = std::exp(-c * dt);
    m.beta = (b / c) * (1.0 - m.alpha);
    return m;
}

}  // namespace cot
