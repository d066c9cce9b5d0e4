// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <chrono>
#include <cstdio>
#include <future>
#include <ostream>
#include <string>
#include <vector>

#include "cot/dual_dp.hpp"
#include "cot/errors.hpp"
#include "cot/initial_coupling.hpp"
#include "cot/instance.hpp"
#include "cot/lattice.hpp"
#include "cot/primal_dp.hpp"

namespace cot {

/// Shortest round-trip decimal representation (CSV output).
inline std::string fmt_shortest(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

inline std::string fmt_fixed6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

struct SandwichRow {
    double N = 0.0;
    double lower = 0.0;   // V^{N,M}
    double upper = 0.0;   // v^{N,M}
    double gap = 0.0;
    double seconds = 0.0;
};

struct SandwichReport {
    std::vector<SandwichRow> rows;
    std::string fingerprint;
    int M = 0;

    void validate() const {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].gap < -1e-10)
                throw internal_error("sandwich: negative duality gap at N=" +
                                     std::to_string(rows[i].N));
            if (i > 0) {
                if (rows[i].lower < rows[i - 1].lower - 1e-10)
                    throw internal_error("sandwich: lower bounds not monotone");
                if (rows[i].upper > rows[i - 1].upper + 1e-10)
                    throw internal_error("sandwich: upper bounds not monotone");
            }
        }
    }
};

/// Run the primal and dual solvers for each truncation level. Rows are
/// independent and run on up to `threads` concurrent workers.
inline SandwichReport make_sandwich(const ProblemInstance& inst, int steps,
                                    const std::vector<double>& levels, int threads = 1) {
    if (levels.empty()) throw input_error("sandwich: no truncation levels given");
    Lattice lat = build_lattice(inst, steps);
    SandwichReport rep;
    rep.fingerprint = inst.fingerprint;
    rep.M = steps;
    rep.rows.resize(levels.size());

    auto run_row = [&](std::size_t i) {
        auto t0 = std::chrono::steady_clock::now();
        SandwichRow row;
        row.N = levels[i];
        row.lower = solve_primal(inst, lat, levels[i]).value;
        row.upper = solve_dual(inst, lat, levels[i]).value;
        row.gap = row.upper - row.lower;
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rep.rows[i] = row;
    };

    if (threads <= 1) {
        for (std::size_t i = 0; i < levels.size(); ++i) run_row(i);
    } else {
        std::vector<std::future<void>> pending;
        for (std::size_t i = 0; i < levels.size(); ++i) {
            pending.push_back(std::async(std::launch::async, run_row, i));
            if (pending.size() >= static_cast<std::size_t>(threads)) {
                for (auto& f : pending) f.get();
                pending.clear();
            }
        }
        for (auto& f : pending) f.get();
    }
    rep.validate();
    return rep;
}

inline void print_sandwich(std::ostream& os, const SandwichReport& rep) {
    os << "# config " << rep.fingerprint << "  M=" << rep.M << "\n";
    os << "     N     lower V^{N,M}   upper v^{N,M}          gap     sec\n";
    for (const auto& r : rep.rows) {
        char line[160];
        std::snprintf(line, sizeof line, "%6.2f   %14.6f  %14.6f  %11.6f  %6.2f\n", r.N, r.lower,
                      r.upper, r.gap, r.seconds);
        os << line;
    }
}

inline void write_sandwich_csv(std::ostream& os, const SandwichReport& rep) {
    os << "# config " << rep.fingerprint << "\n";
    os << "N,lower,upper,gap\n";
    for (const auto& r : rep.rows)
        os << fmt_shortest(r.N) << ',' << fmt_shortest(r.lower) << ',' << fmt_shortest(r.upper)
           << ',' << fmt_shortest(r.gap) << "\n";
}

struct ValueResult {
    double value = 0.0;      // best lower bound
    double upper = 0.0;      // matching upper bound
    double gap = 0.0;
    double N_used = 0.0;
    bool converged = false;  // gap <= tol within N_max
    std::vector<double> kernel;  // initial kernel per target atom (multi-atom)
};

/// Doubles the truncation level until the duality gap closes. With several
/// target atoms the per-atom lattice values are combined through the exact
/// weak-OT initial layer, on both the primal and the dual side.
inline ValueResult value_search(const ProblemInstance& inst, int steps, double n_max, double tol,
                                double n_start = 1.0) {
    ValueResult out;
    const auto& atoms = inst.diffusion.y0_atoms;
    double n = std::min(n_start, n_max);
    while (true) {
        double lower, upper;
        std::vector<double> kernel;
        if (atoms.size() == 1) {
            Lattice lat = build_lattice(inst, steps);
            lower = solve_primal(inst, lat, n).value;
            upper = solve_dual(inst, lat, n).value;
        } else {
            std::vector<InitialAtom> lo_atoms, up_atoms;
            for (const auto& a : atoms) {
                Lattice lat = build_lattice(inst, steps, a.y.front(), true);
                lo_atoms.push_back({a.w, solve_primal(inst, lat, n).value_at});
                auto dres = solve_dual(inst, lat, n);
                up_atoms.push_back({a.w, dual_value_function(inst, dres, lat)});
            }
            auto lo = solve_initial(lo_atoms, inst.chain.p0[0]);
            auto up = solve_initial(up_atoms, inst.chain.p0[0]);
            lower = lo.value;
            upper = up.value;
            kernel = lo.kernel;
        }
        out.value = lower;
        out.upper = upper;
        out.gap = upper - lower;
        out.N_used = n;
        out.kernel = kernel;
        if (out.gap <= tol) {
            out.converged = true;
            return out;
        }
        if (n >= n_max) return out;  // best bracket, caller sees converged=false
        n = std::min(2.0 * n, n_max);
    }
}

}  // namespace cot
