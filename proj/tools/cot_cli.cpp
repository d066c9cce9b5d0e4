// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: sandwich tables, value search, single solves,
// filter simulation, PDE solvers, closed forms, and the initial layer.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cot/closedform.hpp"
#include "cot/dual_dp.hpp"
#include "cot/errors.hpp"
#include "cot/filtersim.hpp"
#include "cot/hjb_fd.hpp"
#include "cot/initial_coupling.hpp"
#include "cot/instance.hpp"
#include "cot/lattice.hpp"
#include "cot/primal_dp.hpp"
#include "cot/report.hpp"

namespace {

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    return out;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream f(std::filesystem::path(dir) / name);
    if (!f) throw cot::input_error("cannot open output file " + name + " in " + dir);
    return f;
}

cot::FeedbackControl make_control(const std::string& spec, const cot::ProblemInstance& inst) {
    if (spec == "zero" || spec.empty())
        return [](double, const std::vector<double>&, const std::vector<double>&,
                  std::vector<std::vector<double>>& h) {
            for (auto& hi : h)
                for (auto& v : hi) v = 0.0;
        };
    if (spec.rfind("bang:", 0) == 0) {
        double c = std::stod(spec.substr(5));
        return [c](double, const std::vector<double>&, const std::vector<double>&,
                   std::vector<std::vector<double>>& h) {
            h[0][0] = c;
            for (std::size_t i = 1; i < h.size(); ++i) h[i][0] = -c;
        };
    }
    if (spec.rfind("policy:", 0) == 0) {
        double n = std::stod(spec.substr(7));
        auto lat = cot::build_lattice(inst, 12);
        cot::PrimalOptions opts;
        opts.keep_tables = true;
        auto res = std::make_shared<cot::PrimalResult>(cot::solve_primal(inst, lat, n, opts));
        double sdt = std::sqrt(lat.dt);
        return [res, lat, sdt](double t, const std::vector<double>& y,
                               const std::vector<double>& p, std::vector<std::vector<double>>& h) {
            int step = std::min(static_cast<int>(t / lat.dt), lat.M - 1);
            double pos = (y[0] - lat.y0) / sdt + step;
            int j = std::min(std::max(0, static_cast<int>(std::lround(pos / 2.0))), step);
            double d = cot::primal_delta_at(*res, step, j, std::min(1.0, std::max(0.0, p[0])));
            double z = d / sdt;
            h[0][0] = p[0] > 1e-9 ? z / p[0] : 0.0;
            h[1][0] = p[1] > 1e-9 ? -z / p[1] : 0.0;
        };
    }
    throw cot::input_error("unknown control spec '" + spec + "' (zero | bang:C | policy:N)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"causal transport solvers: sandwich bounds, filters, PDE checks"};
    app.require_subcommand(1);

    std::string config, out_dir("."), ns_csv("0,0.25,0.5,1,2,5,10"), control("zero");
    std::string mode("twosided");
    int steps = 12, threads = 1, paths = 10000, sim_steps = 1000, n_y = 161, n_p = 81, n_t = 0,
        n_z = 801;
    std::uint64_t seed = 1;
    double n_level = 1.0, n_max = 64.0, tol = 1e-5, y_lo = 0.0, y_hi = 0.0, z_lo = -8.0,
           z_hi = 8.0, rate_a = 0.5, rate_b = 0.5, horizon = 1.0, tau = 1.0, ypt = 0.0;
    std::string xs_csv("-1,1"), p_csv("0.5,0.5");
    bool dump = false;

    auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
        if (needs_config)
            cmd->add_option("--config", config, "instance config (JSON)")->required();
        cmd->add_option("--out", out_dir, "output directory for CSV files");
        cmd->add_option("--seed", seed, "random seed");
        cmd->add_option("--threads", threads, "worker threads");
    };

    auto* c_sand = app.add_subcommand("sandwich", "lower/upper bound table over N");
    add_common(c_sand);
    c_sand->add_option("--steps", steps, "lattice steps M");
    c_sand->add_option("--Ns", ns_csv, "comma-separated truncation levels");

    auto* c_val = app.add_subcommand("value", "close the duality gap by doubling N");
    add_common(c_val);
    c_val->add_option("--steps", steps, "lattice steps M");
    c_val->add_option("--nmax", n_max, "largest truncation level");
    c_val->add_option("--tol", tol, "target duality gap");

    auto* c_primal = app.add_subcommand("primal", "lower bound V^{N,M}");
    add_common(c_primal);
    c_primal->add_option("--steps", steps, "lattice steps M");
    c_primal->add_option("--N", n_level, "truncation level");
    c_primal->add_flag("--dump", dump, "write the root value function CSV");

    auto* c_dual = app.add_subcommand("dual", "upper bound v^{N,M}");
    add_common(c_dual);
    c_dual->add_option("--steps", steps, "lattice steps M");
    c_dual->add_option("--N", n_level, "truncation level");
    c_dual->add_flag("--dump", dump, "write the reduced dual function CSV");

    auto* c_sim = app.add_subcommand("simulate", "Monte Carlo of the controlled filter");
    add_common(c_sim);
    c_sim->add_option("--paths", paths, "number of paths")->check(CLI::PositiveNumber);
    c_sim->add_option("--sim-steps", sim_steps, "Euler steps");
    c_sim->add_option("--control", control, "zero | bang:C | policy:N");
    c_sim->add_flag("--dump", dump, "write checkpoint trajectories CSV");

    auto* c_hjb = app.add_subcommand("hjb", "truncated state-constrained HJB (FD)");
    add_common(c_hjb);
    c_hjb->add_option("--N", n_level, "truncation level");
    c_hjb->add_option("--steps", steps, "lattice steps for the reference value");
    c_hjb->add_option("--nt", n_t, "time steps (floor; CFL may refine)");
    c_hjb->add_option("--ny", n_y, "y grid points");
    c_hjb->add_option("--np", n_p, "p grid points");
    c_hjb->add_option("--ylo", y_lo, "left y boundary");
    c_hjb->add_option("--yhi", y_hi, "right y boundary");
    c_hjb->add_flag("--dump", dump, "write the t=0 slice CSV");

    auto* c_fol = app.add_subcommand("follower", "gradient-constrained follower (FD)");
    add_common(c_fol, false);
    c_fol->add_option("--mode", mode, "onesided | twosided");
    c_fol->add_option("--a", rate_a, "rate a");
    c_fol->add_option("--b", rate_b, "rate b (twosided)");
    c_fol->add_option("--T", horizon, "horizon");
    c_fol->add_option("--nz", n_z, "z grid points");
    c_fol->add_option("--zlo", z_lo, "left z boundary");
    c_fol->add_option("--zhi", z_hi, "right z boundary");
    c_fol->add_option("--y", ypt, "evaluation point y");
    c_fol->add_option("--p", p_csv, "evaluation filter p (first coordinate)");
    c_fol->add_flag("--dump", dump, "write (z, w) slice and boundary trace CSV");

    auto* c_cf = app.add_subcommand("closedform", "constant-chain closed forms");
    add_common(c_cf, false);
    c_cf->add_option("--xs", xs_csv, "state values, increasing");
    c_cf->add_option("--p", p_csv, "simplex point");
    c_cf->add_option("--tau", tau, "remaining time");
    c_cf->add_option("--y", ypt, "current diffusion value");

    auto* c_init = app.add_subcommand("initial", "weak-OT initial layer for multi-atom nu0");
    add_common(c_init);
    c_init->add_option("--steps", steps, "lattice steps M");
    c_init->add_option("--N", n_level, "truncation level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*c_sand) {
            auto inst = cot::load_instance(config);
            auto levels = parse_list(ns_csv);
            if (levels.empty()) {
                std::cerr << "usage: sandwich needs a nonempty --Ns list\n";
                return 2;
            }
            auto rep = cot::make_sandwich(inst, steps, levels, threads);
            cot::print_sandwich(std::cout, rep);
            auto f = open_out(out_dir, "sandwich.csv");
            cot::write_sandwich_csv(f, rep);
        } else if (*c_val) {
            auto inst = cot::load_instance(config);
            auto res = cot::value_search(inst, steps, n_max, tol);
            std::cout << "# config " << inst.fingerprint << "\n";
            std::cout << "value " << cot::fmt_fixed6(res.value) << "  gap "
                      << cot::fmt_fixed6(res.gap) << "  N " << res.N_used
                      << (res.converged ? "" : "  [warning: tolerance not reached]") << "\n";
            for (std::size_t i = 0; i < res.kernel.size(); ++i)
                std::cout << "atom " << i << " kernel " << cot::fmt_shortest(res.kernel[i])
                          << "\n";
            if (!res.converged) return 4;
        } else if (*c_primal) {
            auto inst = cot::load_instance(config);
            auto lat = cot::build_lattice(inst, steps);
            auto res = cot::solve_primal(inst, lat, n_level);
            std::cout << "# config " << inst.fingerprint << "\n";
            std::cout << "V^{N,M} " << cot::fmt_fixed6(res.value) << "  (N=" << n_level
                      << ", M=" << steps << ")\n";
            if (dump) {
                auto f = open_out(out_dir, "primal_root.csv");
                f << "# config " << inst.fingerprint << "\nq,V\n";
                for (std::size_t i = 0; i < res.value_at.size(); ++i)
                    f << cot::fmt_shortest(res.value_at.xs()[i]) << ','
                      << cot::fmt_shortest(res.value_at.ys()[i]) << "\n";
            }
        } else if (*c_dual) {
            auto inst = cot::load_instance(config);
            auto lat = cot::build_lattice(inst, steps);
            auto res = cot::solve_dual(inst, lat, n_level);
            std::cout << "# config " << inst.fingerprint << "\n";
            std::cout << "v^{N,M} " << cot::fmt_fixed6(res.value) << "  (N=" << n_level
                      << ", M=" << steps << ")  lambda=("
                      << cot::fmt_shortest(res.static_multiplier[0]) << ","
                      << cot::fmt_shortest(res.static_multiplier[1]) << ")\n";
            if (dump) {
                auto f = open_out(out_dir, "dual_root.csv");
                f << "# config " << inst.fingerprint << "\nd,W\n";
                for (std::size_t i = 0; i < res.root_W.size(); ++i)
                    f << cot::fmt_shortest(res.root_W.xs()[i]) << ','
                      << cot::fmt_shortest(res.root_W.ys()[i]) << "\n";
            }
        } else if (*c_sim) {
            auto inst = cot::load_instance(config);
            auto ctrl = make_control(control, inst);
            cot::SimOptions opts;
            opts.n_paths = paths;
            opts.n_steps = sim_steps;
            opts.seed = seed;
            opts.control_label = control;
            if (dump) opts.n_checkpoints = std::min(sim_steps + 1, 201);
            auto batch = cot::simulate(inst, ctrl, opts);
            auto rep = cot::martingale_check(batch, inst.chain);
            auto [mean, se] = cot::estimate_cost(batch, inst.cost);
            std::cout << "# config " << inst.fingerprint << "  control=" << control
                      << "  seed=" << seed << "\n";
            std::cout << "cost " << cot::fmt_fixed6(mean) << " +- " << cot::fmt_shortest(se)
                      << " (1 se)\n";
            std::cout << "martingale max|dev| " << cot::fmt_shortest(rep.max_abs_deviation)
                      << "  max dev/se " << cot::fmt_shortest(rep.max_se_multiple) << "\n";
            std::cout << "clamped mass per path "
                      << cot::fmt_shortest(cot::mean_clamped_mass(batch))
                      << "  zero-mean residual "
                      << cot::fmt_shortest(batch.max_zero_mean_residual) << "\n";
            if (dump) {
                auto f = open_out(out_dir, "paths.csv");
                f << "# config " << inst.fingerprint << "  seed=" << seed << "\n";
                f << "path_id,k,t";
                for (int i = 0; i < batch.dim; ++i) f << ",y" << i + 1;
                for (int i = 0; i < batch.K; ++i) f << ",p" << i + 1;
                f << "\n";
                int nc = static_cast<int>(batch.check_times.size());
                for (int path = 0; path < batch.n_paths; ++path)
                    for (int c = 0; c < nc; ++c) {
                        f << path << ',' << c << ','
                          << cot::fmt_shortest(batch.check_times[static_cast<std::size_t>(c)]);
                        for (int i = 0; i < batch.dim; ++i)
                            f << ',' << cot::fmt_shortest(batch.y_checks[batch.yidx(path, c, i)]);
                        for (int i = 0; i < batch.K; ++i)
                            f << ',' << cot::fmt_shortest(batch.p_checks[batch.pidx(path, c, i)]);
                        f << "\n";
                    }
            }
        } else if (*c_hjb) {
            auto inst = cot::load_instance(config);
            cot::HjbGridSpec spec;
            spec.n_t = n_t;
            spec.n_y = n_y;
            spec.n_p = n_p;
            spec.y_lo = y_lo;
            spec.y_hi = y_hi;
            auto res = cot::solve_truncated_hjb(inst, n_level, spec);
            double y0 = inst.diffusion.y0_atoms.front().y.front();
            double fd = res.value_at(y0, inst.chain.p0[0]);
            auto lat = cot::build_lattice(inst, steps);
            double lattice = cot::solve_primal(inst, lat, n_level).value;
            std::cout << "# config " << inst.fingerprint << "\n";
            std::cout << "V_fd(0," << y0 << "," << inst.chain.p0[0] << ") "
                      << cot::fmt_fixed6(fd) << "  lattice " << cot::fmt_fixed6(lattice)
                      << "  gap " << cot::fmt_shortest(fd - lattice) << "\n";
            std::cout << "time steps " << res.n_t_used << " (cfl dt "
                      << cot::fmt_shortest(res.cfl_dt) << ")\n";
            if (dump) {
                auto f = open_out(out_dir, "hjb_t0.csv");
                f << "# config " << inst.fingerprint << "\nt,y,p,V\n";
                for (std::size_t i = 0; i < res.y_grid.size(); ++i)
                    for (std::size_t j = 0; j < res.p_grid.size(); ++j)
                        f << "0," << cot::fmt_shortest(res.y_grid[i]) << ','
                          << cot::fmt_shortest(res.p_grid[j]) << ','
                          << cot::fmt_shortest(res.v0[i * res.p_grid.size() + j]) << "\n";
            }
        } else if (*c_fol) {
            cot::FollowerGridSpec spec;
            spec.n_t = n_t;
            spec.n_z = n_z;
            spec.z_lo = z_lo;
            spec.z_hi = z_hi;
            auto pvals = parse_list(p_csv);
            double p = pvals.empty() ? 0.5 : pvals.front();
            cot::FollowerResult res;
            double value;
            if (mode == "onesided") {
                res = cot::solve_follower_onesided(rate_a, horizon, spec);
                value = cot::value_from_follower_onesided(res, rate_a, horizon, ypt, p);
            } else if (mode == "twosided") {
                res = cot::solve_follower_twosided(rate_a, rate_b, horizon, spec);
                value = cot::value_from_follower_twosided(res, rate_a, rate_b, horizon, ypt, p);
            } else {
                throw cot::input_error("follower: mode must be onesided or twosided");
            }
            std::cout << "V(0," << ypt << "," << p << ") " << cot::fmt_fixed6(value)
                      << "  slope violation " << cot::fmt_shortest(res.max_slope_violation)
                      << "\n";
            if (dump) {
                auto f = open_out(out_dir, "follower_w.csv");
                f << "t,z,w\n";
                for (std::size_t i = 0; i < res.z_grid.size(); ++i)
                    f << "0," << cot::fmt_shortest(res.z_grid[i]) << ','
                      << cot::fmt_shortest(res.w0[i]) << "\n";
                if (!res.b_times.empty()) {
                    auto fb = open_out(out_dir, "follower_boundary.csv");
                    fb << "t,b\n";
                    for (std::size_t i = 0; i < res.b_times.size(); ++i)
                        fb << cot::fmt_shortest(res.b_times[i]) << ','
                           << cot::fmt_shortest(res.b_values[i]) << "\n";
                }
            }
        } else if (*c_cf) {
            auto xs = parse_list(xs_csv);
            auto p = parse_list(p_csv);
            cot::ConstantChainExample ex{xs, p, tau, ypt};
            std::cout << "L(p) " << cot::fmt_fixed6(cot::max_cov_L(ex)) << "\n";
            std::cout << "v_term " << cot::fmt_fixed6(cot::v_term(ex)) << "\n";
            std::cout << "v_run " << cot::fmt_fixed6(cot::v_run(ex)) << "\n";
        } else if (*c_init) {
            auto inst = cot::load_instance(config);
            if (inst.diffusion.y0_atoms.size() < 2)
                throw cot::input_error("initial: config must have several y0 atoms");
            std::vector<cot::InitialAtom> atoms;
            for (const auto& a : inst.diffusion.y0_atoms) {
                auto lat = cot::build_lattice(inst, steps, a.y.front(), true);
                atoms.push_back({a.w, cot::solve_primal(inst, lat, n_level).value_at});
            }
            auto sol = cot::solve_initial(atoms, inst.chain.p0[0]);
            std::cout << "# config " << inst.fingerprint << "\n";
            std::cout << "value " << cot::fmt_fixed6(sol.value) << "\n";
            for (std::size_t i = 0; i < sol.kernel.size(); ++i)
                std::cout << "atom " << i << " y="
                          << cot::fmt_shortest(inst.diffusion.y0_atoms[i].y.front()) << " r="
                          << cot::fmt_shortest(sol.kernel[i]) << "\n";
        }
    } catch (const cot::input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const cot::structure_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const cot::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const cot::unsupported_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const cot::numerical_error& e) {
        std::cerr << "numerical refusal: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 5;
    }
    return 0;
}
