// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cot/chain.hpp"
#include "cot/errors.hpp"
#include "cot/instance.hpp"

namespace cot {

/// Philox4x32-10 counter-based generator: stateless, one stream per path,
/// so parallel simulation is deterministic for a fixed seed.
struct Philox {
    std::uint32_t key0, key1;

    explicit Philox(std::uint64_t seed)
        : key0(static_cast<std::uint32_t>(seed)), key1(static_cast<std::uint32_t>(seed >> 32)) {}

    struct Block {
        std::uint32_t v[4];
    };

    Block operator()(std::uint32_t c0, std::uint32_t c1, std::uint32_t c2,
                     std::uint32_t c3) const {
        std::uint32_t k0 = key0, k1 = key1;
        for (int round = 0; round < 10; ++round) {
            std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c0;
            std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c2;
            std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            std::uint32_t n0 = hi1 ^ c1 ^ k0;
            std::uint32_t n1 = lo1;
            std::uint32_t n2 = hi0 ^ c3 ^ k1;
            std::uint32_t n3 = lo0;
            c0 = n0;
            c1 = n1;
            c2 = n2;
            c3 = n3;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        return {{c0, c1, c2, c3}};
    }

    static double to_unit(std::uint32_t x) { return (x + 0.5) * 0x1p-32; }

    /// Two standard normals from one block (Box-Muller).
    void normals(std::uint32_t c0, std::uint32_t c1, std::uint32_t c2, std::uint32_t c3,
                 double& z0, double& z1) const {
        Block b = (*this)(c0, c1, c2, c3);
        double u1 = to_unit(b.v[0]);
        double u2 = to_unit(b.v[1]);
        double rad = std::sqrt(-2.0 * std::log(u1));
        z0 = rad * std::cos(6.283185307179586477 * u2);
        z1 = rad * std::sin(6.283185307179586477 * u2);
    }
};

/// Feedback control: fills h with one R^d vector per state, evaluated at
/// (t, y, p). The zero-conditional-mean constraint is enforced afterwards by
/// projection, so the control only needs to be bounded.
using FeedbackControl = std::function<void(double t, const std::vector<double>& y,
                                           const std::vector<double>& p,
                                           std::vector<std::vector<double>>& h)>;

struct SimOptions {
    int n_paths = 0;
    int n_steps = 0;
    std::uint64_t seed = 0;
    int n_checkpoints = 21;
    std::string control_label;
};

/// Thinned trajectories of the controlled filter system plus per-path cost
/// accumulators. Full storage at 1e5 x 1e3 scale would be gigabytes, so the
/// batch stores checkpoints; running-cost quadrature is accumulated inline.
struct FilterPathBatch {
    int n_paths = 0, K = 0, dim = 0, n_steps = 0;
    double dt = 0.0, horizon = 0.0;
    std::uint64_t seed = 0;
    std::string control_label;
    std::vector<double> check_times;  // C entries, first 0, last T
    std::vector<double> p_checks;     // [path][check][K]
    std::vector<double> y_checks;     // [path][check][dim]
    std::vector<double> run_cost;     // per path, left-endpoint quadrature of f
    std::vector<double> clamped;      // per path, total clamped simplex mass
    double max_zero_mean_residual = 0.0;

    std::size_t pidx(int path, int chk, int i) const {
        return (static_cast<std::size_t>(path) * check_times.size() +
                static_cast<std::size_t>(chk)) *
                   static_cast<std::size_t>(K) +
               static_cast<std::size_t>(i);
    }
    std::size_t yidx(int path, int chk, int i) const {
        return (static_cast<std::size_t>(path) * check_times.size() +
                static_cast<std::size_t>(chk)) *
                   static_cast<std::size_t>(dim) +
               static_cast<std::size_t>(i);
    }
};

/// Euler-Maruyama for the innovation-form filter dynamics: Y moves under its
/// own law, p moves with the Kushner drift p Lambda plus the controlled
/// martingale term, and the same Gaussian drives both. Coordinates pushed
/// out of the simplex are clamped and renormalized (the clamped mass is a
/// discretization diagnostic), and the last coordinate is defined as the
/// complement so the masses sum to one exactly.
inline FilterPathBatch simulate(const ProblemInstance& inst, const FeedbackControl& control,
                                const SimOptions& opts) {
    if (opts.n_paths <= 0) throw input_error("simulate: n_paths must be positive");
    if (opts.n_steps <= 0) throw input_error("simulate: n_steps must be positive");
    const int K = inst.chain.K;
    const int d = inst.diffusion.dim;
    const double T = inst.diffusion.horizon;
    const double dt = T / opts.n_steps;
    const double sdt = std::sqrt(dt);

    FilterPathBatch batch;
    batch.n_paths = opts.n_paths;
    batch.K = K;
    batch.dim = d;
    batch.n_steps = opts.n_steps;
    batch.dt = dt;
    batch.horizon = T;
    batch.seed = opts.seed;
    batch.control_label = opts.control_label;
    int nchk = std::min(opts.n_checkpoints, opts.n_steps + 1);
    nchk = std::max(nchk, 2);
    std::vector<int> chk_steps(static_cast<std::size_t>(nchk));
    for (int c = 0; c < nchk; ++c)
        chk_steps[static_cast<std::size_t>(c)] =
            static_cast<int>(std::llround(static_cast<double>(c) * opts.n_steps / (nchk - 1)));
    for (int c : chk_steps) batch.check_times.push_back(c * dt);
    batch.p_checks.assign(static_cast<std::size_t>(opts.n_paths) * static_cast<std::size_t>(nchk) *
                              static_cast<std::size_t>(K),
                          0.0);
    batch.y_checks.assign(static_cast<std::size_t>(opts.n_paths) * static_cast<std::size_t>(nchk) *
                              static_cast<std::size_t>(d),
                          0.0);
    batch.run_cost.assign(static_cast<std::size_t>(opts.n_paths), 0.0);
    batch.clamped.assign(static_cast<std::size_t>(opts.n_paths), 0.0);

    Philox rng(opts.seed);
    const auto& atoms = inst.diffusion.y0_atoms;
    const int blocks_per_step = (d + 1) / 2;

    std::vector<double> y(static_cast<std::size_t>(d)), p(static_cast<std::size_t>(K)),
        xi(static_cast<std::size_t>(d));
    std::vector<std::vector<double>> h(static_cast<std::size_t>(K),
                                       std::vector<double>(static_cast<std::size_t>(d)));
    double residual = 0.0;

    for (int path = 0; path < opts.n_paths; ++path) {
        // initial condition: atom sampled from nu_0 (deterministic stream)
        std::size_t atom = 0;
        if (atoms.size() > 1) {
            auto blk = rng(static_cast<std::uint32_t>(path), 0xFFFFFFFFu, 0u, 0u);
            double u = Philox::to_unit(blk.v[0]);
            double acc = 0.0;
            for (std::size_t a = 0; a < atoms.size(); ++a) {
                acc += atoms[a].w;
                if (u <= acc) {
                    atom = a;
                    break;
                }
                atom = a;
            }
        }
        for (int i = 0; i < d; ++i) y[static_cast<std::size_t>(i)] = atoms[atom].y[static_cast<std::size_t>(i)];
        for (int i = 0; i < K; ++i) p[static_cast<std::size_t>(i)] = inst.chain.p0[static_cast<std::size_t>(i)];

        int next_chk = 0;
        for (int step = 0; step <= opts.n_steps; ++step) {
            double t = step * dt;
            if (next_chk < nchk && chk_steps[static_cast<std::size_t>(next_chk)] == step) {
                for (int i = 0; i < K; ++i)
                    batch.p_checks[batch.pidx(path, next_chk, i)] = p[static_cast<std::size_t>(i)];
                for (int i = 0; i < d; ++i)
                    batch.y_checks[batch.yidx(path, next_chk, i)] = y[static_cast<std::size_t>(i)];
                ++next_chk;
            }
            if (step == opts.n_steps) break;

            // left-endpoint running-cost quadrature
            double f = 0.0;
            for (int i = 0; i < K; ++i)
                f += inst.cost.f0(i, y[0]) * p[static_cast<std::size_t>(i)];
            batch.run_cost[static_cast<std::size_t>(path)] += f * dt;

            control(t, y, p, h);
            // zero-conditional-mean projection
            for (int c = 0; c < d; ++c) {
                double mean = 0.0;
                for (int i = 0; i < K; ++i)
                    mean += p[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
                for (int i = 0; i < K; ++i)
                    h[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] -= mean;
                double res = 0.0;
                for (int i = 0; i < K; ++i)
                    res += p[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
                residual = std::max(residual, std::abs(res));
            }

            for (int b = 0; b < blocks_per_step; ++b) {
                double z0, z1;
                rng.normals(static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(step),
                            static_cast<std::uint32_t>(b), 0u, z0, z1);
                xi[static_cast<std::size_t>(2 * b)] = z0;
                if (2 * b + 1 < d) xi[static_cast<std::size_t>(2 * b + 1)] = z1;
            }

            double sigma = inst.diffusion.vol(t, y[0]);
            double bdrift = inst.diffusion.drift(t, y[0]);
            // p-step first (it reads the pre-step p), same Gaussian as Y
            auto pl = row_times(p, inst.chain.lambda);
            double clamp_acc = 0.0;
            for (int i = 0; i < K; ++i) {
                double noise = 0.0;
                for (int c = 0; c < d; ++c)
                    noise += h[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] *
                             xi[static_cast<std::size_t>(c)];
                double np = p[static_cast<std::size_t>(i)] + pl[static_cast<std::size_t>(i)] * dt +
                            p[static_cast<std::size_t>(i)] * noise * sdt / sigma;
                p[static_cast<std::size_t>(i)] = np;
            }
            for (int i = 0; i < K; ++i) {
                if (p[static_cast<std::size_t>(i)] < 0.0) {
                    clamp_acc -= p[static_cast<std::size_t>(i)];
                    p[static_cast<std::size_t>(i)] = 0.0;
                } else if (p[static_cast<std::size_t>(i)] > 1.0) {
                    clamp_acc += p[static_cast<std::size_t>(i)] - 1.0;
                    p[static_cast<std::size_t>(i)] = 1.0;
                }
            }
            double mass = 0.0;
            for (int i = 0; i < K; ++i) mass += p[static_cast<std::size_t>(i)];
            if (mass <= 0.0) throw numerical_error("simulate: filter mass vanished at step " +
                                                   std::to_string(step));
            for (int i = 0; i < K; ++i) p[static_cast<std::size_t>(i)] /= mass;
            double head = 0.0;
            for (int i = 0; i < K - 1; ++i) head += p[static_cast<std::size_t>(i)];
            p[static_cast<std::size_t>(K) - 1] = 1.0 - head;  // exact unit sum
            batch.clamped[static_cast<std::size_t>(path)] += clamp_acc;

            for (int c = 0; c < d; ++c)
                y[static_cast<std::size_t>(c)] +=
                    bdrift * dt + sigma * sdt * xi[static_cast<std::size_t>(c)];
            for (double v : y)
                if (!std::isfinite(v))
                    throw numerical_error("simulate: non-finite state at step " +
                                          std::to_string(step));
        }
    }
    batch.max_zero_mean_residual = residual;
    return batch;
}

struct MartingaleReport {
    double max_abs_deviation = 0.0;
    double max_se_multiple = 0.0;
    bool degenerate = false;  // too few paths for a standard error
    std::vector<double> times;
    std::vector<double> deviations;  // max over coordinates at each time
    std::vector<double> devs;        // per (time, coordinate) entry
    std::vector<double> ses;

    /// Largest violation of the band |dev| <= k_se * SE + bias; <= 0 passes.
    double band_excess(double k_se, double bias) const {
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < devs.size(); ++i)
            worst = std::max(worst, devs[i] - k_se * ses[i] - bias);
        return worst;
    }
};

/// Checks that p_s P(T-s) has constant mean p0 P(T) across the checkpoint
/// grid, coordinate by coordinate, in standard-error units.
inline MartingaleReport martingale_check(const FilterPathBatch& batch, const ChainSpec& chain) {
    if (batch.n_paths <= 0) throw input_error("martingale_check: empty batch");
    MartingaleReport rep;
    rep.degenerate = batch.n_paths < 2;
    auto target = row_times(chain.p0, expm(chain, batch.horizon));
    const int K = batch.K;
    const std::size_t nchk = batch.check_times.size();
    for (std::size_t c = 0; c < nchk; ++c) {
        double s = batch.check_times[c];
        Matrix prop = expm(chain, batch.horizon - s);
        std::vector<double> mean(static_cast<std::size_t>(K), 0.0),
            m2(static_cast<std::size_t>(K), 0.0);
        std::vector<double> tilted(static_cast<std::size_t>(K));
        for (int path = 0; path < batch.n_paths; ++path) {
            for (int i = 0; i < K; ++i) {
                double acc = 0.0;
                for (int j = 0; j < K; ++j)
                    acc += batch.p_checks[batch.pidx(path, static_cast<int>(c), j)] *
                           prop(static_cast<std::size_t>(j), static_cast<std::size_t>(i));
                tilted[static_cast<std::size_t>(i)] = acc;
            }
            for (int i = 0; i < K; ++i) {
                double v = tilted[static_cast<std::size_t>(i)];
                mean[static_cast<std::size_t>(i)] += v;
                m2[static_cast<std::size_t>(i)] += v * v;
            }
        }
        double worst = 0.0;
        for (int i = 0; i < K; ++i) {
            double mu = mean[static_cast<std::size_t>(i)] / batch.n_paths;
            double var = std::max(0.0, m2[static_cast<std::size_t>(i)] / batch.n_paths - mu * mu);
            double se = rep.degenerate
                            ? std::numeric_limits<double>::infinity()
                            : std::sqrt(var / (batch.n_paths - 1));
            double dev = std::abs(mu - target[static_cast<std::size_t>(i)]);
            worst = std::max(worst, dev);
            rep.max_abs_deviation = std::max(rep.max_abs_deviation, dev);
            rep.devs.push_back(dev);
            rep.ses.push_back(se);
            if (!rep.degenerate && se > 0.0)
                rep.max_se_multiple = std::max(rep.max_se_multiple, dev / se);
        }
        rep.times.push_back(s);
        rep.deviations.push_back(worst);
    }
    return rep;
}

/// Sample mean and standard error of the transport cost functional: stored
/// running-cost quadrature plus the terminal lift evaluated from the final
/// checkpoint.
inline std::pair<double, double> estimate_cost(const FilterPathBatch& batch,
                                               const CostSpec& cost) {
    if (batch.n_paths <= 0) throw input_error("estimate_cost: empty batch");
    const int last = static_cast<int>(batch.check_times.size()) - 1;
    double sum = 0.0, sumsq = 0.0;
    std::vector<double> p(static_cast<std::size_t>(batch.K));
    for (int path = 0; path < batch.n_paths; ++path) {
        for (int i = 0; i < batch.K; ++i)
            p[static_cast<std::size_t>(i)] = batch.p_checks[batch.pidx(path, last, i)];
        double y = batch.y_checks[batch.yidx(path, last, 0)];
        double g = 0.0;
        for (int i = 0; i < batch.K; ++i)
            g += cost.g0(i, y) * p[static_cast<std::size_t>(i)];
        double total = batch.run_cost[static_cast<std::size_t>(path)] + g;
        sum += total;
        sumsq += total * total;
    }
    double mean = sum / batch.n_paths;
    double var = std::max(0.0, sumsq / batch.n_paths - mean * mean);
    double se = batch.n_paths > 1 ? std::sqrt(var / (batch.n_paths - 1)) : 0.0;
    return {mean, se};
}

/// Average clamped simplex mass per path (discretization diagnostic).
inline double mean_clamped_mass(const FilterPathBatch& batch) {
    double acc = 0.0;
    for (double v : batch.clamped) acc += v;
    return acc / std::max(1, batch.n_paths);
}

}  // namespace cot
