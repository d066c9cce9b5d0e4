// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cot/errors.hpp"

namespace cot {

enum class Curvature { convex, concave };

/// Piecewise-linear convex or concave function of one real variable.
///
/// Breakpoints are strictly increasing; the domain is [xs.front(), xs.back()]
/// extended to -inf/+inf where the unbounded flags are set, in which case the
/// function continues linearly with the stored boundary slopes. Values are
/// immutable after construction and all operations are pure.
class PwlFn {
public:
    PwlFn() = default;

    static PwlFn from_points(Curvature kind, std::vector<double> xs, std::vector<double> ys) {
        PwlFn f;
        f.kind_ = kind;
        f.xs_ = std::move(xs);
        f.ys_ = std::move(ys);
        f.finish();
        return f;
    }

    static PwlFn with_extensions(Curvature kind, std::vector<double> xs, std::vector<double> ys,
                                 bool unb_left, double slope_left, bool unb_right,
                                 double slope_right) {
        PwlFn f;
        f.kind_ = kind;
        f.xs_ = std::move(xs);
        f.ys_ = std::move(ys);
        f.unb_left_ = unb_left;
        f.slope_left_ = slope_left;
        f.unb_right_ = unb_right;
        f.slope_right_ = slope_right;
        f.finish();
        return f;
    }

    /// Affine function on a closed interval (or the whole line).
    static PwlFn affine(Curvature kind, double slope, double intercept, double lo, double hi) {
        bool ul = std::isinf(lo), ur = std::isinf(hi);
        std::vector<double> xs, ys;
        if (ul && ur) {
            xs = {0.0};
            ys = {intercept};
        } else if (ul) {
            xs = {hi};
            ys = {slope * hi + intercept};
        } else if (ur) {
            xs = {lo};
            ys = {slope * lo + intercept};
        } else {
            xs = {lo, hi};
            ys = {slope * lo + intercept, slope * hi + intercept};
        }
        return with_extensions(kind, std::move(xs), std::move(ys), ul, slope, ur, slope);
    }

    Curvature kind() const { return kind_; }
    const std::vector<double>& xs() const { return xs_; }
    const std::vector<double>& ys() const { return ys_; }
    std::size_t size() const { return xs_.size(); }
    bool unbounded_left() const { return unb_left_; }
    bool unbounded_right() const { return unb_right_; }
    double slope_left() const { return slope_left_; }
    double slope_right() const { return slope_right_; }
    double xmin() const { return unb_left_ ? -std::numeric_limits<double>::infinity() : xs_.front(); }
    double xmax() const { return unb_right_ ? std::numeric_limits<double>::infinity() : xs_.back(); }

    bool contains(double x) const { return x >= xmin() && x <= xmax(); }

    double operator()(double x) const {
        if (!contains(x)) {
            // snap floating-point dust at the domain ends
            double tol = 1e-11 * std::max({1.0, std::abs(xs_.front()), std::abs(xs_.back())});
            if (!unb_left_ && x < xs_.front() && x > xs_.front() - tol)
                x = xs_.front();
            else if (!unb_right_ && x > xs_.back() && x < xs_.back() + tol)
                x = xs_.back();
            else
                throw domain_error("pwl eval: x outside domain");
        }
        if (x <= xs_.front()) return ys_.front() + slope_left_ * (x - xs_.front());
        if (x >= xs_.back()) return ys_.back() + slope_right_ * (x - xs_.back());
        auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
        std::size_t i = static_cast<std::size_t>(it - xs_.begin()) - 1;
        double t = x - xs_[i];
        return ys_[i] + t * segment_slope(i);
    }

    double segment_slope(std::size_t i) const {
        return (ys_[i + 1] - ys_[i]) / (xs_[i + 1] - xs_[i]);
    }

    /// Slope sequence including the boundary extensions where present.
    std::vector<double> all_slopes() const {
        std::vector<double> s;
        if (unb_left_) s.push_back(slope_left_);
        for (std::size_t i = 0; i + 1 < xs_.size(); ++i) s.push_back(segment_slope(i));
        if (unb_right_) s.push_back(slope_right_);
        return s;
    }

    double min_slope() const {
        auto s = all_slopes();
        if (s.empty()) return 0.0;  // single-point domain
        return *std::min_element(s.begin(), s.end());
    }
    double max_slope() const {
        auto s = all_slopes();
        if (s.empty()) return 0.0;
        return *std::max_element(s.begin(), s.end());
    }

private:
    void finish() {
        if (xs_.empty() || xs_.size() != ys_.size())
            throw input_error("pwl: breakpoint/value size mismatch");
        for (std::size_t i = 0; i + 1 < xs_.size(); ++i)
            if (!(xs_[i + 1] > xs_[i])) throw input_error("pwl: breakpoints must increase");
        canonicalize();
        check_shape();
    }

    // Canonical form: breakpoints whose removal moves the function by no
    // more than value-level rounding noise are merged, then exactly (within
    // relative slope tolerance 1e-13) collinear segments are folded. A kink
    // between nearly coincident breakpoints carries no information: its
    // slope is dominated by value rounding.
    void canonicalize() {
        double yscale = 1.0;
        for (double v : ys_) yscale = std::max(yscale, std::abs(v));
        const double dev_tol = 1e-13 * yscale;
        bool removed = true;
        while (removed && xs_.size() >= 3) {
            removed = false;
            std::vector<double> nx{xs_[0]}, ny{ys_[0]};
            std::size_t i = 1;
            while (i + 1 < xs_.size()) {
                double t = (xs_[i] - nx.back()) / (xs_[i + 1] - nx.back());
                double lin = ny.back() + t * (ys_[i + 1] - ny.back());
                double s0 = (ys_[i] - ny.back()) / (xs_[i] - nx.back());
                double s1 = (ys_[i + 1] - ys_[i]) / (xs_[i + 1] - xs_[i]);
                if (std::abs(lin - ys_[i]) <= dev_tol || slopes_equal(s0, s1)) {
                    removed = true;
                    nx.push_back(xs_[i + 1]);
                    ny.push_back(ys_[i + 1]);
                    i += 2;
                } else {
                    nx.push_back(xs_[i]);
                    ny.push_back(ys_[i]);
                    ++i;
                }
            }
            if (i + 1 == xs_.size()) {
                nx.push_back(xs_.back());
                ny.push_back(ys_.back());
            }
            xs_ = std::move(nx);
            ys_ = std::move(ny);
        }
        while (unb_left_ && xs_.size() >= 2 && slopes_equal(slope_left_, segment_slope(0))) {
            xs_.erase(xs_.begin());
            ys_.erase(ys_.begin());
        }
        while (unb_right_ && xs_.size() >= 2 &&
               slopes_equal(slope_right_, segment_slope(xs_.size() - 2))) {
            xs_.pop_back();
            ys_.pop_back();
        }
    }

    // Monotone slope sequence up to value-level noise: an inversion is only
    // an error if the offending breakpoint protrudes from the chord of its
    // neighbours by clearly more than rounding.
    void check_shape() const {
        double yscale = 1.0;
        for (double v : ys_) yscale = std::max(yscale, std::abs(v));
        const double bump_tol = 1e-11 * yscale;
        const double sgn = (kind_ == Curvature::convex) ? 1.0 : -1.0;
        for (std::size_t i = 0; i + 2 < xs_.size(); ++i) {
            double viol = sgn * (segment_slope(i) - segment_slope(i + 1));
            if (viol <= 0.0) continue;
            double d0 = xs_[i + 1] - xs_[i], d1 = xs_[i + 2] - xs_[i + 1];
            double bump = viol * d0 * d1 / (d0 + d1);
            if (bump > bump_tol)
                throw internal_error("pwl: slope sequence violates declared curvature");
        }
        if (xs_.size() >= 2) {
            if (unb_left_) {
                double viol = sgn * (slope_left_ - segment_slope(0));
                if (viol > 0.0 && !slopes_equal(slope_left_, segment_slope(0)))
                    throw internal_error("pwl: left extension violates curvature");
            }
            if (unb_right_) {
                double viol = sgn * (segment_slope(xs_.size() - 2) - slope_right_);
                if (viol > 0.0 && !slopes_equal(slope_right_, segment_slope(xs_.size() - 2)))
                    throw internal_error("pwl: right extension violates curvature");
            }
        }
    }

    static bool slopes_equal(double a, double b) {
        return std::abs(a - b) <= 1e-13 * std::max({1.0, std::abs(a), std::abs(b)});
    }

    Curvature kind_ = Curvature::convex;
    std::vector<double> xs_, ys_;
    bool unb_left_ = false, unb_right_ = false;
    double slope_left_ = 0.0, slope_right_ = 0.0;
};

inline double eval(const PwlFn& f, double x) { return f(x); }

/// Build a canonical PL function from sampled points, absorbing tiny
/// curvature violations (below `noise`) into the envelope of the right kind.
inline PwlFn make_from_samples(Curvature kind, std::vector<std::pair<double, double>> pts,
                               double noise) {
    if (pts.empty()) throw internal_error("make_from_samples: no points");
    std::sort(pts.begin(), pts.end());
    double range = std::max(1.0, std::abs(pts.back().first - pts.front().first));
    // Collapse x-duplicates (keep the best value for the kind).
    std::vector<std::pair<double, double>> uniq;
    for (auto& p : pts) {
        if (!uniq.empty() && p.first - uniq.back().first <= 1e-13 * range) {
            if (kind == Curvature::concave)
                uniq.back().second = std::max(uniq.back().second, p.second);
            else
                uniq.back().second = std::min(uniq.back().second, p.second);
        } else {
            uniq.push_back(p);
        }
    }
    // Monotone-chain envelope with a noise budget.
    const double sign = (kind == Curvature::concave) ? 1.0 : -1.0;
    std::vector<std::pair<double, double>> st;
    for (auto& p : uniq) {
        while (st.size() >= 2) {
            auto& a = st[st.size() - 2];
            auto& b = st[st.size() - 1];
            double s0 = (b.second - a.second) / (b.first - a.first);
            double s1 = (p.second - b.second) / (p.first - b.first);
            double viol = sign * (s1 - s0);  // >0 means curvature violated
            if (viol <= 0.0) break;
            double gap = viol * std::min(b.first - a.first, p.first - b.first);
            if (gap > noise)
                throw internal_error("make_from_samples: curvature violation above noise budget");
            st.pop_back();
        }
        st.push_back(p);
    }
    std::vector<double> xs, ys;
    xs.reserve(st.size());
    ys.reserve(st.size());
    for (auto& p : st) {
        xs.push_back(p.first);
        ys.push_back(p.second);
    }
    return PwlFn::from_points(kind, std::move(xs), std::move(ys));
}

/// x -> f(a x + b), exact breakpoint pullback. Requires a != 0.
inline PwlFn affine_compose(const PwlFn& f, double a, double b) {
    if (a == 0.0) throw input_error("affine_compose: a must be nonzero");
    const auto& xs = f.xs();
    const auto& ys = f.ys();
    std::size_t n = xs.size();
    std::vector<double> nx(n), ny(n);
    if (a > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            nx[i] = (xs[i] - b) / a;
            ny[i] = ys[i];
        }
        return PwlFn::with_extensions(f.kind(), std::move(nx), std::move(ny), f.unbounded_left(),
                                      f.slope_left() * a, f.unbounded_right(), f.slope_right() * a);
    }
    for (std::size_t i = 0; i < n; ++i) {
        nx[i] = (xs[n - 1 - i] - b) / a;
        ny[i] = ys[n - 1 - i];
    }
    return PwlFn::with_extensions(f.kind(), std::move(nx), std::move(ny), f.unbounded_right(),
                                  f.slope_right() * a, f.unbounded_left(), f.slope_left() * a);
}

/// c*f + (slope*x + intercept). c < 0 flips the curvature and must be
/// acknowledged through allow_flip.
inline PwlFn scale_add(const PwlFn& f, double c, double slope, double intercept,
                       bool allow_flip = false) {
    if (c < 0.0 && !allow_flip)
        throw input_error("scale_add: negative scale flips curvature; pass allow_flip");
    Curvature kind = f.kind();
    if (c < 0.0) kind = (kind == Curvature::convex) ? Curvature::concave : Curvature::convex;
    const auto& xs = f.xs();
    const auto& ys = f.ys();
    std::vector<double> ny(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) ny[i] = c * ys[i] + slope * xs[i] + intercept;
    return PwlFn::with_extensions(kind, xs, std::move(ny), f.unbounded_left(),
                                  c * f.slope_left() + slope, f.unbounded_right(),
                                  c * f.slope_right() + slope);
}

inline PwlFn negate(const PwlFn& f) { return scale_add(f, -1.0, 0.0, 0.0, true); }

/// Restrict to [lo, hi] (must intersect the domain).
inline PwlFn restrict_domain(const PwlFn& f, double lo, double hi) {
    lo = std::max(lo, f.xmin());
    hi = std::min(hi, f.xmax());
    if (!(lo <= hi)) throw domain_error("restrict_domain: empty intersection");
    std::vector<double> xs, ys;
    if (lo == hi) {
        xs = {lo};
        ys = {f(lo)};
        return PwlFn::from_points(f.kind(), std::move(xs), std::move(ys));
    }
    xs.push_back(lo);
    ys.push_back(f(lo));
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f.xs()[i] > lo && f.xs()[i] < hi) {
            xs.push_back(f.xs()[i]);
            ys.push_back(f.ys()[i]);
        }
    }
    xs.push_back(hi);
    ys.push_back(f(hi));
    return PwlFn::from_points(f.kind(), std::move(xs), std::move(ys));
}

/// Pointwise sum of two functions of the same kind on the intersected domain.
inline PwlFn sum(const PwlFn& f, const PwlFn& g) {
    if (f.kind() != g.kind()) throw input_error("sum: mixed curvature");
    double lo = std::max(f.xmin(), g.xmin());
    double hi = std::min(f.xmax(), g.xmax());
    if (!(lo <= hi)) throw domain_error("sum: disjoint domains");
    bool ul = std::isinf(lo), ur = std::isinf(hi);
    std::vector<double> grid;
    auto add_pts = [&](const PwlFn& h) {
        for (double x : h.xs())
            if (x >= lo && x <= hi) grid.push_back(x);
    };
    add_pts(f);
    add_pts(g);
    if (!ul) grid.push_back(lo);
    if (!ur) grid.push_back(hi);
    if (grid.empty()) grid.push_back(0.0);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    std::vector<double> ys(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) ys[i] = f(grid[i]) + g(grid[i]);
    return PwlFn::with_extensions(f.kind(), std::move(grid), std::move(ys), ul,
                                  f.slope_left() + g.slope_left(), ur,
                                  f.slope_right() + g.slope_right());
}

/// Fenchel conjugate value f*(s) = sup_x { s x - f(x) } for convex f.
/// Throws when the sup is +inf (s outside the slope range on an unbounded
/// side); s equal to a boundary slope is attained in the limit and is finite.
inline double legendre(const PwlFn& f, double s) {
    if (f.kind() != Curvature::convex) throw input_error("legendre: convex input required");
    const double tol = 1e-12 * (1.0 + std::abs(s));
    if (f.unbounded_right() && s > f.slope_right() + tol)
        throw numerical_error("legendre: unbounded (s above right slope)");
    if (f.unbounded_left() && s < f.slope_left() - tol)
        throw numerical_error("legendre: unbounded (s below left slope)");
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < f.size(); ++i)
        best = std::max(best, s * f.xs()[i] - f.ys()[i]);
    return best;
}

/// Full Fenchel conjugate of a convex PL function, again convex PL.
/// Breakpoints of f* are the slopes of f; slopes of f* are the breakpoints
/// of f; bounded domains and unbounded extensions swap roles.
inline PwlFn conjugate(const PwlFn& f) {
    if (f.kind() != Curvature::convex) throw input_error("conjugate: convex input required");
    const auto& xs = f.xs();
    const auto& ys = f.ys();
    const std::size_t n = xs.size();

    if (n == 1 && !f.unbounded_left() && !f.unbounded_right()) {
        // Indicator-type: f* is the line s -> s*x0 - y0.
        return PwlFn::with_extensions(Curvature::convex, {0.0}, {-ys[0]}, true, xs[0], true,
                                      xs[0]);
    }

    std::vector<double> sx, sy;
    auto push = [&](double s, double x_att) {
        double v = s * x_att - f(x_att);
        if (!sx.empty() && s <= sx.back()) return;  // guard exact duplicates
        sx.push_back(s);
        sy.push_back(v);
    };
    if (f.unbounded_left()) push(f.slope_left(), xs.front());
    for (std::size_t i = 0; i + 1 < n; ++i) push(f.segment_slope(i), xs[i]);
    if (f.unbounded_right()) push(f.slope_right(), xs.back());

    if (sx.empty()) throw internal_error("conjugate: empty slope set");
    // f bounded left => f* extends to -inf with slope x_front, etc.
    return PwlFn::with_extensions(Curvature::convex, std::move(sx), std::move(sy),
                                  !f.unbounded_left(), xs.front(), !f.unbounded_right(),
                                  xs.back());
}

/// Infimal convolution (f [] g)(x) = inf_y f(y) + g(x-y) of convex PL
/// functions, computed exactly through conjugate additivity.
inline PwlFn inf_convolve(const PwlFn& f, const PwlFn& g) {
    if (f.kind() != Curvature::convex || g.kind() != Curvature::convex)
        throw input_error("inf_convolve: convex inputs required");
    PwlFn fs = conjugate(f);
    PwlFn gs = conjugate(g);
    if (std::max(fs.xmin(), gs.xmin()) > std::min(fs.xmax(), gs.xmax()))
        throw input_error("inf_convolve: incompatible domains (result unbounded below)");
    return conjugate(sum(fs, gs));
}

/// Supremal convolution of concave PL functions.
inline PwlFn sup_convolve(const PwlFn& f, const PwlFn& g) {
    if (f.kind() != Curvature::concave || g.kind() != Curvature::concave)
        throw input_error("sup_convolve: concave inputs required");
    return negate(inf_convolve(negate(f), negate(g)));
}

/// Drop breakpoints whose removal perturbs the function by at most eps.
/// Keeps the declared curvature; disabled-by-default in the solvers.
inline PwlFn simplify(const PwlFn& f, double eps) {
    if (eps <= 0.0 || f.size() <= 2) return f;
    std::vector<double> xs = f.xs(), ys = f.ys();
    bool removed = true;
    while (removed && xs.size() > 2) {
        removed = false;
        std::vector<double> nx{xs[0]}, ny{ys[0]};
        std::size_t i = 1;
        while (i + 1 < xs.size()) {
            double t = (xs[i] - nx.back()) / (xs[i + 1] - nx.back());
            double lin = ny.back() + t * (ys[i + 1] - ny.back());
            if (std::abs(lin - ys[i]) <= eps) {
                removed = true;  // skip point i
                nx.push_back(xs[i + 1]);
                ny.push_back(ys[i + 1]);
                i += 2;
            } else {
                nx.push_back(xs[i]);
                ny.push_back(ys[i]);
                ++i;
            }
        }
        if (i + 1 == xs.size()) {
            nx.push_back(xs.back());
            ny.push_back(ys.back());
        }
        xs = std::move(nx);
        ys = std::move(ny);
    }
    return PwlFn::with_extensions(f.kind(), std::move(xs), std::move(ys), f.unbounded_left(),
                                  f.slope_left(), f.unbounded_right(), f.slope_right());
}

namespace detail {

/// Exact pointwise value of the windowed pair max at a single m. The window
/// is [-w, w] with w = min(r, m-lo, hi-m). Concave PL in delta, so the max
/// is attained at a kink or an endpoint.
inline double windowed_point_value(const PwlFn& a, const PwlFn& b, double r, double lo, double hi,
                                   double m) {
    double w = std::min({r, m - lo, hi - m});
    if (w < -1e-12 * std::max(1.0, std::abs(hi - lo)))
        throw numerical_error("windowed_pair_max: empty feasible window (state constraint)");
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
    double best = -std::numeric_limits<double>::infinity();
    for (double d : cands) best = std::max(best, 0.5 * (a(m + d) + b(m - d)));
    return best;
}

inline void collect_crossings(const PwlFn& p, const PwlFn& q, double lo, double hi,
                              std::vector<double>& out) {
    double l = std::max({lo, p.xmin(), q.xmin()});
    double h = std::min({hi, p.xmax(), q.xmax()});
    if (!(l < h)) return;
    std::vector<double> grid{l, h};
    for (double x : p.xs())
        if (x > l && x < h) grid.push_back(x);
    for (double x : q.xs())
        if (x > l && x < h) grid.push_back(x);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        double d0 = p(grid[i]) - q(grid[i]);
        double d1 = p(grid[i + 1]) - q(grid[i + 1]);
        if ((d0 > 0.0 && d1 < 0.0) || (d0 < 0.0 && d1 > 0.0)) {
            double t = d0 / (d0 - d1);
            out.push_back(grid[i] + t * (grid[i + 1] - grid[i]));
        }
    }
}

}  // namespace detail

/// g(m) = max over |delta| <= min(r, dist(m, complement of [lo,hi])) of
///        (A(m+delta) + B(m-delta)) / 2,
/// for concave A, B whose domains cover [lo, hi]. Exact: the result's kinks
/// are located among branch-function kinks and branch crossings, which are
/// enumerated and evaluated with the exact pointwise maximizer.
inline PwlFn windowed_pair_max(const PwlFn& a, const PwlFn& b, double r, double lo, double hi,
                               double out_lo, double out_hi) {
    if (a.kind() != Curvature::concave || b.kind() != Curvature::concave)
        throw input_error("windowed_pair_max: concave inputs required");
    if (r < 0.0) throw input_error("windowed_pair_max: negative window");
    if (!(lo < hi)) throw input_error("windowed_pair_max: empty clip interval");
    if (!(out_lo >= lo && out_hi <= hi && out_lo <= out_hi))
        throw numerical_error("windowed_pair_max: output domain escapes the clip interval");
    if (a.xmin() > lo || a.xmax() < hi || b.xmin() > lo || b.xmax() < hi)
        throw domain_error("windowed_pair_max: domains must cover the clip interval");

    PwlFn ha = scale_add(a, 0.5, 0.0, 0.0);
    PwlFn hb = scale_add(b, 0.5, 0.0, 0.0);

    // r = 0: the window degenerates and g = (A+B)/2.
    if (r == 0.0) return restrict_domain(sum(ha, hb), out_lo, out_hi);

    // Clip-dominant fast path: r never binds, so g is a pure sup-convolution
    // of the clip-restricted halves.
    double mid = 0.5 * (lo + hi);
    double wmax = (mid >= out_lo && mid <= out_hi)
                      ? 0.5 * (hi - lo)
                      : std::max(std::min(out_lo - lo, hi - out_lo),
                                 std::min(out_hi - lo, hi - out_hi));
    if (r >= wmax) {
        PwlFn s = sup_convolve(restrict_domain(ha, lo, hi), restrict_domain(hb, lo, hi));
        return restrict_domain(affine_compose(s, 2.0, 0.0), out_lo, out_hi);
    }

    // Branch functions: the unconstrained sup-convolution plus the six
    // window-boundary branches (delta = +-r, +-(m-lo), +-(hi-m)).
    std::vector<PwlFn> branches;
    branches.push_back(affine_compose(sup_convolve(ha, hb), 2.0, 0.0));
    auto try_branch = [&](auto&& make) {
        try {
            branches.push_back(make());
        } catch (const domain_error&) {
            // branch nowhere feasible; skip
        }
    };
    try_branch([&] { return sum(affine_compose(ha, 1.0, r), affine_compose(hb, 1.0, -r)); });
    try_branch([&] { return sum(affine_compose(ha, 1.0, -r), affine_compose(hb, 1.0, r)); });
    double alo = ha(lo), ahi = ha(hi), blo = hb(lo), bhi = hb(hi);
    try_branch([&] { return scale_add(affine_compose(ha, 2.0, -lo), 1.0, 0.0, blo); });
    try_branch([&] { return scale_add(affine_compose(hb, 2.0, -lo), 1.0, 0.0, alo); });
    try_branch([&] { return scale_add(affine_compose(hb, 2.0, -hi), 1.0, 0.0, ahi); });
    try_branch([&] { return scale_add(affine_compose(ha, 2.0, -hi), 1.0, 0.0, bhi); });

    std::vector<double> cands{out_lo, out_hi};
    for (double m : {lo + r, hi - r, mid})
        if (m > out_lo && m < out_hi) cands.push_back(m);
    for (const PwlFn& br : branches)
        for (double x : br.xs())
            if (x > out_lo && x < out_hi) cands.push_back(x);
    for (std::size_t i = 0; i < branches.size(); ++i)
        for (std::size_t j = i + 1; j < branches.size(); ++j)
            detail::collect_crossings(branches[i], branches[j], out_lo, out_hi, cands);

    std::sort(cands.begin(), cands.end());
    cands.erase(std::remove_if(cands.begin(), cands.end(),
                               [&](double m) { return m < out_lo || m > out_hi; }),
                cands.end());
    double range = std::max(1.0, out_hi - out_lo);
    std::vector<double> ms;
    for (double m : cands)
        if (ms.empty() || m - ms.back() > 1e-13 * range) ms.push_back(m);
    if (ms.back() < out_hi - 1e-13 * range) ms.push_back(out_hi);

    std::vector<std::pair<double, double>> pts;
    pts.reserve(ms.size());
    double scale = 1.0;
    for (double m : ms) {
        double v = detail::windowed_point_value(a, b, r, lo, hi, m);
        scale = std::max(scale, std::abs(v));
        pts.emplace_back(m, v);
    }

    // Midpoint audit: a kink missed by the candidate enumeration would show
    // up as a gap between the interpolant and the exact pointwise value.
    if (pts.size() <= 512) {
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            double mm = 0.5 * (pts[i].first + pts[i + 1].first);
            double lin = 0.5 * (pts[i].second + pts[i + 1].second);
            double ex = detail::windowed_point_value(a, b, r, lo, hi, mm);
            if (std::abs(ex - lin) > 1e-9 * scale)
                throw internal_error("windowed_pair_max: interior kink escaped enumeration");
        }
    }
    return make_from_samples(Curvature::concave, std::move(pts), 1e-9 * scale);
}

}  // namespace cot
