// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cot/pwl.hpp"

using namespace cot;

namespace {

PwlFn abs_fn(double lo = -std::numeric_limits<double>::infinity(),
             double hi = std::numeric_limits<double>::infinity()) {
    if (std::isinf(lo) && std::isinf(hi))
        return PwlFn::with_extensions(Curvature::convex, {0.0}, {0.0}, true, -1.0, true, 1.0);
    return PwlFn::from_points(Curvature::convex, {lo, 0.0, hi}, {-lo, 0.0, hi});
}

/// Random concave PL on [0,1] with decreasing slopes.
PwlFn random_concave(std::mt19937& rng, int max_pts = 8) {
    std::uniform_int_distribution<int> npt(2, max_pts);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    int n = npt(rng);
    std::vector<double> xs{0.0, 1.0};
    for (int i = 2; i < n; ++i) xs.push_back(unif(rng));
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    std::vector<double> slopes(xs.size() - 1);
    for (auto& s : slopes) s = 4.0 * unif(rng) - 2.0;
    std::sort(slopes.rbegin(), slopes.rend());
    std::vector<double> ys{unif(rng)};
    for (std::size_t i = 0; i + 1 < xs.size(); ++i)
        ys.push_back(ys.back() + slopes[i] * (xs[i + 1] - xs[i]));
    return PwlFn::from_points(Curvature::concave, xs, ys);
}

PwlFn random_convex(std::mt19937& rng, int max_pts = 8) {
    return negate(random_concave(rng, max_pts));
}

double brute_windowed(const PwlFn& a, const PwlFn& b, double r, double lo, double hi, double m,
                      int grid) {
    double w = std::max(0.0, std::min({r, m - lo, hi - m}));
    double best = -1e300;
    for (int i = 0; i <= grid; ++i) {
        double d = -w + 2.0 * w * i / grid;
        best = std::max(best, 0.5 * (a(m + d) + b(m - d)));
    }
    return best;
}

}  // namespace

TEST_CASE("eval basics") {
    auto f = abs_fn(-1.0, 1.0);
    CHECK(f(0.3) == Approx(0.3));
    CHECK_THROWS_AS(f(1.5), domain_error);

    auto g = PwlFn::from_points(Curvature::concave, {0.0, 1.0}, {0.0, 1.0});
    CHECK(g(0.5) == Approx(0.5));

    auto h = PwlFn::from_points(Curvature::convex, {0.0, 0.2, 1.0}, {0.0, 0.0, 0.8});
    CHECK(h(0.7) == Approx(0.5));
    CHECK(h(0.2) == 0.0);  // exact at breakpoints
}

TEST_CASE("affine_compose") {
    auto f = abs_fn();
    auto g = affine_compose(f, -1.0, 0.0);
    for (double x : {-2.0, -0.5, 0.0, 1.7}) CHECK(g(x) == Approx(std::abs(x)));

    auto f2 = abs_fn(-2.0, 2.0);
    auto h = affine_compose(f2, 2.0, 0.0);
    CHECK(h.xmin() == Approx(-1.0));
    CHECK(h.xmax() == Approx(1.0));
    for (double x : {-1.0, -0.3, 0.9}) CHECK(h(x) == Approx(2.0 * std::abs(x)));

    CHECK_THROWS_AS(affine_compose(f, 0.0, 1.0), input_error);

    // eval after affine composition at 1000 random points
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        auto base = random_concave(rng);
        double a = 0.0;
        while (std::abs(a) < 0.05) a = unif(rng);
        double b = 0.3 * unif(rng);
        auto comp = affine_compose(base, a, b);
        for (int i = 0; i < 40; ++i) {
            double x = comp.xmin() + (comp.xmax() - comp.xmin()) * (0.5 + 0.5 * unif(rng));
            double inner = a * x + b;
            inner = std::min(std::max(inner, base.xmin()), base.xmax());
            CHECK(comp(x) == Approx(base(inner)).margin(1e-13));
        }
    }
}

TEST_CASE("windowed_pair_max refuses an output domain outside the clip") {
    auto lin = PwlFn::from_points(Curvature::concave, {-1.0, 2.0}, {-1.0, 2.0});
    CHECK_THROWS_AS(windowed_pair_max(lin, lin, 0.1, 0.0, 1.0, -0.5, 1.0), numerical_error);
}

TEST_CASE("scale_add") {
    auto f = abs_fn();
    auto g = scale_add(f, 1.0, 0.0, 1.0);
    CHECK(g(0.5) == Approx(1.5));

    auto lin = scale_add(f, 0.0, 2.0, 3.0);
    CHECK(lin(2.0) == Approx(7.0));
    CHECK(lin(-1.0) == Approx(1.0));

    auto c = PwlFn::from_points(Curvature::concave, {0.0, 1.0}, {0.0, 1.0});
    auto s = scale_add(c, 2.0, -1.0, 0.0);
    CHECK(s(0.0) == Approx(0.0));
    CHECK(s(1.0) == Approx(1.0));

    CHECK_THROWS_AS(scale_add(f, -1.0, 0.0, 0.0), input_error);
    CHECK(negate(f).kind() == Curvature::concave);
}

TEST_CASE("legendre point values") {
    auto f = abs_fn();
    CHECK(legendre(f, 0.5) == Approx(0.0).margin(1e-15));
    CHECK_THROWS_AS(legendre(f, 2.0), numerical_error);

    auto v = PwlFn::from_points(Curvature::convex, {-1.0, 0.0, 1.0}, {1.0, 0.0, 1.0});
    CHECK(legendre(v, 0.0) == Approx(0.0).margin(1e-15));
}

TEST_CASE("conjugate and biconjugation") {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        auto f = random_convex(rng);
        auto fss = conjugate(conjugate(f));
        REQUIRE(fss.size() == f.size());
        for (std::size_t i = 0; i < f.size(); ++i) {
            CHECK(fss.xs()[i] == Approx(f.xs()[i]).margin(1e-12));
            CHECK(fss.ys()[i] == Approx(f.ys()[i]).margin(1e-12));
        }
    }
    // legendre() agrees with the full conjugate pointwise
    auto f = random_convex(rng);
    auto fs = conjugate(f);
    for (int i = 0; i <= 20; ++i) {
        double s = f.min_slope() + (f.max_slope() - f.min_slope()) * i / 20.0;
        CHECK(legendre(f, s) == Approx(fs(s)).margin(1e-12));
    }
}

TEST_CASE("inf_convolve identities") {
    auto f = abs_fn();
    auto conv = inf_convolve(f, f);
    for (double x : {-1.5, 0.0, 0.7}) CHECK(conv(x) == Approx(std::abs(x)).margin(1e-14));

    auto ind0 = PwlFn::from_points(Curvature::convex, {0.0}, {0.0});
    auto conv2 = inf_convolve(f, ind0);
    for (double x : {-2.0, 0.3}) CHECK(conv2(x) == Approx(std::abs(x)).margin(1e-14));

    // x^2 sampled on {-1,0,1}
    auto q = PwlFn::from_points(Curvature::convex, {-1.0, 0.0, 1.0}, {1.0, 0.0, 1.0});
    auto conv3 = inf_convolve(q, q);
    CHECK(conv3(0.0) == Approx(0.0).margin(1e-14));
    CHECK(conv3(2.0) == Approx(2.0).margin(1e-14));
}

TEST_CASE("inf_convolve vs brute force on random inputs") {
    std::mt19937 rng(37);
    for (int trial = 0; trial < 30; ++trial) {
        auto f = random_convex(rng);
        auto g = random_convex(rng);
        auto conv = inf_convolve(f, g);
        const int grid = 2000;
        double max_slope = std::max(std::abs(f.min_slope()),
                                    std::max(std::abs(f.max_slope()),
                                             std::max(std::abs(g.min_slope()),
                                                      std::abs(g.max_slope()))));
        double bound = 2.0 * max_slope * (1.0 / grid) + 1e-12;
        for (int i = 0; i <= 40; ++i) {
            double x = conv.xmin() + (conv.xmax() - conv.xmin()) * i / 40.0;
            double brute = 1e300;
            for (int k = 0; k <= grid; ++k) {
                double y = f.xmin() + (f.xmax() - f.xmin()) * k / grid;
                double z = x - y;
                if (z < g.xmin() - 1e-12 || z > g.xmax() + 1e-12) continue;
                z = std::min(std::max(z, g.xmin()), g.xmax());
                brute = std::min(brute, f(y) + g(z));
            }
            if (brute < 1e299) {
                CHECK(conv(x) <= brute + 1e-12);
                CHECK(conv(x) >= brute - bound);
            }
        }
    }
}

TEST_CASE("windowed_pair_max simple cases") {
    auto lin = PwlFn::from_points(Curvature::concave, {0.0, 1.0}, {0.0, 1.0});
    auto g = windowed_pair_max(lin, lin, 0.3, 0.0, 1.0, 0.0, 1.0);
    for (double m : {0.0, 0.4, 1.0}) CHECK(g(m) == Approx(m).margin(1e-13));

    // A = x, B = -x: g(m) = max |delta| within window
    auto neg = PwlFn::from_points(Curvature::concave, {0.0, 1.0}, {0.0, -1.0});
    auto g2 = windowed_pair_max(lin, neg, 0.1, 0.0, 1.0, 0.0, 1.0);
    CHECK(g2(0.5) == Approx(0.1).margin(1e-13));
    CHECK(g2(0.05) == Approx(0.05).margin(1e-13));  // clip binds

    // A = B = -|x - 1/2|: delta = 0 optimal
    auto vee = PwlFn::from_points(Curvature::concave, {0.0, 0.5, 1.0}, {-0.5, 0.0, -0.5});
    auto g3 = windowed_pair_max(vee, vee, 0.2, 0.0, 1.0, 0.0, 1.0);
    for (double m : {0.1, 0.5, 0.77}) CHECK(g3(m) == Approx(vee(m)).margin(1e-13));

    // r = 0 degenerates to the average
    auto g4 = windowed_pair_max(lin, neg, 0.0, 0.0, 1.0, 0.0, 1.0);
    for (double m : {0.2, 0.8}) CHECK(g4(m) == Approx(0.0).margin(1e-14));
}

TEST_CASE("windowed_pair_max vs brute force on random inputs") {
    std::mt19937 rng(53);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int dgrid = 10000;
    for (int trial = 0; trial < 40; ++trial) {
        auto a = random_concave(rng);
        auto b = random_concave(rng);
        double r = (trial % 5 == 0) ? 1.0 : 0.6 * unif(rng);
        auto g = windowed_pair_max(a, b, r, 0.0, 1.0, 0.0, 1.0);
        double max_slope = std::max({std::abs(a.min_slope()), std::abs(a.max_slope()),
                                     std::abs(b.min_slope()), std::abs(b.max_slope())});
        double bound = max_slope * (2.0 / dgrid) + 1e-11;
        for (int i = 0; i <= 25; ++i) {
            double m = i / 25.0;
            double brute = brute_windowed(a, b, r, 0.0, 1.0, m, dgrid);
            CHECK(g(m) >= brute - 1e-11);
            CHECK(g(m) <= brute + bound);
        }
    }
}

TEST_CASE("sup_convolve matches windowed max with slack window") {
    std::mt19937 rng(71);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = random_concave(rng);
        auto b = random_concave(rng);
        // r >= 1/2 makes the truncation inactive against clip [0,1]
        auto fast = windowed_pair_max(a, b, 0.75, 0.0, 1.0, 0.0, 1.0);
        for (int i = 0; i <= 30; ++i) {
            double m = i / 30.0;
            double brute = brute_windowed(a, b, 0.75, 0.0, 1.0, m, 10000);
            CHECK(fast(m) == Approx(brute).margin(2e-4 + 1e-11));
            CHECK(fast(m) >= brute - 1e-11);
        }
    }
}

TEST_CASE("curvature preserved across operations") {
    std::mt19937 rng(97);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = random_concave(rng);
        auto b = random_concave(rng);
        auto w = windowed_pair_max(a, b, 0.2, 0.0, 1.0, 0.0, 1.0);
        auto slopes = w.all_slopes();
        for (std::size_t i = 0; i + 1 < slopes.size(); ++i)
            CHECK(slopes[i + 1] <= slopes[i] + 1e-11);
        auto conv = inf_convolve(negate(a), negate(b));
        auto cs = conv.all_slopes();
        for (std::size_t i = 0; i + 1 < cs.size(); ++i) CHECK(cs[i + 1] >= cs[i] - 1e-11);
    }
}

TEST_CASE("simplify stays close and monotone in breakpoints") {
    std::mt19937 rng(113);
    auto f = random_concave(rng, 12);
    auto s = simplify(f, 1e-3);
    CHECK(s.size() <= f.size());
    for (int i = 0; i <= 50; ++i) {
        double x = i / 50.0;
        CHECK(s(x) == Approx(f(x)).margin(5e-3));
    }
}
