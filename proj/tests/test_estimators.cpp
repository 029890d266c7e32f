#include <doctest.h>

#include <cmath>

#include "gwperc/errors.hpp"
#include "gwperc/estimators.hpp"
#include "gwperc/limit_laws.hpp"
#include "gwperc/parallel.hpp"
#include "gwperc/percolation.hpp"
#include "stats.hpp"

using namespace gwperc;

namespace {

ClusterTrace trace(std::vector<std::uint64_t> counts) {
    ClusterTrace t;
    t.n_max = static_cast<int>(counts.size()) - 1;
    t.survival = counts.back() > 0;
    t.counts = std::move(counts);
    return t;
}

}  // namespace

TEST_CASE("wilson interval edge cases") {
    CHECK_THROWS_AS(wilson_interval(0, 0), EmptyBatch);
    const auto all = wilson_interval(50, 50);
    CHECK(all.estimate == 1.0);
    CHECK(all.ci_hi == 1.0);
    CHECK(all.ci_lo < 1.0);
    const auto none = wilson_interval(0, 50);
    CHECK(none.estimate == 0.0);
    CHECK(none.ci_lo == 0.0);
    CHECK(none.ci_hi > 0.0);
    const auto mid = wilson_interval(30, 100);
    CHECK(mid.ci_lo < 0.3);
    CHECK(mid.ci_hi > 0.3);
    CHECK(normal_quantile(0.99) == doctest::Approx(2.5758293035489).epsilon(1e-10));
}

TEST_CASE("survival estimate") {
    CHECK_THROWS_AS(survival_estimate({}, 1), EmptyBatch);
    const std::vector<ClusterTrace> live{trace({1, 2, 1}), trace({1, 1, 3})};
    CHECK(survival_estimate(live, 2).estimate == 1.0);
    CHECK(survival_estimate(live, 2).ci_hi == 1.0);
    CHECK(survival_estimate({trace({1, 0, 0})}, 0).estimate == 1.0);
    CHECK_THROWS_AS(survival_estimate(live, 3), InvalidLevels);

    const std::uint64_t trials = 1'000'000;
    RandomStream rng(8, 0);
    Coin coin(0.03);
    SurvivalSummary s;
    for (std::uint64_t i = 0; i < trials; ++i) s.add(coin.flip(rng));
    const auto e = s.estimate();
    CHECK(teststats::binomial_z(s.survived(), trials, 0.03) < 4.0);
    CHECK(e.ci_lo < 0.03);
    CHECK(e.ci_hi > 0.03);
}

TEST_CASE("wilson coverage is close to nominal") {
    const double p = 0.3;
    const std::uint64_t trials = 200, reps = 1000;
    std::uint64_t covered = 0;
    Coin coin(p);
    for (std::uint64_t r = 0; r < reps; ++r) {
        RandomStream rng(9, r);
        std::uint64_t k = 0;
        for (std::uint64_t i = 0; i < trials; ++i) k += coin.flip(rng) ? 1 : 0;
        const auto e = wilson_interval(k, trials);
        covered += e.ci_lo <= p && p <= e.ci_hi ? 1 : 0;
    }
    CHECK(teststats::binomial_z(covered, reps, 0.99) < 3.0);
}

TEST_CASE("survival curve") {
    SurvivalCurve c({1, 2});
    c.add(trace({1, 1, 0}));
    c.add(trace({1, 2, 3}));
    c.add_counts({1, 0, 0});
    CHECK(c.at(0).runs() == 3);
    CHECK(c.at(0).survived() == 2);
    CHECK(c.at(1).survived() == 1);
    SurvivalCurve d({1, 2});
    d.add(trace({1, 1, 1}));
    c.merge(d);
    CHECK(c.at(1).survived() == 2);
    CHECK(c.at(1).runs() == 4);
}

TEST_CASE("laplace transform basics") {
    LaplaceSummary zero({0.0, 1.0, 3.0}, 1);
    for (std::uint64_t i = 0; i < 200; ++i) zero.add(i, 1.0);
    const auto pts = zero.estimate();
    CHECK(pts[0].estimate == 1.0);
    CHECK(pts[0].ci_lo == 1.0);
    CHECK(pts[0].ci_hi == 1.0);
    CHECK(pts[1].estimate == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(pts[2].estimate == doctest::Approx(std::exp(-3.0)).epsilon(1e-14));
    CHECK(zero.mean() == 1.0);

    LaplaceSummary few({1.0}, 1);
    few.add(0, 1.0);
    CHECK_THROWS_AS(few.estimate(), InsufficientSurvivors);
    CHECK_NOTHROW(few.estimate(1));

    LaplaceSummary exp_law({0.1, 0.5, 1.0, 2.0, 5.0}, 2);
    RandomStream rng(10, 0);
    for (std::uint64_t i = 0; i < 20'000; ++i) exp_law.add(i, -std::log1p(-rng.uniform()));
    const auto e = exp_law.estimate();
    for (std::size_t j = 0; j < e.size(); ++j) {
        CHECK(e[j].ci_lo <= e[j].estimate);
        CHECK(e[j].estimate <= e[j].ci_hi);
        if (j > 0) CHECK(e[j].estimate < e[j - 1].estimate);
        const double exact = 1.0 / (1.0 + e[j].theta);
        CHECK(std::abs(e[j].estimate - exact) < 4.0 * e[j].std_error);
    }
}

TEST_CASE("laplace summaries merge like concatenation") {
    const std::vector<double> theta{0.5, 1.0, 2.0};
    LaplaceSummary whole(theta, 11), left(theta, 11), right(theta, 11);
    RandomStream rng(11, 0);
    for (std::uint64_t i = 0; i < 3000; ++i) {
        const double x = 2.0 * rng.uniform();
        whole.add(i, x);
        (i < 1300 ? left : right).add(i, x);
    }
    left.merge(right);
    CHECK(left.count() == whole.count());
    CHECK(left.mean() == doctest::Approx(whole.mean()).epsilon(1e-13));
    const auto a = whole.estimate(), b = left.estimate();
    for (std::size_t j = 0; j < theta.size(); ++j) {
        CHECK(a[j].estimate == doctest::Approx(b[j].estimate).epsilon(1e-13));
        CHECK(a[j].ci_lo == doctest::Approx(b[j].ci_lo).epsilon(1e-12));
        CHECK(a[j].ci_hi == doctest::Approx(b[j].ci_hi).epsilon(1e-12));
    }
}

TEST_CASE("bootstrap interval has roughly nominal coverage") {
    const double theta = 1.0, exact = 0.5;
    std::uint64_t covered = 0;
    const std::uint64_t reps = 200;
    for (std::uint64_t r = 0; r < reps; ++r) {
        LaplaceSummary s({theta}, 100 + r, 400);
        RandomStream rng(12, r);
        for (std::uint64_t i = 0; i < 500; ++i) s.add(i, -std::log1p(-rng.uniform()));
        const auto e = s.estimate();
        covered += e[0].ci_lo <= exact && exact <= e[0].ci_hi ? 1 : 0;
    }
    CHECK(covered >= 190);
}

TEST_CASE("laplace estimate from traces") {
    std::vector<ClusterTrace> traces;
    for (std::uint64_t i = 0; i < 150; ++i) traces.push_back(trace({1, i % 3}));
    const auto pts = laplace_estimate(traces, 1, {1.0}, 0.5);
    // survivors have Y_1 in {1, 2}, 50 each
    CHECK(pts[0].estimate == doctest::Approx(0.5 * (std::exp(-0.5) + std::exp(-1.0))).epsilon(1e-14));
}

TEST_CASE("binned transition estimate") {
    TransitionSample s;
    RandomStream rng(13, 0);
    for (int i = 0; i < 5000; ++i) {
        const double x = 4.0 * rng.uniform();
        s.add(x, x);
    }
    const auto bins = binned_transition_estimate(s, {1.0}, {1.0, 100.0});
    REQUIRE(bins.size() == 2);
    CHECK(bins[1].dropped);
    CHECK(bins[1].count == 0);
    CHECK(bins[1].transform.empty());
    CHECK_FALSE(bins[0].dropped);
    double direct = 0.0, mean = 0.0;
    std::uint64_t k = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (std::abs(s.x()[i] - 1.0) <= 0.25) {
            direct += std::exp(-s.y()[i]);
            mean += s.x()[i];
            ++k;
        }
    CHECK(bins[0].count == k);
    CHECK(bins[0].mean_x == doctest::Approx(mean / static_cast<double>(k)));
    CHECK(bins[0].transform[0].estimate == doctest::Approx(direct / static_cast<double>(k)));
    const auto median = binned_transition_estimate(s, {1.0});
    REQUIRE(median.size() == 1);
    CHECK(median[0].center == doctest::Approx(s.median_x()));
    CHECK(median[0].half_width == doctest::Approx(0.25 * s.median_x()));

    std::vector<ClusterTrace> traces{trace({1, 1, 0, 0, 0})};
    CHECK_THROWS_AS(binned_transition_estimate(traces, 3, {1.0}, 1.0), InvalidLevels);
}

TEST_CASE("annealed yaglom transform near the limit law") {
    const auto spec = OffspringSpec::explicit_law({{1, 1.0 / 3}, {2, 1.0 / 3}, {3, 1.0 / 3}});
    const LimitLaw law(constants(spec));
    const int n = 256;
    const std::uint64_t runs = 300'000;
    const std::vector<double> theta{0.5, 1.0, 2.0};
    auto parts = map_chunks(0, runs, 1 << 15, 0, [&](std::uint64_t lo, std::uint64_t hi) {
        LaplaceSummary s(theta, 14);
        AnnealedRunner runner(spec);
        std::vector<std::uint64_t> counts;
        for (std::uint64_t i = lo; i < hi; ++i) {
            RandomStream rng = annealed_stream(14, i);
            runner.run_counts(n, rng, counts);
            if (counts[n] > 0) s.add(i, static_cast<double>(counts[n]) / n);
        }
        return s;
    });
    LaplaceSummary all(theta, 14);
    for (const auto& p : parts) all.merge(p);
    const auto e = all.estimate();
    for (const auto& pt : e) CHECK(std::abs(pt.estimate - law.phi(pt.theta)) < 0.03);
}
