#include <doctest.h>

#include <cmath>

#include <boost/math/special_functions/zeta.hpp>

#include "gwperc/errors.hpp"
#include "gwperc/offspring.hpp"
#include "gwperc/rng.hpp"
#include "stats.hpp"

using namespace gwperc;

namespace {

const OffspringSpec uniform3 = OffspringSpec::explicit_law({{1, 1.0 / 3}, {2, 1.0 / 3}, {3, 1.0 / 3}});

// Independent C_alpha for the finite-variance case: 2 mu^2 / E[X(X-1)].
double c_alpha_finite(const std::map<std::uint64_t, double>& pmf) {
    double mu = 0.0, fact = 0.0;
    for (auto [k, p] : pmf) {
        mu += k * p;
        fact += k * (k - 1.0) * p;
    }
    return 2.0 * mu * mu / fact;
}

}  // namespace

TEST_CASE("explicit laws are validated") {
    CHECK_THROWS_AS(OffspringSpec::explicit_law({{0, 0.1}, {2, 0.9}}), RejectLeaves);
    CHECK_THROWS_AS(OffspringSpec::explicit_law({{1, 1.0}}), RejectSubcritical);
    CHECK_THROWS_AS(OffspringSpec::explicit_law({{1, 0.5}, {2, 0.4}}), MalformedPmf);
    CHECK_THROWS_AS(OffspringSpec::explicit_law({{1, -0.5}, {2, 1.5}}), MalformedPmf);
    CHECK_THROWS_AS(OffspringSpec::explicit_law({}), MalformedPmf);
    CHECK_NOTHROW(OffspringSpec::explicit_law({{0, 0.0}, {2, 1.0}}));
    CHECK_THROWS_AS(OffspringSpec::zeta_tail(2.0), InvalidParameter);
    CHECK_THROWS_AS(OffspringSpec::zeta_tail(1.0), InvalidParameter);
}

TEST_CASE("finite-variance constants") {
    const auto c = constants(uniform3);
    CHECK(c.mu == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(c.c_alpha == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(c.c_alpha == doctest::Approx(c_alpha_finite({{1, 1.0 / 3}, {2, 1.0 / 3}, {3, 1.0 / 3}})).epsilon(1e-12));
    CHECK(c.regime == Regime::FiniteVariance);

    const auto b = constants(OffspringSpec::explicit_law({{2, 1.0}}));
    CHECK(b.c_alpha == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(b.p_c == 0.5);
    CHECK(b.beta == 1.0);
    CHECK(b.alpha == 2.0);
    REQUIRE(b.sigma2);
    CHECK(*b.sigma2 == doctest::Approx(0.0));

    const auto m = constants(OffspringSpec::explicit_law({{1, 0.8}, {2, 0.2}}));
    CHECK(m.mu == doctest::Approx(1.2).epsilon(1e-14));
    CHECK(m.c_alpha == doctest::Approx(7.2).epsilon(1e-12));
}

TEST_CASE("constants are deterministic") {
    const auto z = OffspringSpec::zeta_tail(1.5);
    CHECK(constants(z) == constants(z));
    CHECK(constants(uniform3) == constants(uniform3));
}

TEST_CASE("zeta-tail constants") {
    const auto c = constants(OffspringSpec::zeta_tail(1.5));
    CHECK(std::abs(c.mu - boost::math::zeta(1.5)) < 1e-12);
    CHECK(c.mu == doctest::Approx(2.6124).epsilon(1e-4));
    CHECK(c.beta == 2.0);
    REQUIRE(c.c1);
    CHECK(*c.c1 == 1.0);
    CHECK(c.regime == Regime::StableTail);
    // C = c1^{-beta} mu^{alpha beta} |Gamma(1 - alpha)|^{-beta} beta^beta
    const double g = std::abs(std::tgamma(1.0 - 1.5));
    const double expected = std::pow(c.mu, 3.0) * std::pow(g, -2.0) * 4.0;
    CHECK(c.c_alpha == doctest::Approx(expected).epsilon(1e-12));
    REQUIRE(c.abs_gamma_factor);
    CHECK(*c.abs_gamma_factor == doctest::Approx(g).epsilon(1e-12));
    // beta = 2 is an integer, so the literal signed form exists and agrees.
    REQUIRE(c.c_alpha_signed_gamma);
    CHECK(*c.c_alpha_signed_gamma == doctest::Approx(expected).epsilon(1e-12));

    const auto d = constants(OffspringSpec::zeta_tail(1.3));
    CHECK_FALSE(d.c_alpha_signed_gamma);
}

TEST_CASE("zeta_sum matches an independent zeta") {
    for (double s : {1.2, 1.5, 1.9, 2.0, 3.0}) {
        const auto v = zeta_sum(s);
        CHECK(std::abs(v.value - boost::math::zeta(s)) < 1e-12);
        CHECK(v.error_bound <= 1e-12);
    }
    CHECK_THROWS_AS(zeta_sum(1.0), DomainError);
}

TEST_CASE("zeta-tail law has the exact tail") {
    const auto z = OffspringSpec::zeta_tail(1.5);
    double cum = 0.0;
    for (std::uint64_t k = 1; k <= 10'000; ++k) {
        CHECK(std::abs(z.tail(k) - (1.0 - cum)) < 1e-10);
        cum += z.pmf(k);
    }
}

TEST_CASE("zeta-tail sampler inverts the CDF, including beyond the table") {
    const double alpha = 1.5;
    const auto z = OffspringSpec::zeta_tail(alpha);
    auto cdf = [&](double k) { return 1.0 - std::pow(k + 1.0, -alpha); };
    RandomStream rng(4, 4);
    std::vector<double> us;
    for (int i = 0; i < 100'000; ++i) us.push_back(rng.uniform());
    for (double e = 1e-3; e > 1e-15; e /= 7.0) us.push_back(1.0 - e);
    for (double u : us) {
        const auto k = static_cast<double>(z.sample_from_uniform(u));
        REQUIRE(k >= 1.0);
        CHECK(cdf(k - 1.0) <= u + 1e-12);
        CHECK(u < cdf(k) + 1e-12);
    }
}

TEST_CASE("sampler frequencies") {
    SUBCASE("degenerate") {
        const auto two = OffspringSpec::explicit_law({{2, 1.0}});
        RandomStream rng(1, 1);
        for (int i = 0; i < 1000; ++i) CHECK(two.sample(rng) == 2);
    }
    SUBCASE("zeta tail P(X >= 10)") {
        const auto z = OffspringSpec::zeta_tail(1.5);
        RandomStream rng(2, 2);
        std::uint64_t hits = 0;
        for (int i = 0; i < 1'000'000; ++i) hits += z.sample(rng) >= 10;
        CHECK(teststats::binomial_z(hits, 1'000'000, std::pow(10.0, -1.5)) < 4.0);
    }
    SUBCASE("uniform{1,2,3} mean and chi-square") {
        RandomStream rng(3, 3);
        teststats::Running r;
        std::vector<std::uint64_t> counts(3, 0);
        for (int i = 0; i < 1'000'000; ++i) {
            const auto x = uniform3.sample(rng);
            r.add(static_cast<double>(x));
            ++counts[x - 1];
        }
        CHECK(r.z(2.0) < 4.0);
        CHECK(teststats::chi_square_pvalue(counts, {1.0 / 3, 1.0 / 3, 1.0 / 3}) > 1e-3);
    }
    SUBCASE("finite-variance second moment") {
        const auto spec = OffspringSpec::explicit_law({{1, 0.5}, {2, 0.3}, {5, 0.2}});
        const double mu = 0.5 + 0.6 + 1.0;
        const double var = 0.5 * 1 + 0.3 * 4 + 0.2 * 25 - mu * mu;
        RandomStream rng(6, 6);
        teststats::Running m, v;
        for (int i = 0; i < 1'000'000; ++i) {
            const double x = static_cast<double>(spec.sample(rng));
            m.add(x);
            v.add((x - mu) * (x - mu));
        }
        CHECK(m.z(mu) < 4.0);
        CHECK(v.z(var) < 4.0);
    }
}

TEST_CASE("small-support counting agrees with the guide sampler") {
    const auto spec = OffspringSpec::explicit_law({{1, 0.5}, {2, 0.3}, {5, 0.2}});
    REQUIRE(spec.small_support() == 5);
    const double* cdf = spec.small_cdf();
    RandomStream rng(8, 8);
    std::vector<double> us;
    for (int i = 0; i < 100'000; ++i) us.push_back(rng.uniform());
    for (int j = 0; j < 5; ++j) {
        us.push_back(cdf[j]);
        us.push_back(std::nextafter(cdf[j], 0.0));
    }
    for (double u : us) {
        std::uint64_t k = 0;
        for (std::uint64_t j = 0; j < 5; ++j) k += cdf[j] <= u;
        CHECK(k == spec.sample_from_uniform(u));
    }
    CHECK(OffspringSpec::zeta_tail(1.5).small_support() == 0);
}

TEST_CASE("distribution descriptions round-trip through JSON") {
    const auto spec = make_spec(nlohmann::json::parse(R"({"kind":"explicit","pmf":{"1":0.8,"2":0.2}})"));
    CHECK(spec.pmf(1) == 0.8);
    CHECK(make_spec(spec.to_json()) == spec);
    const auto z = make_spec(nlohmann::json::parse(R"({"kind":"zeta_tail","alpha":1.5})"));
    CHECK(z.regime() == Regime::StableTail);
    CHECK_THROWS_AS(make_spec(nlohmann::json::parse(R"({"kind":"poisson"})")), MalformedPmf);
    CHECK_THROWS_AS(make_spec(nlohmann::json::parse(R"({"kind":"explicit","pmf":{"x":1}})")), MalformedPmf);
    CHECK_THROWS_AS(make_spec(nlohmann::json::parse(R"({"kind":"explicit","pmf":{"0":0.5,"2":0.5}})")), RejectLeaves);
}
