#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gwperc/csbp.hpp"
#include "gwperc/errors.hpp"
#include "gwperc/limit_laws.hpp"
#include "stats.hpp"

using namespace gwperc;

namespace {

const ModelConstants uniform3 = constants(OffspringSpec::explicit_law({{1, 1.0 / 3}, {2, 1.0 / 3}, {3, 1.0 / 3}}));

// u_t(lambda) = lambda C / (C + lambda t) for psi(lambda) = lambda^2 / C.
double lt_oracle(double C, double a, double t, double theta) { return std::exp(-a * theta * C / (C + theta * t)); }

}  // namespace

TEST_CASE("regime and argument checks") {
    CHECK_THROWS_AS(CsbpSampler(constants(OffspringSpec::zeta_tail(1.5))), UnsupportedRegime);
    const CsbpSampler s(uniform3);
    RandomStream rng(1, 0);
    CHECK(s.step(0.0, 1.0, rng) == 0.0);
    CHECK_THROWS_AS(s.step(-1.0, 1.0, rng), DomainError);
    CHECK_THROWS_AS(s.step(1.0, 0.0, rng), DomainError);
    CHECK_THROWS_AS(s.step(std::nan(""), 1.0, rng), DomainError);
    CHECK_THROWS_AS(s.path(1.0, {0.5, 0.5}, rng), DomainError);
    CHECK_THROWS_AS(s.path(1.0, {1.0, 0.5}, rng), DomainError);
    CHECK_THROWS_AS(s.path(1.0, {-1.0, 0.5}, rng), DomainError);
    CHECK_THROWS_AS(s.path(-1.0, {1.0}, rng), DomainError);
}

TEST_CASE("zero mass stays at zero") {
    const CsbpSampler s(uniform3);
    RandomStream rng(2, 0);
    for (double m : s.path(0.0, {0.0, 0.5, 1.0, 2.0}, rng)) CHECK(m == 0.0);
}

TEST_CASE("one step matches mean, variance and transform") {
    const CsbpSampler s(uniform3);
    const double C = uniform3.c_alpha;
    CHECK(C == doctest::Approx(3.0));
    const double a = 1.3, dt = 0.7;
    const std::vector<double> theta{0.25, 1.0, 4.0};
    teststats::Running mass, sq;
    std::vector<teststats::Running> lt(theta.size());
    for (std::uint64_t i = 0; i < 1'000'000; ++i) {
        RandomStream rng = csbp_stream(3, i);
        const double x = s.step(a, dt, rng);
        CHECK(x >= 0.0);
        mass.add(x);
        sq.add((x - a) * (x - a));
        for (std::size_t j = 0; j < theta.size(); ++j) lt[j].add(std::exp(-theta[j] * x));
    }
    CHECK(mass.z(a) < 4.0);
    CHECK(sq.z(2.0 * a * dt / C) < 4.0);
    const LimitLaw law(uniform3);
    for (std::size_t j = 0; j < theta.size(); ++j) {
        CHECK(law.csbp_transition_lt(a, dt, theta[j]) == doctest::Approx(lt_oracle(C, a, dt, theta[j])).epsilon(1e-12));
        CHECK(lt[j].z(lt_oracle(C, a, dt, theta[j])) < 4.0);
    }
}

TEST_CASE("two steps agree with one double step and extinction") {
    const CsbpSampler s(uniform3);
    const double C = uniform3.c_alpha, a0 = 0.8, dt = 0.5;
    teststats::Running two, one;
    std::uint64_t extinct = 0;
    const std::uint64_t paths = 500'000;
    for (std::uint64_t i = 0; i < paths; ++i) {
        RandomStream r1 = csbp_stream(4, 2 * i), r2 = csbp_stream(4, 2 * i + 1);
        const auto p = s.path(a0, {0.0, dt, 2 * dt}, r1);
        REQUIRE(p.size() == 3);
        CHECK(p[0] == a0);
        two.add(std::exp(-p[2]));
        one.add(std::exp(-s.step(a0, 2 * dt, r2)));
        extinct += p[2] == 0.0 ? 1 : 0;
    }
    CHECK(two.z(lt_oracle(C, a0, 2 * dt, 1.0)) < 4.0);
    CHECK(one.z(lt_oracle(C, a0, 2 * dt, 1.0)) < 4.0);
    CHECK(teststats::binomial_z(extinct, paths, std::exp(-a0 * C / (2 * dt))) < 4.0);
}

TEST_CASE("branching property") {
    const CsbpSampler s(uniform3);
    const double a = 0.4, b = 0.9, dt = 0.6;
    teststats::Running split, joint;
    for (std::uint64_t i = 0; i < 400'000; ++i) {
        RandomStream r1 = csbp_stream(5, 3 * i), r2 = csbp_stream(5, 3 * i + 1), r3 = csbp_stream(5, 3 * i + 2);
        split.add(std::exp(-(s.step(a, dt, r1) + s.step(b, dt, r2))));
        joint.add(std::exp(-s.step(a + b, dt, r3)));
    }
    const double target = lt_oracle(uniform3.c_alpha, a + b, dt, 1.0);
    CHECK(split.z(target) < 4.0);
    CHECK(joint.z(target) < 4.0);
}

TEST_CASE("free functions agree with the sampler") {
    const CsbpSampler s(uniform3);
    RandomStream r1 = csbp_stream(6, 0), r2 = csbp_stream(6, 0);
    CHECK(s.path(1.0, {0.5, 1.0, 3.0}, r1) == path_alpha2(uniform3, 1.0, {0.5, 1.0, 3.0}, r2));
    RandomStream r3 = csbp_stream(6, 1), r4 = csbp_stream(6, 1);
    CHECK(s.step(2.0, 0.3, r3) == step_alpha2(uniform3, 2.0, 0.3, r4));
}

TEST_CASE("self check is thread independent and passes") {
    const auto a = csbp_self_check(uniform3, 1.0, 1.0, 200'000, {0.5, 1.0, 2.0}, 7, 1);
    const auto b = csbp_self_check(uniform3, 1.0, 1.0, 200'000, {0.5, 1.0, 2.0}, 7, 4);
    CHECK(a.mean_one_step.estimate == b.mean_one_step.estimate);
    CHECK(a.lt_two_vs_one[1].estimate == b.lt_two_vs_one[1].estimate);
    CHECK(a.extinction.estimate == b.extinction.estimate);
    CHECK(a.max_z() < 4.5);
    CHECK(a.extinction.target == doctest::Approx(std::exp(-uniform3.c_alpha / 2.0)));
}

TEST_CASE("path csv") {
    std::ostringstream out;
    write_path_csv(out, {0.0, 0.5}, {1.0, 0.25});
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "time,mass");
    std::getline(in, line);
    CHECK(line.rfind("0,1", 0) == 0);
    std::getline(in, line);
    CHECK(line.rfind("0.5,0.25", 0) == 0);
    std::ostringstream bad;
    CHECK_THROWS(write_path_csv(bad, {0.0}, {1.0, 2.0}));
}
