#include "gwperc/csbp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include "gwperc/errors.hpp"
#include "gwperc/parallel.hpp"

namespace gwperc {

CsbpSampler::CsbpSampler(const ModelConstants& constants) : constants_(constants) {
    if (constants_.regime != Regime::FiniteVariance)
        throw UnsupportedRegime("CSBP paths are sampled only for alpha = 2; use the transforms for alpha < 2");
}

double CsbpSampler::step(double a, double dt, RandomStream& rng) const {
    if (!(a >= 0.0) || !std::isfinite(a)) throw DomainError("mass must be finite and >= 0");
    if (!(dt > 0.0)) throw DomainError("dt must be > 0");
    if (a == 0.0) return 0.0;
    const double rate = constants_.c_alpha / dt;
    boost::random::poisson_distribution<std::uint64_t, double> jumps(a * rate);
    const std::uint64_t n = jumps(rng);
    if (n == 0) return 0.0;
    // a sum of n Exp(rate) variables is Gamma(n, 1 / rate)
    boost::random::gamma_distribution<double> total(static_cast<double>(n), 1.0 / rate);
    return total(rng);
}

std::vector<double> CsbpSampler::path(double a0, const std::vector<double>& times, RandomStream& rng) const {
    if (!(a0 >= 0.0) || !std::isfinite(a0)) throw DomainError("mass must be finite and >= 0");
    std::vector<double> masses;
    masses.reserve(times.size());
    double t = 0.0;
    double a = a0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] >= 0.0) || (i > 0 && !(times[i] > times[i - 1])))
            throw DomainError("time grid must be nonnegative and strictly increasing");
        if (times[i] > t) {
            a = step(a, times[i] - t, rng);
            t = times[i];
        }
        masses.push_back(a);
    }
    return masses;
}

double step_alpha2(const ModelConstants& constants, double a, double dt, RandomStream& rng) {
    return CsbpSampler(constants).step(a, dt, rng);
}

std::vector<double> path_alpha2(const ModelConstants& constants, double a0, const std::vector<double>& times,
                                RandomStream& rng) {
    return CsbpSampler(constants).path(a0, times, rng);
}

RandomStream csbp_stream(std::uint64_t master_seed, std::uint64_t index) {
    return RandomStream::derive(master_seed, domain::csbp, index);
}

void write_path_csv(std::ostream& out, const std::vector<double>& times, const std::vector<double>& masses) {
    if (times.size() != masses.size()) throw DomainError("times and masses differ in length");
    out << "time,mass\n";
    const auto old = out.precision(17);
    for (std::size_t i = 0; i < times.size(); ++i) out << times[i] << ',' << masses[i] << '\n';
    out.precision(old);
    if (!out) throw IoError("failed writing CSBP path");
}

double CheckedMean::z() const noexcept {
    const double diff = std::abs(estimate - target);
    if (std_error > 0.0) return diff / std_error;
    return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

double CsbpSelfCheck::max_z() const noexcept {
    double z = std::max({mean_one_step.z(), mean_two_step.z(), extinction.z()});
    for (const auto& c : lt_one_step) z = std::max(z, c.z());
    for (const auto& c : lt_two_vs_one) z = std::max(z, c.z());
    return z;
}

namespace {

struct Moments {
    double sum = 0.0;
    double sum_sq = 0.0;

    void add(double x) noexcept {
        sum += x;
        sum_sq += x * x;
    }
    void merge(const Moments& o) noexcept {
        sum += o.sum;
        sum_sq += o.sum_sq;
    }
    CheckedMean mean(double n, double target) const noexcept {
        const double m = sum / n;
        const double var = std::max(0.0, sum_sq / n - m * m) * n / std::max(1.0, n - 1.0);
        return {m, std::sqrt(var / n), target};
    }
};

struct SelfCheckSums {
    Moments one;
    Moments two;
    Moments extinct;
    std::vector<Moments> lt_one;
    std::vector<Moments> lt_diff;
};

}  // namespace

CsbpSelfCheck csbp_self_check(const ModelConstants& constants, double a, double dt, std::uint64_t paths,
                              const std::vector<double>& theta, std::uint64_t master_seed, unsigned threads) {
    const CsbpSampler sampler(constants);
    const LimitLaw law(constants);
    if (paths < 2) throw DomainError("self check needs at least 2 paths");

    auto chunk = [&](std::uint64_t lo, std::uint64_t hi) {
        SelfCheckSums s;
        s.lt_one.resize(theta.size());
        s.lt_diff.resize(theta.size());
        for (std::uint64_t i = lo; i < hi; ++i) {
            RandomStream two_rng = csbp_stream(master_seed, 2 * i);
            RandomStream one_rng = csbp_stream(master_seed, 2 * i + 1);
            const double x1 = sampler.step(a, dt, two_rng);
            const double x2 = sampler.step(x1, dt, two_rng);
            const double y = sampler.step(a, 2.0 * dt, one_rng);
            s.one.add(x1);
            s.two.add(x2);
            s.extinct.add(x2 == 0.0 ? 1.0 : 0.0);
            for (std::size_t j = 0; j < theta.size(); ++j) {
                s.lt_one[j].add(std::exp(-theta[j] * x1));
                s.lt_diff[j].add(std::exp(-theta[j] * x2) - std::exp(-theta[j] * y));
            }
        }
        return s;
    };
    const auto parts = map_chunks(0, paths, 1 << 14, threads, chunk);

    SelfCheckSums total;
    total.lt_one.resize(theta.size());
    total.lt_diff.resize(theta.size());
    for (const auto& p : parts) {
        total.one.merge(p.one);
        total.two.merge(p.two);
        total.extinct.merge(p.extinct);
        for (std::size_t j = 0; j < theta.size(); ++j) {
            total.lt_one[j].merge(p.lt_one[j]);
            total.lt_diff[j].merge(p.lt_diff[j]);
        }
    }

    const double n = static_cast<double>(paths);
    CsbpSelfCheck out;
    out.a = a;
    out.dt = dt;
    out.paths = paths;
    out.theta = theta;
    out.mean_one_step = total.one.mean(n, a);
    out.mean_two_step = total.two.mean(n, a);
    out.extinction = total.extinct.mean(n, law.csbp_extinction(a, 2.0 * dt));
    for (std::size_t j = 0; j < theta.size(); ++j) {
        out.lt_one_step.push_back(total.lt_one[j].mean(n, law.csbp_transition_lt(a, dt, theta[j])));
        out.lt_two_vs_one.push_back(total.lt_diff[j].mean(n, 0.0));
    }
    return out;
}

}  // namespace gwperc
