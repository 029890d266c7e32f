#include "gwperc/offspring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gwperc/errors.hpp"

namespace gwperc {

std::string to_string(Regime regime) {
    return regime == Regime::FiniteVariance ? "finite_variance" : "stable_tail";
}

struct OffspringSpec::Tables {
    // cdf[k] = P(X <= k) for k = 0..K. For the zeta law, K = kTableSize.
    std::vector<double> cdf;
    // Chen-Asau guide over a power-of-two grid: guide[j] = min k with
    // cdf[k] > j / guide.size(). kInexact marks cells that straddle a cdf
    // step and need a search; elsewhere the cell determines k outright.
    std::vector<std::uint32_t> guide;
    double guide_scale = 0.0;
    double table_top = 1.0;  // cdf.back()
    double alpha = 0.0;  // zeta only
    bool zeta = false;
};

namespace {

constexpr std::uint32_t kInexact = 0x80000000u;

}  // namespace

void OffspringSpec::build_guide(Tables& t) {
    std::size_t size = 4096;
    while (size < 4 * t.cdf.size()) size *= 2;
    t.guide.assign(size, 0);
    t.guide_scale = static_cast<double>(size);
    t.table_top = t.cdf.back();
    std::size_t k = 0;
    for (std::size_t j = 0; j < size; ++j) {
        const double lo = static_cast<double>(j) / t.guide_scale;
        const double hi = static_cast<double>(j + 1) / t.guide_scale;
        while (k + 1 < t.cdf.size() && t.cdf[k] <= lo) ++k;
        const bool exact = t.cdf[k] >= hi && (k + 1 < t.cdf.size() || !t.zeta);
        t.guide[j] = static_cast<std::uint32_t>(k) | (exact ? 0u : kInexact);
    }
}

OffspringSpec::OffspringSpec(Law law, Regime regime, std::shared_ptr<const Tables> tables)
    : law_(std::move(law)), regime_(regime), tables_(std::move(tables)) {}

OffspringSpec OffspringSpec::explicit_law(const std::map<std::uint64_t, double>& pmf) {
    if (pmf.empty()) throw MalformedPmf("empty pmf");
    double total = 0.0;
    for (const auto& [k, p] : pmf) {
        if (!std::isfinite(p) || p < 0.0)
            throw MalformedPmf("probability for k=" + std::to_string(k) + " is not a nonnegative number");
        if (k == 0 && p > 0.0) throw RejectLeaves("p(0) = " + std::to_string(p) + " > 0");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw MalformedPmf("probabilities sum to " + std::to_string(total));

    std::uint64_t k_max = 0;
    for (const auto& [k, p] : pmf)
        if (p > 0.0) k_max = std::max(k_max, k);
    if (k_max > (std::uint64_t{1} << 24)) throw MalformedPmf("support too large for an explicit table");

    ExplicitLaw law;
    law.pmf.assign(k_max + 1, 0.0);
    for (const auto& [k, p] : pmf)
        if (p > 0.0) law.pmf[k] = p / total;

    double mean = 0.0;
    for (std::size_t k = 1; k < law.pmf.size(); ++k) mean += static_cast<double>(k) * law.pmf[k];
    if (!(mean > 1.0)) throw RejectSubcritical("mean " + std::to_string(mean) + " <= 1");

    auto tables = std::make_shared<Tables>();
    tables->cdf.resize(law.pmf.size());
    std::partial_sum(law.pmf.begin(), law.pmf.end(), tables->cdf.begin());
    tables->cdf.back() = 1.0;
    build_guide(*tables);
    return OffspringSpec(std::move(law), Regime::FiniteVariance, std::move(tables));
}

OffspringSpec OffspringSpec::zeta_tail(double alpha) {
    if (!(alpha > 1.0 && alpha < 2.0))
        throw InvalidParameter("zeta_tail alpha must lie in (1, 2), got " + std::to_string(alpha));
    auto tables = std::make_shared<Tables>();
    tables->zeta = true;
    tables->alpha = alpha;
    tables->cdf.resize(kTableSize + 1);
    tables->cdf[0] = 0.0;
    for (std::uint64_t k = 1; k <= kTableSize; ++k)
        tables->cdf[k] = 1.0 - std::pow(static_cast<double>(k + 1), -alpha);
    build_guide(*tables);
    return OffspringSpec(ZetaTailLaw{alpha}, Regime::StableTail, std::move(tables));
}

double OffspringSpec::pmf(std::uint64_t k) const {
    if (k == 0) return 0.0;
    if (const auto* law = std::get_if<ExplicitLaw>(&law_))
        return k < law->pmf.size() ? law->pmf[k] : 0.0;
    const double alpha = std::get<ZetaTailLaw>(law_).alpha;
    return std::pow(static_cast<double>(k), -alpha) - std::pow(static_cast<double>(k + 1), -alpha);
}

double OffspringSpec::tail(std::uint64_t k) const {
    if (k <= 1) return 1.0;
    if (const auto* law = std::get_if<ExplicitLaw>(&law_)) {
        double total = 0.0;
        for (std::size_t j = k; j < law->pmf.size(); ++j) total += law->pmf[j];
        return total;
    }
    return std::pow(static_cast<double>(k), -std::get<ZetaTailLaw>(law_).alpha);
}

std::uint64_t OffspringSpec::sample_from_uniform(double u) const noexcept {
    const Tables& t = *tables_;
    const std::uint32_t g = t.guide[static_cast<std::size_t>(u * t.guide_scale)];
    if (!(g & kInexact)) [[likely]]
        return g;
    if (t.zeta && u >= t.table_top) {
        // Exact tail inversion: floor((1-u)^{-1/alpha}) has P(X >= k) = k^{-alpha}.
        const double x = std::floor(std::pow(1.0 - u, -1.0 / t.alpha));
        const auto k = static_cast<std::uint64_t>(std::min(x, 0x1.0p62));
        return std::max<std::uint64_t>(k, kTableSize + 1);
    }
    std::size_t k = g & ~kInexact;
    while (k > 0 && t.cdf[k - 1] > u) --k;
    while (t.cdf[k] <= u) ++k;
    return k;
}

std::uint64_t OffspringSpec::small_support() const noexcept {
    const Tables& t = *tables_;
    return !t.zeta && t.cdf.size() - 1 <= kSmallSupport ? t.cdf.size() - 1 : 0;
}

const double* OffspringSpec::small_cdf() const noexcept { return tables_->cdf.data(); }

nlohmann::json OffspringSpec::to_json() const {
    if (const auto* law = std::get_if<ExplicitLaw>(&law_)) {
        nlohmann::json pmf = nlohmann::json::object();
        for (std::size_t k = 1; k < law->pmf.size(); ++k)
            if (law->pmf[k] > 0.0) pmf[std::to_string(k)] = law->pmf[k];
        return {{"kind", "explicit"}, {"pmf", pmf}};
    }
    return {{"kind", "zeta_tail"}, {"alpha", std::get<ZetaTailLaw>(law_).alpha}};
}

bool operator==(const OffspringSpec& a, const OffspringSpec& b) {
    if (a.law_.index() != b.law_.index()) return false;
    if (const auto* la = std::get_if<ExplicitLaw>(&a.law_))
        return la->pmf == std::get<ExplicitLaw>(b.law_).pmf;
    return std::get<ZetaTailLaw>(a.law_).alpha == std::get<ZetaTailLaw>(b.law_).alpha;
}

OffspringSpec make_spec(const nlohmann::json& config) {
    if (!config.is_object() || !config.contains("kind"))
        throw MalformedPmf("distribution description needs a \"kind\" field");
    const auto kind = config.at("kind").get<std::string>();
    if (kind == "explicit") {
        if (!config.contains("pmf") || !config.at("pmf").is_object())
            throw MalformedPmf("explicit distribution needs a \"pmf\" object");
        std::map<std::uint64_t, double> pmf;
        for (const auto& [key, value] : config.at("pmf").items()) {
            std::size_t used = 0;
            unsigned long long k = 0;
            try {
                k = std::stoull(key, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != key.size() || key.empty() || key[0] == '-')
                throw MalformedPmf("support point \"" + key + "\" is not a nonnegative integer");
            if (!value.is_number()) throw MalformedPmf("probability for \"" + key + "\" is not a number");
            pmf[k] = value.get<double>();
        }
        return OffspringSpec::explicit_law(pmf);
    }
    if (kind == "zeta_tail") {
        if (!config.contains("alpha") || !config.at("alpha").is_number())
            throw InvalidParameter("zeta_tail needs a numeric \"alpha\"");
        return OffspringSpec::zeta_tail(config.at("alpha").get<double>());
    }
    throw MalformedPmf("unknown distribution kind \"" + kind + "\"");
}

SeriesValue zeta_sum(double s) {
    if (!(s > 1.0)) throw DomainError("zeta_sum needs s > 1");
    constexpr int kTerms = 64;
    double head = 0.0;
    // Small terms first.
    for (int k = kTerms - 1; k >= 1; --k) head += std::pow(static_cast<double>(k), -s);

    const double n = kTerms;
    double value = head + std::pow(n, 1.0 - s) / (s - 1.0) + 0.5 * std::pow(n, -s);
    // B_{2j} / (2j)!
    constexpr double kBernoulliOverFactorial[] = {
        1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0, -1.0 / 1209600.0, 1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
    };
    double rising = s;  // s (s+1) ... (s+2j-2)
    double last = 0.0;
    for (int j = 1; j <= 6; ++j) {
        const double term = kBernoulliOverFactorial[j - 1] * rising * std::pow(n, -s - 2.0 * j + 1.0);
        value += term;
        last = term;
        rising *= (s + 2.0 * j - 1.0) * (s + 2.0 * j);
    }
    return {value, std::abs(last)};
}

ModelConstants constants(const OffspringSpec& spec) {
    ModelConstants c{};
    c.regime = spec.regime();
    if (const auto* law = std::get_if<ExplicitLaw>(&spec.law())) {
        double mean = 0.0;
        double factorial2 = 0.0;  // E[X(X-1)]
        for (std::size_t k = 1; k < law->pmf.size(); ++k) {
            const auto x = static_cast<double>(k);
            mean += x * law->pmf[k];
            factorial2 += x * (x - 1.0) * law->pmf[k];
        }
        c.mu = mean;
        c.alpha = 2.0;
        c.beta = 1.0;
        c.sigma2 = factorial2 + mean - mean * mean;
        c.c_alpha = 2.0 * mean * mean / factorial2;
    } else {
        const double alpha = std::get<ZetaTailLaw>(spec.law()).alpha;
        c.mu = zeta_sum(alpha).value;
        c.alpha = alpha;
        c.beta = 1.0 / (alpha - 1.0);
        c.c1 = 1.0;
        const double gamma_1ma = std::tgamma(2.0 - alpha) / (1.0 - alpha);  // negative
        c.abs_gamma_factor = -gamma_1ma;
        const double common = std::pow(*c.c1, -c.beta) * std::pow(c.mu, alpha * c.beta) *
                              std::pow(c.beta, c.beta);
        c.c_alpha = common * std::pow(-gamma_1ma, -c.beta);
        const double signed_factor = std::pow(gamma_1ma, -c.beta);
        if (std::isfinite(signed_factor)) c.c_alpha_signed_gamma = common * signed_factor;
    }
    c.p_c = 1.0 / c.mu;
    return c;
}

nlohmann::json ModelConstants::to_json() const {
    nlohmann::json j = {{"mu", mu},       {"p_c", p_c},   {"regime", to_string(regime)},
                        {"alpha", alpha}, {"beta", beta}, {"C_alpha", c_alpha}};
    if (c1) j["c1"] = *c1;
    if (sigma2) j["sigma2"] = *sigma2;
    if (abs_gamma_factor) {
        j["abs_gamma_1_minus_alpha"] = *abs_gamma_factor;
        j["C_alpha_candidates"] = {
            {"abs_gamma", c_alpha},
            {"signed_gamma", c_alpha_signed_gamma ? nlohmann::json(*c_alpha_signed_gamma)
                                                  : nlohmann::json(nullptr)}};
    }
    return j;
}

}  // namespace gwperc
