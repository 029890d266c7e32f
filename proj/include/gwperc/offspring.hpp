#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace gwperc {

/// Explicit pmf on {1, ..., k_max}; `pmf[k]` is P(X = k) and `pmf[0] == 0`.
struct ExplicitLaw {
    std::vector<double> pmf;
};

/// P(X >= k) = k^{-alpha} for integer k >= 1, alpha in (1, 2).
struct ZetaTailLaw {
    double alpha;
};

enum class Regime { FiniteVariance, StableTail };

std::string to_string(Regime regime);

/// A validated offspring law without leaves and with mean > 1. Cheap to
/// copy: the sampling tables are shared and immutable.
class OffspringSpec {
public:
    using Law = std::variant<ExplicitLaw, ZetaTailLaw>;

    /// Keys are support points, values probabilities. Zero-probability
    /// entries are dropped; p(0) > 0 is rejected.
    static OffspringSpec explicit_law(const std::map<std::uint64_t, double>& pmf);
    static OffspringSpec zeta_tail(double alpha);

    const Law& law() const noexcept { return law_; }
    Regime regime() const noexcept { return regime_; }
    bool is_explicit() const noexcept { return std::holds_alternative<ExplicitLaw>(law_); }

    /// P(X = k).
    double pmf(std::uint64_t k) const;
    /// P(X >= k).
    double tail(std::uint64_t k) const;

    /// Inverse-CDF draw from a uniform on [0, 1).
    std::uint64_t sample_from_uniform(double u) const noexcept;

    /// Largest support point for explicit laws with at most kSmallSupport
    /// points, 0 otherwise. For such laws `small_cdf()` lists P(X <= j) for
    /// j < k_max and the draw is #{j : small_cdf()[j] <= u}, the same value
    /// sample_from_uniform returns, computed without branches.
    static constexpr std::uint64_t kSmallSupport = 8;
    std::uint64_t small_support() const noexcept;
    const double* small_cdf() const noexcept;

    template <class Rng>
    std::uint64_t sample(Rng& rng) const {
        return sample_from_uniform(static_cast<double>(rng() >> 11) * 0x1.0p-53);
    }

    nlohmann::json to_json() const;

    friend bool operator==(const OffspringSpec& a, const OffspringSpec& b);

    /// Inverse-CDF table size for the zeta-tail law.
    static constexpr std::uint64_t kTableSize = std::uint64_t{1} << 16;

private:
    struct Tables;
    static void build_guide(Tables& t);

    OffspringSpec(Law law, Regime regime, std::shared_ptr<const Tables> tables);

    Law law_;
    Regime regime_;
    std::shared_ptr<const Tables> tables_;
};

/// Parses `{"kind":"explicit","pmf":{"1":0.8,"2":0.2}}` or
/// `{"kind":"zeta_tail","alpha":1.5}`.
OffspringSpec make_spec(const nlohmann::json& config);

struct ModelConstants {
    double mu;
    double p_c;
    Regime regime;
    double alpha;
    double beta;
    std::optional<double> c1;      // StableTail only
    std::optional<double> sigma2;  // FiniteVariance only
    double c_alpha;
    // StableTail only: C_alpha with Gamma(1 - alpha) taken literally (signed).
    // Empty when the negative base meets a non-integer beta.
    std::optional<double> c_alpha_signed_gamma;
    // StableTail only: |Gamma(1 - alpha)| = Gamma(2 - alpha) / (alpha - 1).
    std::optional<double> abs_gamma_factor;

    nlohmann::json to_json() const;
    friend bool operator==(const ModelConstants&, const ModelConstants&) = default;
};

ModelConstants constants(const OffspringSpec& spec);

struct SeriesValue {
    double value;
    double error_bound;
};

/// Riemann zeta by direct summation plus an Euler-Maclaurin remainder.
SeriesValue zeta_sum(double s);

}  // namespace gwperc
