#include "gwperc/limit_laws.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gwperc/errors.hpp"

namespace gwperc {

namespace {

void require_nonnegative(double value, const char* name) {
    if (!(value >= 0.0)) throw DomainError(std::string(name) + " must be >= 0, got " + std::to_string(value));
}

}  // namespace

LimitLaw::LimitLaw(const ModelConstants& constants) : constants_(constants) {
    if (!(constants_.c_alpha > 0.0) || !(constants_.alpha > 1.0 && constants_.alpha <= 2.0))
        throw DomainError("limit law needs C_alpha > 0 and alpha in (1, 2]");
}

double LimitLaw::log_scaled_u1(double theta) const {
    const double x = theta / constants_.c_alpha;
    const double y = std::pow(x, constants_.alpha - 1.0);
    return std::log(x) - constants_.beta * std::log1p(y);
}

double LimitLaw::phi(double theta) const {
    require_nonnegative(theta, "theta");
    if (theta == 0.0) return 1.0;
    return -std::expm1(log_scaled_u1(theta));
}

double LimitLaw::one_minus_phi(double theta) const {
    require_nonnegative(theta, "theta");
    if (theta == 0.0) return 0.0;
    return std::exp(log_scaled_u1(theta));
}

double LimitLaw::phi_prime(double theta) const {
    require_nonnegative(theta, "theta");
    const double y = std::pow(theta / constants_.c_alpha, constants_.alpha - 1.0);
    return -std::exp(-(constants_.beta + 1.0) * std::log1p(y)) / constants_.c_alpha;
}

double LimitLaw::u(double t, double lambda) const {
    require_nonnegative(t, "t");
    require_nonnegative(lambda, "lambda");
    if (lambda == 0.0) return 0.0;
    const double y = std::pow(lambda / constants_.c_alpha, constants_.alpha - 1.0);
    return lambda * std::exp(-constants_.beta * std::log1p(y * t));
}

double LimitLaw::psi(double lambda) const {
    require_nonnegative(lambda, "lambda");
    return constants_.beta * std::pow(constants_.c_alpha, 1.0 - constants_.alpha) *
           std::pow(lambda, constants_.alpha);
}

double LimitLaw::csbp_transition_lt(double a, double dt, double theta) const {
    require_nonnegative(a, "a");
    require_nonnegative(theta, "theta");
    if (!(dt > 0.0)) throw DomainError("dt must be > 0");
    if (a == 0.0 || theta == 0.0) return 1.0;
    const double exponent = a * constants_.c_alpha * std::pow(dt, -constants_.beta) *
                            one_minus_phi(theta * std::pow(dt, constants_.beta));
    return std::clamp(std::exp(-exponent), 0.0, 1.0);
}

double LimitLaw::csbp_transition_lt_flow(double a, double dt, double theta) const {
    require_nonnegative(a, "a");
    if (!(dt > 0.0)) throw DomainError("dt must be > 0");
    return std::exp(-a * u(dt, theta));
}

double LimitLaw::csbp_extinction(double a, double dt) const {
    require_nonnegative(a, "a");
    if (!(dt > 0.0)) throw DomainError("dt must be > 0");
    return std::exp(-a * constants_.c_alpha * std::pow(dt, -constants_.beta));
}

double LimitLaw::size_biased_lt(double theta) const {
    require_nonnegative(theta, "theta");
    const double y = std::pow(theta / constants_.c_alpha, constants_.alpha - 1.0);
    return std::exp(-(constants_.beta + 1.0) * std::log1p(y));
}

double LimitLaw::size_biased_mean() const {
    if (constants_.regime == Regime::FiniteVariance) return 2.0 / constants_.c_alpha;
    return std::numeric_limits<double>::infinity();
}

}  // namespace gwperc
