#include "rft/analytic.hpp"

#include <algorithm>
#include <cmath>

#include "rft/error.hpp"

namespace rft {

namespace {
void require_unit_interval(double t, const char* who) {
    if (!(t >= 0.0 && t <= 1.0))
        throw RangeError(std::string(who) + ": t = " + std::to_string(t) + " outside [0,1]");
}
}  // namespace

double gaussian_s(double t, double a) {
    double u = 1.0 - t;
    return u * u * a * a + t * t;
}

double gaussian_velocity_coeff(double t, double a) {
    return (t - (1.0 - t) * a * a) / gaussian_s(t, a);
}

Tensor gaussian_velocity(const Tensor& z, double t, double a) {
    require_unit_interval(t, "gaussian_velocity");
    if (a <= 0.0) throw RangeError("gaussian_velocity: a must be positive");
    return gaussian_velocity_coeff(t, a) * z;
}

Tensor gaussian_exact_map(const Tensor& z0, double t0, double t1, double a) {
    require_unit_interval(t0, "gaussian_exact_map");
    require_unit_interval(t1, "gaussian_exact_map");
    if (a <= 0.0) throw RangeError("gaussian_exact_map: a must be positive");
    return std::sqrt(gaussian_s(t1, a) / gaussian_s(t0, a)) * z0;
}

void MixtureFlow::validate() const {
    if (components.empty()) throw ConfigError("mixture: no components");
    if (!(sigma > 0.0)) throw ConfigError("mixture: sigma must be positive");
    double total = 0.0;
    for (const auto& c : components) {
        if (!(c.weight > 0.0)) throw ConfigError("mixture: component weight must be positive");
        if (!c.mean.same_shape(components.front().mean))
            throw DimensionError("mixture: component mean shapes differ");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("mixture: weights sum to " + std::to_string(total) + ", expected 1");
}

std::vector<double> mixture_responsibilities(const Tensor& z, double t, const MixtureFlow& flow) {
    flow.validate();
    require_unit_interval(t, "mixture_responsibilities");
    double s = gaussian_s(t, flow.sigma);
    // log pi_c - |z - (1-t) mu_c|^2 / (2 s); the shared normalizer cancels.
    std::vector<double> logw(flow.components.size());
    for (size_t c = 0; c < flow.components.size(); ++c) {
        const auto& comp = flow.components[c];
        if (!comp.mean.same_shape(z))
            throw DimensionError("mixture_responsibilities: z shape " + shape_str(z.shape()) +
                                 " vs mean shape " + shape_str(comp.mean.shape()));
        double sq = (z.array() - (1.0 - t) * comp.mean.array()).square().sum();
        logw[c] = std::log(comp.weight) - sq / (2.0 * s);
    }
    double m = *std::max_element(logw.begin(), logw.end());
    double denom = 0.0;
    for (double lw : logw) denom += std::exp(lw - m);
    std::vector<double> r(logw.size());
    for (size_t c = 0; c < logw.size(); ++c) r[c] = std::exp(logw[c] - m) / denom;
    return r;
}

Tensor mixture_velocity(const Tensor& z, double t, const MixtureFlow& flow) {
    std::vector<double> r = mixture_responsibilities(z, t, flow);
    double g = gaussian_velocity_coeff(t, flow.sigma);
    Tensor v(z.shape());
    for (size_t c = 0; c < flow.components.size(); ++c) {
        const Tensor& mu = flow.components[c].mean;
        v.array() += r[c] * (g * (z.array() - (1.0 - t) * mu.array()) - mu.array());
    }
    return v;
}

}  // namespace rft
