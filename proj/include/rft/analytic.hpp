#pragma once

#include <vector>

#include "rft/tensor.hpp"

namespace rft {

// Closed-form rectified-flow fields under the interpolation
// z_t = (1-t) x + t eps with eps ~ N(0, I). They provide exact flow maps for
// solver order measurements and a tiny generative model for end-to-end demos.

// Data ~ N(0, a^2 I). The marginal velocity is linear in z:
//   v(z,t) = c(t) z,  c(t) = (t - (1-t) a^2) / s(t),  s(t) = (1-t)^2 a^2 + t^2.
// c(t) = s'(t) / (2 s(t)), so trajectories scale by sqrt(s(t1)/s(t0)).
struct GaussianFlow {
    double a = 1.0;  // data standard deviation, > 0
};

double gaussian_s(double t, double a);
double gaussian_velocity_coeff(double t, double a);
Tensor gaussian_velocity(const Tensor& z, double t, double a);
Tensor gaussian_exact_map(const Tensor& z0, double t0, double t1, double a);

// Data ~ sum_c pi_c N(mu_c, sigma^2 I), shared sigma. The marginal velocity is
// the responsibility-weighted blend of per-component conditional velocities:
//   v_c(z,t) = g(t) (z - (1-t) mu_c) - mu_c,  g(t) = (t - (1-t) sigma^2) / s(t)
// with s(t) = (1-t)^2 sigma^2 + t^2; responsibilities use log-sum-exp.
struct MixtureComponent {
    Tensor mean;
    double weight = 1.0;
};

struct MixtureFlow {
    std::vector<MixtureComponent> components;
    double sigma = 0.1;

    void validate() const;
};

std::vector<double> mixture_responsibilities(const Tensor& z, double t, const MixtureFlow& flow);
Tensor mixture_velocity(const Tensor& z, double t, const MixtureFlow& flow);

}  // namespace rft
