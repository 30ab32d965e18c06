#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rft/tensor.hpp"

namespace rft {

// Rectified-flow integration over the grid t_0 = 0 < ... < t_n = 1, with the
// data-side latent at t = 0 and the noise-side latent at t = 1. Inversion
// integrates t: 0 -> 1 and records every state; sampling integrates t: 1 -> 0.

enum class SolverMethod { euler, midpoint_reuse };

const char* solver_name(SolverMethod m);
SolverMethod solver_from_name(const std::string& name);

struct SolverSpec {
    SolverMethod method = SolverMethod::midpoint_reuse;
    int steps = 64;
    // Optional explicit grid; empty means uniform. Must be strictly
    // increasing with endpoints exactly 0 and 1, length steps + 1.
    std::vector<double> grid;

    static SolverSpec uniform(SolverMethod method, int steps) {
        SolverSpec s;
        s.method = method;
        s.steps = steps;
        return s;
    }

    // Materialized, validated timestep grid.
    std::vector<double> schedule() const;
};

// Recorded inversion path. latents[i] lives at grid[i]; latents[0] is the
// data-side input, latents[n] the noise-side endpoint.
struct Trajectory {
    std::vector<Tensor> latents;
    std::vector<double> grid;
    SolverMethod solver_tag = SolverMethod::midpoint_reuse;

    int steps() const { return static_cast<int>(latents.size()) - 1; }
};

using VelocityFn = std::function<Tensor(const Tensor& z, double t)>;

// Step-aware field for sampling: step_index is the grid index of the state
// the step starts from, which lets callers bind per-step attention hooks.
using SteppedVelocityFn = std::function<Tensor(const Tensor& z, double t, int step_index)>;

// z' = z + h v(z, t). Negative h integrates toward data.
Tensor step_euler(const Tensor& z, double t, double h, const VelocityFn& v);

// Midpoint rule with velocity reuse: the midpoint probe uses the previous
// step's midpoint velocity when available (one fresh evaluation per step
// after the first), else a fresh evaluation at (z, t). Returns the midpoint
// velocity for the next step's probe. Second-order accurate at first-order
// cost: n steps take n + 1 evaluations.
std::pair<Tensor, Tensor> step_midpoint_reuse(const Tensor& z, double t, double h,
                                              const VelocityFn& v,
                                              const std::optional<Tensor>& cached_velocity);

// Integrate t: 0 -> 1 from latent0, recording all n + 1 states.
Trajectory invert(const Tensor& latent0, const VelocityFn& v, const SolverSpec& spec);

// Integrate t: 1 -> 0 from z_n. The stepped overload forwards the grid index
// of each step's start state into the field.
Tensor sample(const Tensor& z_n, const SteppedVelocityFn& v, const SolverSpec& spec);
Tensor sample(const Tensor& z_n, const VelocityFn& v, const SolverSpec& spec);

// Blended replay: states at grid indices n..k are taken verbatim from the
// trajectory (no integration, no field evaluations); free integration runs
// from latents[k] down to t = 0. k = 0 returns latents[0] bit-exactly.
Tensor replay_then_denoise(const Trajectory& traj, int k, const SteppedVelocityFn& v);

// Same, returning every state indexed by grid position (size n + 1,
// result[i] at grid[i]; result[i] == traj.latents[i] for i >= k).
std::vector<Tensor> replay_then_denoise_traced(const Trajectory& traj, int k,
                                               const SteppedVelocityFn& v);

}  // namespace rft
