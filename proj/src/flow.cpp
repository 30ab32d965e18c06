#include "rft/flow.hpp"

#include <cmath>

#include "rft/error.hpp"

namespace rft {

namespace {

constexpr double kDivergenceGuard = 1e6;

void check_velocity(const Tensor& v, double t, double h) {
    if (!v.all_finite())
        throw NumericError("non-finite velocity at t=" + std::to_string(t) +
                           " (step size h=" + std::to_string(h) + ")");
}

void check_state(const Tensor& z, int step, double t) {
    if (!z.all_finite() || z.max_abs() > kDivergenceGuard)
        throw NumericError("divergence at step " + std::to_string(step) +
                           " (t=" + std::to_string(t) + "): |z|inf=" + std::to_string(z.max_abs()));
}

struct Stepper {
    SolverMethod method;
    std::optional<Tensor> cache;

    Tensor advance(const Tensor& z, double t, double h, const VelocityFn& v) {
        if (method == SolverMethod::euler) return step_euler(z, t, h, v);
        auto [zn, vmid] = step_midpoint_reuse(z, t, h, v, cache);
        cache = std::move(vmid);
        return zn;
    }
};

}  // namespace

const char* solver_name(SolverMethod m) {
    return m == SolverMethod::euler ? "euler" : "midpoint_reuse";
}

SolverMethod solver_from_name(const std::string& name) {
    if (name == "euler") return SolverMethod::euler;
    if (name == "midpoint_reuse" || name == "midpoint") return SolverMethod::midpoint_reuse;
    throw ConfigError("unknown solver '" + name + "' (expected euler|midpoint_reuse)");
}

std::vector<double> SolverSpec::schedule() const {
    if (steps < 1) throw ConfigError("solver: steps must be >= 1");
    if (grid.empty()) {
        std::vector<double> g(static_cast<size_t>(steps) + 1);
        for (int i = 0; i <= steps; ++i) g[static_cast<size_t>(i)] = static_cast<double>(i) / steps;
        g.front() = 0.0;
        g.back() = 1.0;
        return g;
    }
    if (static_cast<int>(grid.size()) != steps + 1)
        throw ConfigError("solver: grid length " + std::to_string(grid.size()) +
                          " does not match steps+1 = " + std::to_string(steps + 1));
    if (grid.front() != 0.0 || grid.back() != 1.0)
        throw ConfigError("solver: grid endpoints must be exactly 0 and 1");
    for (size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw ConfigError("solver: grid must be strictly increasing");
    return grid;
}

Tensor step_euler(const Tensor& z, double t, double h, const VelocityFn& v) {
    if (h == 0.0) throw RangeError("step_euler: h must be nonzero");
    Tensor vel = v(z, t);
    check_velocity(vel, t, h);
    return z + h * vel;
}

std::pair<Tensor, Tensor> step_midpoint_reuse(const Tensor& z, double t, double h,
                                              const VelocityFn& v,
                                              const std::optional<Tensor>& cached_velocity) {
    if (h == 0.0) throw RangeError("step_midpoint_reuse: h must be nonzero");
    const Tensor* probe = cached_velocity ? &*cached_velocity : nullptr;
    Tensor fresh_probe;
    if (!probe) {
        fresh_probe = v(z, t);
        check_velocity(fresh_probe, t, h);
        probe = &fresh_probe;
    }
    Tensor v_mid = v(z + (h / 2.0) * (*probe), t + h / 2.0);
    check_velocity(v_mid, t + h / 2.0, h);
    Tensor zn = z + h * v_mid;
    return {std::move(zn), std::move(v_mid)};
}

Trajectory invert(const Tensor& latent0, const VelocityFn& v, const SolverSpec& spec) {
    if (!latent0.all_finite()) throw RangeError("invert: non-finite input latent");
    std::vector<double> grid = spec.schedule();
    Trajectory traj;
    traj.grid = grid;
    traj.solver_tag = spec.method;
    traj.latents.reserve(grid.size());
    traj.latents.push_back(latent0);

    Stepper stepper{spec.method, std::nullopt};
    Tensor z = latent0;
    for (int i = 0; i < spec.steps; ++i) {
        double t = grid[static_cast<size_t>(i)];
        double h = grid[static_cast<size_t>(i) + 1] - t;
        z = stepper.advance(z, t, h, v);
        check_state(z, i + 1, grid[static_cast<size_t>(i) + 1]);
        traj.latents.push_back(z);
    }
    return traj;
}

Tensor sample(const Tensor& z_n, const SteppedVelocityFn& v, const SolverSpec& spec) {
    if (!z_n.all_finite()) throw RangeError("sample: non-finite input latent");
    std::vector<double> grid = spec.schedule();
    Stepper stepper{spec.method, std::nullopt};
    Tensor z = z_n;
    for (int i = spec.steps; i >= 1; --i) {
        double t = grid[static_cast<size_t>(i)];
        double h = grid[static_cast<size_t>(i) - 1] - t;
        VelocityFn bound = [&v, i](const Tensor& zz, double tt) { return v(zz, tt, i); };
        z = stepper.advance(z, t, h, bound);
        check_state(z, i - 1, grid[static_cast<size_t>(i) - 1]);
    }
    return z;
}

Tensor sample(const Tensor& z_n, const VelocityFn& v, const SolverSpec& spec) {
    return sample(
        z_n, [&v](const Tensor& z, double t, int) { return v(z, t); }, spec);
}

Tensor replay_then_denoise(const Trajectory& traj, int k, const SteppedVelocityFn& v) {
    int n = traj.steps();
    if (k < 0 || k > n)
        throw RangeError("replay_then_denoise: k=" + std::to_string(k) + " outside [0," +
                         std::to_string(n) + "]");
    if (k == 0) return traj.latents[0];
    if (!traj.latents[static_cast<size_t>(k)].all_finite())
        throw RangeError("replay_then_denoise: non-finite trajectory state");
    Stepper stepper{traj.solver_tag, std::nullopt};
    Tensor z = traj.latents[static_cast<size_t>(k)];
    for (int i = k; i >= 1; --i) {
        double t = traj.grid[static_cast<size_t>(i)];
        double h = traj.grid[static_cast<size_t>(i) - 1] - t;
        VelocityFn bound = [&v, i](const Tensor& zz, double tt) { return v(zz, tt, i); };
        z = stepper.advance(z, t, h, bound);
        check_state(z, i - 1, traj.grid[static_cast<size_t>(i) - 1]);
    }
    return z;
}

std::vector<Tensor> replay_then_denoise_traced(const Trajectory& traj, int k,
                                               const SteppedVelocityFn& v) {
    int n = traj.steps();
    if (k < 0 || k > n)
        throw RangeError("replay_then_denoise: k=" + std::to_string(k) + " outside [0," +
                         std::to_string(n) + "]");
    std::vector<Tensor> states(traj.latents.begin(), traj.latents.end());
    Stepper stepper{traj.solver_tag, std::nullopt};
    for (int i = k; i >= 1; --i) {
        double t = traj.grid[static_cast<size_t>(i)];
        double h = traj.grid[static_cast<size_t>(i) - 1] - t;
        VelocityFn bound = [&v, i](const Tensor& zz, double tt) { return v(zz, tt, i); };
        states[static_cast<size_t>(i) - 1] =
            stepper.advance(states[static_cast<size_t>(i)], t, h, bound);
        check_state(states[static_cast<size_t>(i) - 1], i - 1,
                    traj.grid[static_cast<size_t>(i) - 1]);
    }
    return states;
}

}  // namespace rft
