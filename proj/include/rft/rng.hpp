#pragma once

#include <cstdint>
#include <numbers>

#include "rft/tensor.hpp"

namespace rft {

// Counter-based generator: every draw is a pure function of (seed, counter),
// so parallel streams stay reproducible regardless of evaluation order.
// Streams for concurrent work should fork distinct states (distinct seeds or
// disjoint counter ranges), never share one RngState.
struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;
};

namespace detail {
// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

inline std::uint64_t rng_u64(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t base = detail::mix64(seed ^ 0x9e3779b97f4a7c15ULL);
    return detail::mix64(base + (counter + 1) * 0x9e3779b97f4a7c15ULL);
}

// Uniform in the open interval (0,1); never 0, so log() below is safe.
inline double rng_uniform(std::uint64_t seed, std::uint64_t counter) {
    return (static_cast<double>(rng_u64(seed, counter) >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal via Box-Muller (cosine branch); exactly two uniforms per
// element, so the counter advance is shape-determined. Bit-identical within a
// platform; across platforms exact up to the libm log/cos rounding.
inline double rng_normal_at(std::uint64_t seed, std::uint64_t counter) {
    double u1 = rng_uniform(seed, counter);
    double u2 = rng_uniform(seed, counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline Tensor rng_normal(RngState& state, Shape shape) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.numel(); ++i)
        t[i] = rng_normal_at(state.seed, state.counter + 2 * static_cast<std::uint64_t>(i));
    state.counter += 2 * static_cast<std::uint64_t>(t.numel());
    return t;
}

}  // namespace rft
