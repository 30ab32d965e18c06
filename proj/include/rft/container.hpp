#pragma once

#include <string>

#include "rft/dit.hpp"
#include "rft/flow.hpp"
#include "rft/fusion.hpp"

namespace rft {

// One little-endian binary container family for trajectories (.traj),
// reference KV caches (.kvc) and model weights, so inversion, capture and
// synthesis can run as separate CLI invocations.

void save_trajectory(const std::string& path, const Trajectory& traj);
Trajectory load_trajectory(const std::string& path);

void save_kv_cache(const std::string& path, const KVCache& cache);
KVCache load_kv_cache(const std::string& path);

void save_weights(const std::string& path, const ModelWeights& weights);
ModelWeights load_weights(const std::string& path);

}  // namespace rft
