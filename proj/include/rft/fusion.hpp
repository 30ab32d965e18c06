#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "rft/dit.hpp"
#include "rft/flow.hpp"
#include "rft/tensor.hpp"

namespace rft {

// Attention context expansion: Key/Value tensors captured from the reference
// stream's inversion are concatenated into the K/V context of selected layers
// during source synthesis. Queries are never touched.

struct KVEntry {
    Tensor k;  // heads x n_ref_tokens x head_dim
    Tensor v;  // same shape
};

class KVCache {
public:
    int steps = 0;                            // grid has steps + 1 indices
    std::vector<int> layers;                  // selected layer ids, sorted
    std::vector<std::uint8_t> token_gate;     // per image token; provenance of capture

    void put(int layer_id, int step_index, KVEntry entry);
    bool contains(int layer_id, int step_index) const;
    // Cache miss raises a config error naming the key.
    const KVEntry& at(int layer_id, int step_index) const;
    size_t entry_count() const { return entries_.size(); }
    Index ref_tokens() const;  // token count per entry (uniform)

    const std::map<std::pair<int, int>, KVEntry>& entries() const { return entries_; }

private:
    std::map<std::pair<int, int>, KVEntry> entries_;
};

struct FusionConfig {
    bool enabled = true;
    std::set<int> selected_layers;          // empty means the default rule
    int k = -1;                             // replay cutoff; -1 means n/2
    double tau = 0.5;                       // patch-coverage threshold for gates
    bool gate_queries = true;               // confine expansion to edit-region queries
    bool confine_updates = true;            // re-anchor non-edit cells every free step
    std::vector<std::uint8_t> query_gate;   // per image token, from M_src
    std::vector<std::uint8_t> kv_gate;      // per image token, from M_ref
};

// Per-image-token gate: patch coverage of the mask >= tau.
std::vector<std::uint8_t> token_gate_from_mask(const Tensor& mask_values, Index patch, double tau);

// Evaluates the network along the reference trajectory with capture hooks and
// stores K/V rows of gated image tokens for every selected layer at every
// grid index (entry count = |selected_layers| * (n + 1)).
KVCache capture_reference_kv(const Trajectory& traj_ref, const ModelWeights& weights,
                             const ConditionBundle& cond_ref, const std::set<int>& selected_layers,
                             const std::vector<std::uint8_t>& kv_gate);

// Gated queries attend over [K_src | K_ref] / [V_src | V_ref]; ungated ones
// see the vanilla context and reproduce it bit-for-bit. query_gate_seq runs
// over the site's full token sequence (conditioning prefix + image tokens).
Tensor expand_attention(const AttentionTensors& site, const KVEntry& entry,
                        const std::vector<std::uint8_t>& query_gate_seq);

// Hook set intercepting exactly the selected layers at one step.
HookSet make_fusion_hooks(const KVCache& cache, const FusionConfig& cfg, int step_index);

}  // namespace rft
