#include "rft/fusion.hpp"

#include <algorithm>

#include "rft/appearance.hpp"
#include "rft/error.hpp"
#include "rft/ops.hpp"

namespace rft {

namespace {

// Token-dimension concatenation of heads x T x hd tensors; b may be empty.
Tensor concat_kv(const Tensor& a, const Tensor& b) {
    if (b.numel() == 0) return a;
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
        throw DimensionError("expand_attention: cache entry " + shape_str(b.shape()) +
                             " incompatible with site " + shape_str(a.shape()));
    Index heads = a.dim(0), hd = a.dim(2);
    Index ta = a.dim(1), tb = b.dim(1);
    Tensor out({heads, ta + tb, hd});
    for (Index h = 0; h < heads; ++h) {
        std::copy_n(a.data() + h * ta * hd, ta * hd, out.data() + h * (ta + tb) * hd);
        std::copy_n(b.data() + h * tb * hd, tb * hd, out.data() + (h * (ta + tb) + ta) * hd);
    }
    return out;
}

}  // namespace

void KVCache::put(int layer_id, int step_index, KVEntry entry) {
    entries_[{layer_id, step_index}] = std::move(entry);
}

bool KVCache::contains(int layer_id, int step_index) const {
    return entries_.count({layer_id, step_index}) > 0;
}

const KVEntry& KVCache::at(int layer_id, int step_index) const {
    auto it = entries_.find({layer_id, step_index});
    if (it == entries_.end())
        throw ConfigError("kv cache miss: layer " + std::to_string(layer_id) + ", step " +
                          std::to_string(step_index));
    return it->second;
}

Index KVCache::ref_tokens() const {
    if (entries_.empty()) return 0;
    return entries_.begin()->second.k.dim(1);
}

std::vector<std::uint8_t> token_gate_from_mask(const Tensor& mask_values, Index patch,
                                               double tau) {
    PatchWeights pw = patch_coverage(Mask::source_edit_region(mask_values), patch, 0.0);
    std::vector<std::uint8_t> gate(static_cast<size_t>(pw.w.numel()));
    for (Index j = 0; j < pw.w.numel(); ++j)
        gate[static_cast<size_t>(j)] = pw.w[j] >= tau ? 1 : 0;
    return gate;
}

KVCache capture_reference_kv(const Trajectory& traj_ref, const ModelWeights& weights,
                             const ConditionBundle& cond_ref, const std::set<int>& selected_layers,
                             const std::vector<std::uint8_t>& kv_gate) {
    const ModelConfig& cfg = weights.config;
    for (int layer : selected_layers)
        if (layer < 0 || layer >= cfg.n_layers())
            throw ConfigError("capture: layer " + std::to_string(layer) +
                              " is not an attention site (have 0.." +
                              std::to_string(cfg.n_layers() - 1) + ")");
    if (static_cast<Index>(kv_gate.size()) != cfg.n_image_tokens())
        throw DimensionError("capture: kv_gate length " + std::to_string(kv_gate.size()) +
                             " vs image tokens " + std::to_string(cfg.n_image_tokens()));

    std::vector<Index> kept;
    for (Index j = 0; j < cfg.n_image_tokens(); ++j)
        if (kv_gate[static_cast<size_t>(j)]) kept.push_back(j);

    KVCache cache;
    cache.steps = traj_ref.steps();
    cache.layers.assign(selected_layers.begin(), selected_layers.end());
    cache.token_gate = kv_gate;

    for (int i = 0; i <= traj_ref.steps(); ++i) {
        HookSet hooks;
        hooks.capture.push_back([&](const AttentionTensors& site) {
            if (!selected_layers.count(site.layer_id)) return;
            Index heads = site.k.dim(0), hd = site.k.dim(2);
            KVEntry entry{Tensor({heads, static_cast<Index>(kept.size()), hd}),
                          Tensor({heads, static_cast<Index>(kept.size()), hd})};
            for (Index h = 0; h < heads; ++h)
                for (size_t r = 0; r < kept.size(); ++r) {
                    Index src_tok = site.cond_tokens + kept[r];
                    std::copy_n(site.k.data() + (h * site.k.dim(1) + src_tok) * hd, hd,
                                entry.k.data() + (h * static_cast<Index>(kept.size()) +
                                                  static_cast<Index>(r)) * hd);
                    std::copy_n(site.v.data() + (h * site.v.dim(1) + src_tok) * hd, hd,
                                entry.v.data() + (h * static_cast<Index>(kept.size()) +
                                                  static_cast<Index>(r)) * hd);
                }
            cache.put(site.layer_id, i, std::move(entry));
        });
        ConditionBundle cond_i = cond_ref.with_timestep(traj_ref.grid[static_cast<size_t>(i)]);
        forward_velocity(traj_ref.latents[static_cast<size_t>(i)], cond_i, weights, hooks);
    }
    return cache;
}

Tensor expand_attention(const AttentionTensors& site, const KVEntry& entry,
                        const std::vector<std::uint8_t>& query_gate_seq) {
    Index tokens = site.q.dim(1);
    if (static_cast<Index>(query_gate_seq.size()) != tokens)
        throw DimensionError("expand_attention: gate length " +
                             std::to_string(query_gate_seq.size()) + " vs " +
                             std::to_string(tokens) + " tokens");
    if (entry.k.numel() > 0 && entry.k.dim(2) != site.k.dim(2))
        throw DimensionError("expand_attention: head_dim " + std::to_string(entry.k.dim(2)) +
                             " vs site " + std::to_string(site.k.dim(2)));

    Tensor out = multihead_attention(site.q, site.k, site.v, site.scale);
    bool any_gated = std::any_of(query_gate_seq.begin(), query_gate_seq.end(),
                                 [](std::uint8_t g) { return g != 0; });
    if (!any_gated || entry.k.numel() == 0 || entry.k.dim(1) == 0) return out;

    Tensor expanded = multihead_attention(site.q, concat_kv(site.k, entry.k),
                                          concat_kv(site.v, entry.v), site.scale);
    Index heads = out.dim(0), hd = out.dim(2);
    for (Index t = 0; t < tokens; ++t)
        if (query_gate_seq[static_cast<size_t>(t)])
            for (Index h = 0; h < heads; ++h)
                std::copy_n(expanded.data() + (h * tokens + t) * hd, hd,
                            out.data() + (h * tokens + t) * hd);
    return out;
}

HookSet make_fusion_hooks(const KVCache& cache, const FusionConfig& cfg, int step_index) {
    HookSet hooks;
    if (!cfg.enabled) return hooks;
    if (step_index < 0 || step_index > cache.steps)
        throw RangeError("make_fusion_hooks: step " + std::to_string(step_index) +
                         " outside grid 0.." + std::to_string(cache.steps));
    // The cache is captured by reference (it is frozen and outlives the
    // hooks); gate settings are copied so the config may be a temporary.
    bool gate_queries = cfg.gate_queries;
    std::vector<std::uint8_t> query_gate = cfg.query_gate;
    for (int layer : cache.layers) {
        hooks.overrides[layer] = [&cache, gate_queries, query_gate,
                                  step_index](const AttentionTensors& site) {
            const KVEntry& entry = cache.at(site.layer_id, step_index);
            Index tokens = site.q.dim(1);
            std::vector<std::uint8_t> gate(static_cast<size_t>(tokens), 0);
            Index n_img = tokens - site.cond_tokens;
            for (Index j = 0; j < n_img; ++j) {
                bool g = !gate_queries || (j < static_cast<Index>(query_gate.size()) &&
                                           query_gate[static_cast<size_t>(j)]);
                gate[static_cast<size_t>(site.cond_tokens + j)] = g ? 1 : 0;
            }
            return expand_attention(site, entry, gate);
        };
    }
    return hooks;
}

}  // namespace rft
