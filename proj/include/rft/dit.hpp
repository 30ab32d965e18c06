#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "rft/tensor.hpp"

namespace rft {

// Toy FLUX-shaped velocity network: patchify -> n_double double-stream blocks
// (image and conditioning tokens with separate weights attending jointly) ->
// n_single single-stream blocks (concatenated sequence) -> unpatchify. Every
// attention site exposes capture/override hooks.

struct ModelConfig {
    Index d_model = 64;
    Index n_heads = 4;
    Index patch = 2;
    Index n_double = 4;
    Index n_single = 4;
    Index latent_hw = 16;
    Index latent_channels = 3;
    Index cond_channels = 2;  // depth + edit-region channels

    Index head_dim() const { return d_model / n_heads; }
    Index grid_side() const { return latent_hw / patch; }
    Index n_image_tokens() const { return grid_side() * grid_side(); }
    Index patch_in_dim() const { return (latent_channels + cond_channels) * patch * patch; }
    Index patch_out_dim() const { return latent_channels * patch * patch; }
    Index mlp_hidden() const { return 4 * d_model; }
    int n_layers() const { return static_cast<int>(n_double + n_single); }

    void validate() const;
};

// One attention+MLP weight stream (no biases).
struct StreamWeights {
    Tensor w_qkv;   // d x 3d
    Tensor w_out;   // d x d
    Tensor w_mlp1;  // d x hidden
    Tensor w_mlp2;  // hidden x d
};

struct DoubleBlockWeights {
    StreamWeights img;
    StreamWeights cond;
};

struct ModelWeights {
    ModelConfig config;
    Tensor patch_embed;  // patch_in_dim x d
    Tensor unpatch;      // d x patch_out_dim
    Tensor cond_proj;    // d x d, applied to appearance tokens
    Tensor time_mlp1;    // d x d
    Tensor time_mlp2;    // d x d
    std::vector<DoubleBlockWeights> double_blocks;
    std::vector<StreamWeights> single_blocks;

    // Scaled-Gaussian init (std 1/sqrt(d_model)) from a counter-based stream,
    // so a (config, seed) pair is fully reproducible.
    static ModelWeights init(const ModelConfig& config, std::uint64_t seed);
};

// Per-step conditioning. depth/region ride along as input channels; the
// appearance tokens (may be 0 x d_model) join the conditioning stream.
struct ConditionBundle {
    Tensor depth;              // latent_hw x latent_hw, values in [0,1]
    Tensor region;             // latent_hw x latent_hw, values in [0,1]
    Tensor appearance_tokens;  // N_ctx x d_model
    double timestep = 0.0;

    ConditionBundle with_timestep(double t) const {
        ConditionBundle b = *this;
        b.timestep = t;
        return b;
    }
    void validate(const ModelConfig& config) const;
};

// View of one attention site handed to hooks. Token layout along dim 1 is
// [conditioning tokens | image tokens]; q/k/v are heads x tokens x head_dim.
struct AttentionTensors {
    int layer_id;
    Index cond_tokens;
    const Tensor& q;
    const Tensor& k;
    const Tensor& v;
    double scale;
};

using CaptureHook = std::function<void(const AttentionTensors&)>;
// Replaces the scaled-dot-product attention at a site; must return
// heads x tokens x head_dim with the site's token count.
using AttentionOverride = std::function<Tensor(const AttentionTensors&)>;

struct HookSet {
    std::vector<CaptureHook> capture;
    std::map<int, AttentionOverride> overrides;  // keyed by layer_id

    bool empty() const { return capture.empty() && overrides.empty(); }
};

// latent [C x H x W] -> tokens [N x C*patch^2], patches in raster order,
// features ordered channel-major then row then column within the patch.
Tensor patchify(const Tensor& latent, Index patch);
Tensor unpatchify(const Tensor& tokens, Index channels, Index height, Index width, Index patch);

struct AttentionSite {
    enum class Stream { double_stream, single_stream };
    Stream stream;
    Index block_index;
    int layer_id;  // double blocks 0..n_double-1, then single blocks
};

std::vector<AttentionSite> enumerate_attention_sites(const ModelConfig& config);

// First two and last two blocks of each stream.
std::set<int> default_selected_layers(const ModelConfig& config);

// Velocity field v(z, t, cond). Deterministic; same shape as z; capture hooks
// are read-only and never change the output.
Tensor forward_velocity(const Tensor& z, const ConditionBundle& cond, const ModelWeights& weights,
                        const HookSet& hooks = {});

}  // namespace rft
