#include "rft/dit.hpp"

#include <cmath>

#include "rft/error.hpp"
#include "rft/ops.hpp"
#include "rft/rng.hpp"

namespace rft {

namespace {

constexpr double kLnEps = 1e-6;

Tensor ln_tokens(const Tensor& x, Index d) {
    if (x.dim(0) == 0) return x;
    return layer_norm(x, Tensor::full({d}, 1.0), Tensor::zeros({d}), kLnEps);
}

// [T x d] -> [heads x T x head_dim]
Tensor split_heads(const Tensor& x, Index heads) {
    Index tokens = x.dim(0), d = x.dim(1), hd = d / heads;
    Tensor out({heads, tokens, hd});
    for (Index h = 0; h < heads; ++h)
        for (Index t = 0; t < tokens; ++t)
            for (Index j = 0; j < hd; ++j) out.at(h, t, j) = x.at(t, h * hd + j);
    return out;
}

// [heads x T x head_dim] -> [T x d]
Tensor merge_heads(const Tensor& x) {
    Index heads = x.dim(0), tokens = x.dim(1), hd = x.dim(2);
    Tensor out({tokens, heads * hd});
    for (Index h = 0; h < heads; ++h)
        for (Index t = 0; t < tokens; ++t)
            for (Index j = 0; j < hd; ++j) out.at(t, h * hd + j) = x.at(h, t, j);
    return out;
}

// Rows [a ; b] along the token dimension of heads x T x hd tensors.
Tensor concat_tokens(const Tensor& a, const Tensor& b) {
    Index heads = a.dim(0), hd = a.dim(2);
    Index ta = a.dim(1), tb = b.dim(1);
    Tensor out({heads, ta + tb, hd});
    for (Index h = 0; h < heads; ++h) {
        std::copy_n(a.data() + h * ta * hd, ta * hd, out.data() + h * (ta + tb) * hd);
        std::copy_n(b.data() + h * tb * hd, tb * hd, out.data() + (h * (ta + tb) + ta) * hd);
    }
    return out;
}

Tensor token_slice(const Tensor& x, Index begin, Index count) {
    Index heads = x.dim(0), tokens = x.dim(1), hd = x.dim(2);
    Tensor out({heads, count, hd});
    for (Index h = 0; h < heads; ++h)
        std::copy_n(x.data() + (h * tokens + begin) * hd, count * hd, out.data() + h * count * hd);
    return out;
}

struct QkvSplit {
    Tensor q, k, v;  // each heads x T x head_dim
};

QkvSplit project_qkv(const Tensor& tokens, const StreamWeights& w, Index heads) {
    Index t = tokens.dim(0), d = tokens.dim(1);
    Tensor qkv = matmul(tokens, w.w_qkv);  // T x 3d
    Tensor q({t, d}), k({t, d}), v({t, d});
    for (Index i = 0; i < t; ++i)
        for (Index j = 0; j < d; ++j) {
            q.at(i, j) = qkv.at(i, j);
            k.at(i, j) = qkv.at(i, d + j);
            v.at(i, j) = qkv.at(i, 2 * d + j);
        }
    return {split_heads(q, heads), split_heads(k, heads), split_heads(v, heads)};
}

Tensor mlp(const Tensor& x, const StreamWeights& w) {
    return matmul(gelu(matmul(x, w.w_mlp1)), w.w_mlp2);
}

// Sinusoidal timestep features through a two-layer MLP, added to all tokens.
Tensor timestep_embedding(double t, const ModelWeights& w) {
    Index d = w.config.d_model;
    Index half = d / 2;
    Tensor feats({1, d});
    double ts = 1000.0 * t;
    for (Index i = 0; i < half; ++i) {
        double omega = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                static_cast<double>(half));
        feats.at(0, i) = std::sin(ts * omega);
        feats.at(0, half + i) = std::cos(ts * omega);
    }
    return matmul(gelu(matmul(feats, w.time_mlp1)), w.time_mlp2);  // 1 x d
}

void add_row_inplace(Tensor& tokens, const Tensor& row) {
    Index t = tokens.dim(0), d = tokens.dim(1);
    for (Index i = 0; i < t; ++i)
        for (Index j = 0; j < d; ++j) tokens.at(i, j) += row.at(0, j);
}

// One attention evaluation with hook dispatch.
Tensor attend_site(int layer_id, Index cond_tokens, const QkvSplit& qkv, double scale,
                   const HookSet& hooks) {
    AttentionTensors site{layer_id, cond_tokens, qkv.q, qkv.k, qkv.v, scale};
    for (const auto& cap : hooks.capture) cap(site);
    auto it = hooks.overrides.find(layer_id);
    if (it != hooks.overrides.end()) {
        Tensor out = it->second(site);
        if (out.rank() != 3 || out.dim(0) != qkv.q.dim(0) || out.dim(1) != qkv.q.dim(1) ||
            out.dim(2) != qkv.q.dim(2))
            throw DimensionError("attention override returned " + shape_str(out.shape()) +
                                 " for site expecting " + shape_str(qkv.q.shape()));
        return out;
    }
    return multihead_attention(qkv.q, qkv.k, qkv.v, scale);
}

}  // namespace

void ModelConfig::validate() const {
    if (d_model <= 0 || n_heads <= 0 || patch <= 0 || latent_hw <= 0 || latent_channels <= 0)
        throw ConfigError("model: non-positive dimension");
    if (d_model % n_heads != 0) throw ConfigError("model: d_model must divide by n_heads");
    if (latent_hw % patch != 0) throw ConfigError("model: latent_hw must divide by patch");
    if (n_double < 4 || n_single < 4)
        throw ConfigError("model: need at least 4 blocks per stream for layer selection");
    if (cond_channels < 2) throw ConfigError("model: cond_channels must carry depth and region");
}

ModelWeights ModelWeights::init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    double std_dev = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    RngState state{seed, 0};
    auto gaussian = [&](Shape shape) { return std_dev * rng_normal(state, std::move(shape)); };
    auto stream = [&]() {
        StreamWeights w;
        w.w_qkv = gaussian({config.d_model, 3 * config.d_model});
        w.w_out = gaussian({config.d_model, config.d_model});
        w.w_mlp1 = gaussian({config.d_model, config.mlp_hidden()});
        w.w_mlp2 = gaussian({config.mlp_hidden(), config.d_model});
        return w;
    };

    ModelWeights w;
    w.config = config;
    w.patch_embed = gaussian({config.patch_in_dim(), config.d_model});
    w.unpatch = gaussian({config.d_model, config.patch_out_dim()});
    w.cond_proj = gaussian({config.d_model, config.d_model});
    w.time_mlp1 = gaussian({config.d_model, config.d_model});
    w.time_mlp2 = gaussian({config.d_model, config.d_model});
    for (Index b = 0; b < config.n_double; ++b) w.double_blocks.push_back({stream(), stream()});
    for (Index b = 0; b < config.n_single; ++b) w.single_blocks.push_back(stream());
    return w;
}

void ConditionBundle::validate(const ModelConfig& config) const {
    Index hw = config.latent_hw;
    auto check_plane = [&](const Tensor& p, const char* name) {
        if (p.rank() != 2 || p.dim(0) != hw || p.dim(1) != hw)
            throw DimensionError(std::string(name) + ": expected [" + std::to_string(hw) + "x" +
                                 std::to_string(hw) + "], got " + shape_str(p.shape()));
        if ((p.array() < 0.0).any() || (p.array() > 1.0).any())
            throw RangeError(std::string(name) + ": values outside [0,1]");
    };
    check_plane(depth, "depth");
    check_plane(region, "region");
    if (appearance_tokens.numel() > 0 &&
        (appearance_tokens.rank() != 2 || appearance_tokens.dim(1) != config.d_model))
        throw DimensionError("appearance_tokens: expected [N x d_model], got " +
                             shape_str(appearance_tokens.shape()));
}

Tensor patchify(const Tensor& latent, Index patch) {
    if (latent.rank() != 3) throw DimensionError("patchify: need [C x H x W]");
    Index c = latent.dim(0), h = latent.dim(1), w = latent.dim(2);
    if (h % patch != 0 || w % patch != 0)
        throw DimensionError("patchify: " + shape_str(latent.shape()) +
                             " not divisible by patch " + std::to_string(patch));
    Index gh = h / patch, gw = w / patch;
    Tensor tokens({gh * gw, c * patch * patch});
    for (Index pr = 0; pr < gh; ++pr)
        for (Index pc = 0; pc < gw; ++pc) {
            Index tok = pr * gw + pc;
            for (Index ch = 0; ch < c; ++ch)
                for (Index dy = 0; dy < patch; ++dy)
                    for (Index dx = 0; dx < patch; ++dx)
                        tokens.at(tok, (ch * patch + dy) * patch + dx) =
                            latent.at(ch, pr * patch + dy, pc * patch + dx);
        }
    return tokens;
}

Tensor unpatchify(const Tensor& tokens, Index channels, Index height, Index width, Index patch) {
    Index gh = height / patch, gw = width / patch;
    if (tokens.rank() != 2 || tokens.dim(0) != gh * gw ||
        tokens.dim(1) != channels * patch * patch)
        throw DimensionError("unpatchify: tokens " + shape_str(tokens.shape()) +
                             " inconsistent with target geometry");
    Tensor latent({channels, height, width});
    for (Index pr = 0; pr < gh; ++pr)
        for (Index pc = 0; pc < gw; ++pc) {
            Index tok = pr * gw + pc;
            for (Index ch = 0; ch < channels; ++ch)
                for (Index dy = 0; dy < patch; ++dy)
                    for (Index dx = 0; dx < patch; ++dx)
                        latent.at(ch, pr * patch + dy, pc * patch + dx) =
                            tokens.at(tok, (ch * patch + dy) * patch + dx);
        }
    return latent;
}

std::vector<AttentionSite> enumerate_attention_sites(const ModelConfig& config) {
    config.validate();
    std::vector<AttentionSite> sites;
    for (Index b = 0; b < config.n_double; ++b)
        sites.push_back({AttentionSite::Stream::double_stream, b, static_cast<int>(b)});
    for (Index b = 0; b < config.n_single; ++b)
        sites.push_back(
            {AttentionSite::Stream::single_stream, b, static_cast<int>(config.n_double + b)});
    return sites;
}

std::set<int> default_selected_layers(const ModelConfig& config) {
    config.validate();
    std::set<int> sel;
    auto take = [&sel](Index base, Index count) {
        sel.insert(static_cast<int>(base));
        sel.insert(static_cast<int>(base + 1));
        sel.insert(static_cast<int>(base + count - 2));
        sel.insert(static_cast<int>(base + count - 1));
    };
    take(0, config.n_double);
    take(config.n_double, config.n_single);
    return sel;
}

Tensor forward_velocity(const Tensor& z, const ConditionBundle& cond, const ModelWeights& weights,
                        const HookSet& hooks) {
    const ModelConfig& cfg = weights.config;
    if (z.rank() != 3 || z.dim(0) != cfg.latent_channels || z.dim(1) != cfg.latent_hw ||
        z.dim(2) != cfg.latent_hw)
        throw DimensionError("forward_velocity: latent " + shape_str(z.shape()) +
                             " does not match config");
    cond.validate(cfg);

    Index hw = cfg.latent_hw;
    Index d = cfg.d_model;
    double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));

    // Channel-concatenate conditioning planes ahead of patch embedding.
    Tensor stacked({cfg.latent_channels + 2, hw, hw});
    std::copy_n(z.data(), z.numel(), stacked.data());
    std::copy_n(cond.depth.data(), hw * hw, stacked.data() + z.numel());
    std::copy_n(cond.region.data(), hw * hw, stacked.data() + z.numel() + hw * hw);

    Tensor x = matmul(patchify(stacked, cfg.patch), weights.patch_embed);  // N x d
    Index n_ctx = cond.appearance_tokens.numel() > 0 ? cond.appearance_tokens.dim(0) : 0;
    Tensor c = n_ctx > 0 ? matmul(cond.appearance_tokens, weights.cond_proj) : Tensor({0, d});

    Tensor t_emb = timestep_embedding(cond.timestep, weights);
    add_row_inplace(x, t_emb);
    if (n_ctx > 0) add_row_inplace(c, t_emb);

    // Double-stream blocks: separate projections, joint attention over
    // [cond | image].
    for (Index b = 0; b < cfg.n_double; ++b) {
        const DoubleBlockWeights& bw = weights.double_blocks[static_cast<size_t>(b)];
        QkvSplit img = project_qkv(ln_tokens(x, d), bw.img, cfg.n_heads);
        QkvSplit joint;
        if (n_ctx > 0) {
            QkvSplit cnd = project_qkv(ln_tokens(c, d), bw.cond, cfg.n_heads);
            joint = {concat_tokens(cnd.q, img.q), concat_tokens(cnd.k, img.k),
                     concat_tokens(cnd.v, img.v)};
        } else {
            joint = img;
        }
        Tensor attn = attend_site(static_cast<int>(b), n_ctx, joint, scale, hooks);
        Tensor img_out = merge_heads(token_slice(attn, n_ctx, x.dim(0)));
        x = x + matmul(img_out, bw.img.w_out);
        x = x + mlp(ln_tokens(x, d), bw.img);
        if (n_ctx > 0) {
            Tensor cond_out = merge_heads(token_slice(attn, 0, n_ctx));
            c = c + matmul(cond_out, bw.cond.w_out);
            c = c + mlp(ln_tokens(c, d), bw.cond);
        }
    }

    // Single-stream blocks over the concatenated sequence.
    Tensor h({n_ctx + x.dim(0), d});
    if (n_ctx > 0) std::copy_n(c.data(), c.numel(), h.data());
    std::copy_n(x.data(), x.numel(), h.data() + n_ctx * d);
    for (Index b = 0; b < cfg.n_single; ++b) {
        const StreamWeights& bw = weights.single_blocks[static_cast<size_t>(b)];
        QkvSplit qkv = project_qkv(ln_tokens(h, d), bw, cfg.n_heads);
        int layer_id = static_cast<int>(cfg.n_double + b);
        Tensor attn = attend_site(layer_id, n_ctx, qkv, scale, hooks);
        h = h + matmul(merge_heads(attn), bw.w_out);
        h = h + mlp(ln_tokens(h, d), bw);
    }

    Tensor img_final({x.dim(0), d});
    std::copy_n(h.data() + n_ctx * d, img_final.numel(), img_final.data());
    return unpatchify(matmul(img_final, weights.unpatch), cfg.latent_channels, hw, hw, cfg.patch);
}

}  // namespace rft
