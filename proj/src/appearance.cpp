#include "rft/appearance.hpp"

#include "rft/error.hpp"
#include "rft/ops.hpp"

namespace rft {

Mask Mask::reference_foreground(Tensor values) {
    Mask m{std::move(values), Role::reference_foreground};
    m.validate();
    return m;
}

Mask Mask::source_edit_region(Tensor values) {
    Mask m{std::move(values), Role::source_edit_region};
    m.validate();
    return m;
}

void Mask::validate() const {
    if (values.rank() != 2) throw DimensionError("mask: need [H x W], got " + shape_str(values.shape()));
    if ((values.array() < 0.0).any() || (values.array() > 1.0).any())
        throw RangeError("mask: values outside [0,1]");
}

double Mask::support() const { return values.array().sum(); }

PatchWeights patch_coverage(const Mask& mask, Index patch, double eps_floor) {
    mask.validate();
    if (eps_floor < 0.0 || eps_floor > 1.0) throw RangeError("patch_coverage: eps outside [0,1]");
    Index h = mask.values.dim(0), w = mask.values.dim(1);
    if (patch <= 0 || h % patch != 0 || w % patch != 0)
        throw DimensionError("patch_coverage: mask " + shape_str(mask.values.shape()) +
                             " not divisible by patch " + std::to_string(patch));
    Index gh = h / patch, gw = w / patch;
    PatchWeights pw{Tensor({gh * gw}), eps_floor, patch, gh, gw};
    double area = static_cast<double>(patch * patch);
    for (Index pr = 0; pr < gh; ++pr)
        for (Index pc = 0; pc < gw; ++pc) {
            double cov = 0.0;
            for (Index dy = 0; dy < patch; ++dy)
                for (Index dx = 0; dx < patch; ++dx)
                    cov += mask.values.at(pr * patch + dy, pc * patch + dx);
            cov /= area;
            pw.w[pr * gw + pc] = eps_floor + (1.0 - eps_floor) * cov;
        }
    return pw;
}

AppearanceEmbedding weighted_embed(const Tensor& image, const Mask& mask, double eps_floor,
                                   const ModelWeights& weights) {
    const ModelConfig& cfg = weights.config;
    if (image.rank() != 3 || image.dim(0) != cfg.latent_channels)
        throw DimensionError("weighted_embed: image " + shape_str(image.shape()) +
                             " does not match model channels");
    if (mask.values.dim(0) != image.dim(1) || mask.values.dim(1) != image.dim(2))
        throw DimensionError("weighted_embed: mask " + shape_str(mask.values.shape()) +
                             " vs image " + shape_str(image.shape()));

    PatchWeights pw = patch_coverage(mask, cfg.patch, eps_floor);
    Tensor tokens_raw = patchify(image, cfg.patch);  // N x C*p^2

    // Image-channel rows of the patch embedding (the conditioning-channel
    // rows do not apply to a bare image).
    Index in_dim = tokens_raw.dim(1);
    Tensor w_img({in_dim, cfg.d_model});
    std::copy_n(weights.patch_embed.data(), in_dim * cfg.d_model, w_img.data());

    Tensor p = matmul(tokens_raw, w_img);  // N x d
    Index n = p.dim(0), d = p.dim(1);

    AppearanceEmbedding emb;
    emb.tokens = Tensor({n, d});
    emb.pooled = Tensor({d});
    double wsum = 0.0;
    for (Index j = 0; j < n; ++j) {
        double wj = pw.w[j];
        wsum += wj;
        for (Index k = 0; k < d; ++k) {
            double v = wj * p.at(j, k);
            emb.tokens.at(j, k) = v;
            emb.pooled[k] += v;
        }
    }
    if (wsum > 0.0) emb.pooled = (1.0 / wsum) * emb.pooled;
    return emb;
}

ConditionBundle build_condition(const AppearanceEmbedding& c_ref, const Tensor& depth,
                                const Mask& region, double t) {
    if (depth.rank() != 2) throw DimensionError("build_condition: depth needs [H x W]");
    if (!region.values.same_shape(depth))
        throw DimensionError("build_condition: region " + shape_str(region.values.shape()) +
                             " vs depth " + shape_str(depth.shape()));
    ConditionBundle bundle;
    bundle.depth = depth;
    bundle.region = region.values;
    bundle.appearance_tokens = c_ref.tokens;
    bundle.timestep = t;
    return bundle;
}

}  // namespace rft
