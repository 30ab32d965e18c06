#pragma once

#include "rft/dit.hpp"
#include "rft/tensor.hpp"

namespace rft {

// Mask-weighted appearance encoding: per-patch foreground coverage scales the
// patch embeddings before any cross-patch mixing, which suppresses the
// reference's shape/background and leaves a style-dominated embedding.

struct Mask {
    enum class Role { reference_foreground, source_edit_region };

    Tensor values;  // H x W in [0,1]
    Role role = Role::reference_foreground;

    static Mask reference_foreground(Tensor values);
    static Mask source_edit_region(Tensor values);

    void validate() const;
    double support() const;  // sum of mask values
};

struct PatchWeights {
    Tensor w;           // length N, one weight per patch in raster order
    double floor_eps;   // epsilon floor
    Index patch;
    Index grid_h, grid_w;
};

// coverage_j = mean mask value over patch j; w_j = eps + (1 - eps) coverage_j.
PatchWeights patch_coverage(const Mask& mask, Index patch, double eps_floor = 0.05);

struct AppearanceEmbedding {
    Tensor tokens;  // N x d_model, weighted per-patch embeddings
    Tensor pooled;  // d_model, coverage-weighted mean
};

// Patch embeddings are projected through the image-channel rows of the
// model's patch-embed matrix, scaled by w_j, then pooled (sum w_j p_j /
// sum w_j). Weighting happens before any cross-patch mixing.
AppearanceEmbedding weighted_embed(const Tensor& image, const Mask& mask, double eps_floor,
                                   const ModelWeights& weights);

// Assembles the per-step conditioning used across all denoising steps.
ConditionBundle build_condition(const AppearanceEmbedding& c_ref, const Tensor& depth,
                                const Mask& region, double t);

}  // namespace rft
