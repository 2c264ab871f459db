#pragma once

// PointNet++-style encoder (five set-abstraction layers -> mu/logvar) and the
// fully-connected decoder (widths 256, 512, 1024, 2048, 4096 with group norm
// + ReLU between layers). Sampling/grouping indices are plain geometry
// computed outside the graph; only features are differentiated.

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "glissando/autodiff.hpp"
#include "glissando/geometry.hpp"
#include "glissando/nn.hpp"

namespace glissando {

inline constexpr std::array<int, 5> kDecoderWidths = {256, 512, 1024, 2048, 4096};
// Set-abstraction schedule: sampled counts N/4, N/8, N/16, N/32, N/128;
// radii span the unit-diagonal canonical box.
inline constexpr std::array<double, 5> kSaRadii = {0.1, 0.2, 0.3, 0.45, 0.7};
inline constexpr std::array<int, 5> kSaKMax = {32, 32, 32, 32, 16};

struct SaPlanLayer {
    std::vector<int> center_indices; // into the previous layer's point list
    PointMatrix centers;             // m x 3
    std::vector<int> group_flat;     // concatenated neighbor row indices
    std::vector<int> group_offsets;  // size m+1
    std::vector<float> rel_coords;   // [group_flat.size() x 3] neighbor - center
};

// Deterministic sampling/grouping plan for the whole SA stack.
std::vector<SaPlanLayer> plan_set_abstraction(const PointMatrix& points, int fps_start = 0);

// Per-layer sampled points plus their feature tensors (the spec's SAStack).
struct SAStack {
    std::vector<PointMatrix> centers;      // five m_i x 3 blocks
    std::vector<ad::Tensor> features;      // five [m_i, c_i] tensors
    std::vector<ad::Tensor> fused;         // features after image concat (empty slot if none)
};

// Returns per-point image features [m_i, c_img] for SA layer i (1..4), or an
// undefined tensor to skip fusion at that layer.
using SaFusionProvider =
    std::function<ad::Tensor(nn::GraphContext&, int sa_layer, const PointMatrix& centers)>;

class PointEncoder {
public:
    PointEncoder() = default;
    // fused_channels[i] = image-feature width concatenated after SA layer i+1
    // (0 = unfused); widths double from point_base_channels.
    PointEncoder(nn::ParamRegistry& reg, const std::string& prefix, int point_base_channels,
                 int code_size, const std::array<int, 4>& fused_channels, Rng& rng);

    struct Output {
        ad::Tensor mu;
        ad::Tensor logvar;
        SAStack stack;
    };
    Output forward(nn::GraphContext& ctx, const PointMatrix& cloud,
                   const SaFusionProvider& fusion) const;

    int layer_width(int layer) const { return base_ << (layer - 1); } // layer 1..5
    int global_feature_width() const { return layer_width(5); }

private:
    int base_ = 0;
    int code_ = 0;
    std::array<int, 4> fused_channels_{};
    struct SaMlp {
        nn::Linear l1, l2;
    };
    std::array<SaMlp, 5> mlp_;
    nn::Linear mu_head_, logvar_head_;
};

// z = mu + exp(0.5*logvar) * eps with eps ~ N(0, I) drawn from rng.
ad::Tensor reparameterize(const ad::Tensor& mu, const ad::Tensor& logvar, Rng& rng);

class PointDecoder {
public:
    PointDecoder() = default;
    // with_image_vectors: layers 1..4 additionally consume a pooled image
    // vector of width pooled_dim.
    PointDecoder(nn::ParamRegistry& reg, const std::string& prefix, int code_size,
                 int pooled_dim, bool with_image_vectors, int norm_groups, Rng& rng);

    // image_vectors[j] feeds layer j+1 (j = 0..3); pass an empty vector when
    // constructed without fusion.
    std::array<ad::Tensor, 5> forward(nn::GraphContext& ctx, const ad::Tensor& z,
                                      const std::vector<ad::Tensor>& image_vectors) const;

    bool fused() const { return with_vectors_; }

private:
    bool with_vectors_ = false;
    std::array<nn::Linear, 5> fc_;
    std::array<nn::GroupNorm, 4> norm_; // between layers only
};

} // namespace glissando
