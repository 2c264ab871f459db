#pragma once

// The feature transform module: (a) project SA-layer point sets into image
// decoder maps and gather local features with a 2x2 RoI align (encoder side,
// training only, needs the ground-truth pose); (b) pool each whole decoder
// map into a fixed-width vector (decoder side, pose-free).

#include <array>
#include <string>
#include <vector>

#include "glissando/autodiff.hpp"
#include "glissando/backbone_image.hpp"
#include "glissando/geometry.hpp"
#include "glissando/nn.hpp"

namespace glissando {

inline constexpr int kRoiBoxCells = 3; // square box side, feature-map cells
inline constexpr int kRoiBins = 2;     // 2x2 sampled bins

// Raw RoI gather: project points, sample a 2x2 grid of bilinear taps inside a
// 3-cell box on the given pyramid level, flatten to [m, 4*c]. Invalid
// projections (behind camera or off-image) produce zero rows. No parameters.
struct RoiGatherResult {
    ad::Tensor features; // [m, 4*c_level]
    std::vector<bool> valid;
};
RoiGatherResult roi_gather(const ImagePyramid& pyramid, const PointMatrix& points,
                           const Pose& pose_gt, const CameraIntrinsics& K, int level);

class FeatureTransform {
public:
    FeatureTransform() = default;
    // level_sizes/channels describe pyramid levels 1..5 for the configured
    // input resolution; pooled vectors are produced for levels 1..4.
    FeatureTransform(nn::ParamRegistry& reg, const std::string& prefix,
                     const std::array<int, 5>& level_channels,
                     const std::array<std::pair<int, int>, 5>& level_sizes, int pooled_dim,
                     int pool_conv_channels, Rng& rng);

    // Encoder side for SA layer i (1..4): gathers from pyramid level 5-i and
    // projects the flattened 4*c taps back to c channels (bias-free, so
    // invalid rows stay exactly zero).
    ad::Tensor gather_for_sa_layer(nn::GraphContext& ctx, const ImagePyramid& pyramid,
                                   int sa_layer, const PointMatrix& centers,
                                   const Pose& pose_gt, const CameraIntrinsics& K) const;

    // Decoder side: 3x3 stride-2 conv -> ReLU -> flatten -> FC -> pooled_dim.
    ad::Tensor pool_level(nn::GraphContext& ctx, const ImagePyramid& pyramid, int level) const;

    // Pooled vectors ordered for the point decoder: layer j consumes the
    // vector of pyramid level 5-j, i.e. levels (4, 3, 2, 1).
    std::vector<ad::Tensor> pooled_vectors(nn::GraphContext& ctx,
                                           const ImagePyramid& pyramid) const;

    int image_feature_width(int sa_layer) const; // c of level 5-sa_layer
    int pooled_dim() const { return pooled_dim_; }

private:
    std::array<int, 5> level_channels_{};
    int pooled_dim_ = 0;
    std::array<nn::Linear, 4> roi_proj_; // indexed by sa_layer-1
    std::array<nn::Conv2d, 4> pool_conv_; // indexed by level-1
    std::array<nn::Linear, 4> pool_fc_;
};

// Convenience over a full SA stack (testing surface): concatenated
// [roi features, point features] per layer i = 1..4.
std::vector<ad::Tensor> fuse_encoder_side(nn::GraphContext& ctx, const FeatureTransform& ft,
                                          const std::vector<PointMatrix>& sa_centers,
                                          const std::vector<ad::Tensor>& sa_features,
                                          const ImagePyramid& pyramid, const Pose& pose_gt,
                                          const CameraIntrinsics& K);

} // namespace glissando
