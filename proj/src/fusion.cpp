#include "glissando/fusion.hpp"

#include <stdexcept>

namespace glissando {

RoiGatherResult roi_gather(const ImagePyramid& pyramid, const PointMatrix& points,
                           const Pose& pose_gt, const CameraIntrinsics& K, int level) {
    if (level < 1 || level > 4) {
        throw std::invalid_argument("roi_gather: level must be in 1..4");
    }
    const auto proj = project_points(points, pose_gt, K);
    const double stride = pyramid.stride_of(level);
    const int m = static_cast<int>(points.rows());
    std::vector<ad::RoiQuery> queries(m);
    // 2x2 bins inside a 3-cell box: bin centers sit +-0.75 cells from the
    // projected point, in feature-cell coordinates (cell center convention:
    // pixel (i + 0.5) * stride).
    const double half = 0.25 * kRoiBoxCells;
    for (int i = 0; i < m; ++i) {
        ad::RoiQuery& q = queries[i];
        q.valid = proj.valid[i];
        if (!q.valid) continue;
        const double cu = proj.pixels(i, 0) / stride - 0.5;
        const double cv = proj.pixels(i, 1) / stride - 0.5;
        int t = 0;
        for (int dy = -1; dy <= 1; dy += 2) {
            for (int dx = -1; dx <= 1; dx += 2) {
                q.ty[t] = static_cast<float>(cv + dy * half);
                q.tx[t] = static_cast<float>(cu + dx * half);
                ++t;
            }
        }
    }
    RoiGatherResult res;
    res.valid = proj.valid;
    res.features = ad::roi_align_gather(pyramid.level(level), std::move(queries));
    return res;
}

FeatureTransform::FeatureTransform(nn::ParamRegistry& reg, const std::string& prefix,
                                   const std::array<int, 5>& level_channels,
                                   const std::array<std::pair<int, int>, 5>& level_sizes,
                                   int pooled_dim, int pool_conv_channels, Rng& rng)
    : level_channels_(level_channels), pooled_dim_(pooled_dim) {
    for (int sa = 1; sa <= 4; ++sa) {
        const int c = level_channels_[5 - sa - 1];
        roi_proj_[sa - 1] = nn::Linear(reg, prefix + ".roi_proj" + std::to_string(sa), 4 * c,
                                       c, rng, /*with_bias=*/false);
    }
    for (int level = 1; level <= 4; ++level) {
        const int c = level_channels_[level - 1];
        const auto [h, w] = level_sizes[level - 1];
        const int oh = (h + 2 - 3) / 2 + 1;
        const int ow = (w + 2 - 3) / 2 + 1;
        pool_conv_[level - 1] = nn::Conv2d(reg, prefix + ".pool_conv" + std::to_string(level),
                                           c, pool_conv_channels, 3, 2, 1, rng);
        pool_fc_[level - 1] = nn::Linear(reg, prefix + ".pool_fc" + std::to_string(level),
                                         pool_conv_channels * oh * ow, pooled_dim_, rng);
    }
}

int FeatureTransform::image_feature_width(int sa_layer) const {
    return level_channels_[5 - sa_layer - 1];
}

ad::Tensor FeatureTransform::gather_for_sa_layer(nn::GraphContext& ctx,
                                                 const ImagePyramid& pyramid, int sa_layer,
                                                 const PointMatrix& centers,
                                                 const Pose& pose_gt,
                                                 const CameraIntrinsics& K) const {
    if (sa_layer < 1 || sa_layer > 4) {
        throw std::invalid_argument("gather_for_sa_layer: sa_layer must be in 1..4");
    }
    const int level = 5 - sa_layer;
    RoiGatherResult raw = roi_gather(pyramid, centers, pose_gt, K, level);
    // Bias-free projection keeps invalid (zeroed) rows exactly zero.
    return roi_proj_[sa_layer - 1].forward(ctx, raw.features);
}

ad::Tensor FeatureTransform::pool_level(nn::GraphContext& ctx, const ImagePyramid& pyramid,
                                        int level) const {
    if (level < 1 || level > 4) {
        throw std::invalid_argument("pool_level: level must be in 1..4");
    }
    ad::Tensor h = ad::relu(pool_conv_[level - 1].forward(ctx, pyramid.level(level)));
    ad::Tensor flat = ad::reshape(h, {static_cast<int>(h.size())});
    return pool_fc_[level - 1].forward(ctx, flat);
}

std::vector<ad::Tensor> FeatureTransform::pooled_vectors(nn::GraphContext& ctx,
                                                         const ImagePyramid& pyramid) const {
    std::vector<ad::Tensor> vecs;
    for (int j = 1; j <= 4; ++j) {
        vecs.push_back(pool_level(ctx, pyramid, 5 - j));
    }
    return vecs;
}

std::vector<ad::Tensor> fuse_encoder_side(nn::GraphContext& ctx, const FeatureTransform& ft,
                                          const std::vector<PointMatrix>& sa_centers,
                                          const std::vector<ad::Tensor>& sa_features,
                                          const ImagePyramid& pyramid, const Pose& pose_gt,
                                          const CameraIntrinsics& K) {
    if (sa_centers.size() < 4 || sa_features.size() < 4) {
        throw std::invalid_argument("fuse_encoder_side: need at least 4 SA layers");
    }
    std::vector<ad::Tensor> fused;
    for (int i = 1; i <= 4; ++i) {
        ad::Tensor img = ft.gather_for_sa_layer(ctx, pyramid, i, sa_centers[i - 1], pose_gt, K);
        fused.push_back(ad::concat(img, sa_features[i - 1]));
    }
    return fused;
}

} // namespace glissando
