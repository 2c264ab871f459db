#include "glissando/backbone_points.hpp"

#include <stdexcept>
#include <string>

namespace glissando {

std::vector<SaPlanLayer> plan_set_abstraction(const PointMatrix& points, int fps_start) {
    const int n = static_cast<int>(points.rows());
    if (n < 2) {
        throw std::invalid_argument("plan_set_abstraction: need at least 2 points");
    }
    std::vector<SaPlanLayer> plan(5);
    const PointMatrix* current = &points;
    for (int layer = 0; layer < 5; ++layer) {
        SaPlanLayer& pl = plan[layer];
        const int avail = static_cast<int>(current->rows());
        const int divisor = layer < 4 ? (4 << layer) : 128;
        const int m = std::max(1, std::min(avail, n / divisor));
        pl.center_indices = farthest_point_sample(*current, m, std::min(fps_start, avail - 1));
        pl.centers.resize(m, 3);
        for (int i = 0; i < m; ++i) pl.centers.row(i) = current->row(pl.center_indices[i]);
        const auto groups = ball_query(pl.centers, *current, kSaRadii[layer], kSaKMax[layer]);
        pl.group_offsets.assign(1, 0);
        for (const auto& g : groups) {
            pl.group_flat.insert(pl.group_flat.end(), g.begin(), g.end());
            pl.group_offsets.push_back(static_cast<int>(pl.group_flat.size()));
        }
        pl.rel_coords.resize(pl.group_flat.size() * 3);
        for (int g = 0; g < m; ++g) {
            for (int r = pl.group_offsets[g]; r < pl.group_offsets[g + 1]; ++r) {
                for (int k = 0; k < 3; ++k) {
                    pl.rel_coords[3 * r + k] = static_cast<float>(
                        (*current)(pl.group_flat[r], k) - pl.centers(g, k));
                }
            }
        }
        current = &pl.centers;
    }
    return plan;
}

PointEncoder::PointEncoder(nn::ParamRegistry& reg, const std::string& prefix,
                           int point_base_channels, int code_size,
                           const std::array<int, 4>& fused_channels, Rng& rng)
    : base_(point_base_channels), code_(code_size), fused_channels_(fused_channels) {
    int prev = 0;
    for (int layer = 0; layer < 5; ++layer) {
        const int width = layer_width(layer + 1);
        const int in = 3 + prev; // relative coords + carried features
        const std::string name = prefix + ".sa" + std::to_string(layer + 1);
        mlp_[layer].l1 = nn::Linear(reg, name + ".fc1", in, width, rng);
        mlp_[layer].l2 = nn::Linear(reg, name + ".fc2", width, width, rng);
        prev = width + (layer < 4 ? fused_channels_[layer] : 0);
    }
    mu_head_ = nn::Linear(reg, prefix + ".mu", global_feature_width(), code_, rng);
    logvar_head_ = nn::Linear(reg, prefix + ".logvar", global_feature_width(), code_, rng);
    // Start near the prior: tiny mu/logvar so KL begins close to zero.
    for (auto& v : mu_head_.w->value) v *= 0.01f;
    for (auto& v : logvar_head_.w->value) v *= 0.01f;
}

PointEncoder::Output PointEncoder::forward(nn::GraphContext& ctx, const PointMatrix& cloud,
                                           const SaFusionProvider& fusion) const {
    const auto plan = plan_set_abstraction(cloud);
    Output out;
    ad::Tensor carried; // [n_prev, c_prev]; undefined before the first layer
    for (int layer = 0; layer < 5; ++layer) {
        const SaPlanLayer& pl = plan[layer];
        const int rows = static_cast<int>(pl.group_flat.size());
        ad::Tensor rel = ad::Tensor::constant({rows, 3}, pl.rel_coords);
        ad::Tensor grouped = rel;
        if (carried.defined()) {
            grouped = ad::concat(rel, ad::gather_rows(carried, pl.group_flat));
        }
        ad::Tensor h = ad::relu(mlp_[layer].l1.forward(ctx, grouped));
        h = ad::relu(mlp_[layer].l2.forward(ctx, h));
        ad::Tensor pooled = ad::segmented_max(h, pl.group_offsets);
        out.stack.centers.push_back(pl.centers);
        out.stack.features.push_back(pooled);
        ad::Tensor next = pooled;
        if (layer < 4 && fusion) {
            ad::Tensor img = fusion(ctx, layer + 1, pl.centers);
            if (img.defined()) next = ad::concat(img, pooled);
        }
        out.stack.fused.push_back(next);
        carried = next;
    }
    // Global feature: max over the final SA layer's points.
    const int m5 = out.stack.features[4].shape()[0];
    ad::Tensor global = ad::reshape(
        ad::segmented_max(out.stack.fused[4], {0, m5}), {global_feature_width()});
    out.mu = mu_head_.forward(ctx, global);
    out.logvar = logvar_head_.forward(ctx, global);
    return out;
}

ad::Tensor reparameterize(const ad::Tensor& mu, const ad::Tensor& logvar, Rng& rng) {
    std::vector<float> eps(static_cast<size_t>(mu.size()));
    for (auto& e : eps) e = static_cast<float>(rng.normal());
    return ad::gauss_sample(mu, logvar, std::move(eps));
}

PointDecoder::PointDecoder(nn::ParamRegistry& reg, const std::string& prefix, int code_size,
                           int pooled_dim, bool with_image_vectors, int norm_groups, Rng& rng)
    : with_vectors_(with_image_vectors) {
    int prev = code_size;
    for (int j = 0; j < 5; ++j) {
        const int width = kDecoderWidths[j];
        const int in = prev + (with_vectors_ && j < 4 ? pooled_dim : 0);
        fc_[j] = nn::Linear(reg, prefix + ".fc" + std::to_string(j + 1), in, width, rng);
        if (j < 4) {
            norm_[j] = nn::GroupNorm(reg, prefix + ".norm" + std::to_string(j + 1), width,
                                     norm_groups);
        }
        prev = width;
    }
}

std::array<ad::Tensor, 5> PointDecoder::forward(
    nn::GraphContext& ctx, const ad::Tensor& z,
    const std::vector<ad::Tensor>& image_vectors) const {
    if (with_vectors_ && image_vectors.size() != 4) {
        throw std::invalid_argument("PointDecoder: expected 4 pooled image vectors");
    }
    std::array<ad::Tensor, 5> outs;
    ad::Tensor x = z;
    for (int j = 0; j < 5; ++j) {
        ad::Tensor in = (with_vectors_ && j < 4) ? ad::concat(x, image_vectors[j]) : x;
        x = fc_[j].forward(ctx, in);
        outs[j] = x;
        if (j < 4) x = ad::relu(norm_[j].forward(ctx, x));
    }
    return outs;
}

} // namespace glissando
