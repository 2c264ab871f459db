#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "glissando/backbone_image.hpp"
#include "glissando/backbone_points.hpp"
#include "glissando/fusion.hpp"
#include "glissando/geometry.hpp"
#include "glissando/image.hpp"
#include "glissando/losses.hpp"
#include "glissando/nn.hpp"

namespace glissando {

enum class ShapeLossKind { kChamfer, kEmd };
enum class PoseHeadLocation { kDecoder, kImageEncoder, kNone };
enum class PoseHeadStyle { kTwoNetworks, kSingleNetwork };

struct ModelConfig {
    int code_size = 256;
    int base_channels = 64;       // U-Net stem width
    int point_base_channels = 64; // SA MLP width, doubling per layer
    int n_points_out = 2048;
    int input_height = 128;
    int input_width = 128;
    int pooled_dim = 256;
    int pool_conv_channels = 4;
    int norm_groups = 8;
    ShapeLossKind shape_loss_kind = ShapeLossKind::kChamfer;
    PoseHeadLocation pose_head_location = PoseHeadLocation::kDecoder;
    PoseHeadStyle pose_head_style = PoseHeadStyle::kTwoNetworks;
    bool enable_encoder_fusion = true;
    bool enable_decoder_fusion = true;
    bool use_pc_encoder = true;

    void validate() const;
    std::string to_key_values() const;
    static ModelConfig from_key_values(const std::string& text);

    // The paper-scale NOCS configuration.
    static ModelConfig paper_nocs();
    // Small configuration that trains in minutes on CPUs.
    static ModelConfig desk();
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

struct Prediction {
    PointCloud pc_pred;                   // canonical, n_points_out rows
    Pose pose_pred;                       // identity when no pose head
    Eigen::VectorXd mu, logvar;           // empty outside training
};

// Which submodules a forward pass touched, for contract tests.
struct ForwardTrace {
    std::vector<std::string> stages;
    bool contains(const std::string& s) const;
};

class GlissandoNet {
public:
    GlissandoNet(const ModelConfig& cfg, uint64_t init_seed);

    struct TrainOutputs {
        Prediction pred;
        LossBreakdown losses;
        ad::Tensor total; // graph root; call ad::backward on it
    };

    // Training pass: image + ground-truth cloud/pose (+ intrinsics for the
    // encoder-side fusion). rng drives the reparameterization draw.
    TrainOutputs forward_train(nn::GraphContext& ctx, const ImageTensor& image,
                               const PointCloud& pc_gt, const Pose& pose_gt,
                               const CameraIntrinsics& K, const LossWeights& weights,
                               Rng& rng, ForwardTrace* trace = nullptr) const;

    // Zero-code inference: consumes only the image. Deterministic.
    Prediction forward_infer(nn::GraphContext& ctx, const ImageTensor& image,
                             ForwardTrace* trace = nullptr) const;

    const ModelConfig& config() const { return cfg_; }
    nn::ParamRegistry& params() { return params_; }
    const nn::ParamRegistry& params() const { return params_; }
    int64_t parameter_count() const { return params_.total_size(); }

    // Closed-form shapes for tests: pyramid level sizes for the configured
    // input, as (height, width) per level 1..5.
    std::array<std::pair<int, int>, 5> pyramid_sizes() const;

private:
    struct PoseHeads;
    ad::Tensor shape_head(nn::GraphContext& ctx, const ad::Tensor& d5) const;
    std::pair<ad::Tensor, ad::Tensor> run_pose_heads(nn::GraphContext& ctx,
                                                     const ad::Tensor& feat) const;

    ModelConfig cfg_;
    nn::ParamRegistry params_;
    UNet unet_;
    PointEncoder pencoder_;
    PointDecoder pdecoder_;
    FeatureTransform transform_;
    nn::Linear shape_fc_;
    // Pose MLP widths (1024, 512, 256, 128, out).
    std::array<nn::Linear, 5> rot_mlp_;
    std::array<nn::Linear, 5> trans_mlp_;
    std::array<nn::Linear, 5> single_mlp_;
};

Pose pose_from_raw(const float* q_raw, const float* t);

} // namespace glissando
