#include "glissando/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "glissando/errors.hpp"

namespace glissando {

namespace {

constexpr std::array<int, 5> kPoseMlpWidths = {1024, 512, 256, 128, 0}; // last = out dim

std::string shape_loss_name(ShapeLossKind k) {
    return k == ShapeLossKind::kChamfer ? "chamfer" : "emd";
}
std::string pose_loc_name(PoseHeadLocation l) {
    switch (l) {
        case PoseHeadLocation::kDecoder: return "decoder";
        case PoseHeadLocation::kImageEncoder: return "image_encoder";
        default: return "none";
    }
}
std::string pose_style_name(PoseHeadStyle s) {
    return s == PoseHeadStyle::kTwoNetworks ? "two_networks" : "single_network";
}

} // namespace

void ModelConfig::validate() const {
    if (code_size < 1) throw ConfigError("model: code_size must be positive");
    if (base_channels < 2 || base_channels % 2 != 0) {
        throw ConfigError("model: base_channels must be even and >= 2");
    }
    if (point_base_channels < 1) throw ConfigError("model: point_base_channels must be positive");
    if (n_points_out < 1) throw ConfigError("model: n_points_out must be positive");
    if (input_height % 32 != 0 || input_width % 32 != 0) {
        throw ConfigError("model: input dimensions must be divisible by 32");
    }
    if (pooled_dim < 1 || pool_conv_channels < 1) {
        throw ConfigError("model: pooled_dim/pool_conv_channels must be positive");
    }
}

std::string ModelConfig::to_key_values() const {
    std::ostringstream os;
    os << "code_size = " << code_size << "\n"
       << "base_channels = " << base_channels << "\n"
       << "point_base_channels = " << point_base_channels << "\n"
       << "n_points_out = " << n_points_out << "\n"
       << "input_height = " << input_height << "\n"
       << "input_width = " << input_width << "\n"
       << "pooled_dim = " << pooled_dim << "\n"
       << "pool_conv_channels = " << pool_conv_channels << "\n"
       << "norm_groups = " << norm_groups << "\n"
       << "shape_loss_kind = " << shape_loss_name(shape_loss_kind) << "\n"
       << "pose_head_location = " << pose_loc_name(pose_head_location) << "\n"
       << "pose_head_style = " << pose_style_name(pose_head_style) << "\n"
       << "enable_encoder_fusion = " << (enable_encoder_fusion ? "true" : "false") << "\n"
       << "enable_decoder_fusion = " << (enable_decoder_fusion ? "true" : "false") << "\n"
       << "use_pc_encoder = " << (use_pc_encoder ? "true" : "false") << "\n";
    return os.str();
}

namespace {

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

} // namespace

ModelConfig ModelConfig::from_key_values(const std::string& text) {
    auto kv = parse_kv(text);
    ModelConfig cfg;
    auto geti = [&](const char* key, int& dst) {
        if (kv.count(key)) dst = std::stoi(kv.at(key));
    };
    geti("code_size", cfg.code_size);
    geti("base_channels", cfg.base_channels);
    geti("point_base_channels", cfg.point_base_channels);
    geti("n_points_out", cfg.n_points_out);
    geti("input_height", cfg.input_height);
    geti("input_width", cfg.input_width);
    geti("pooled_dim", cfg.pooled_dim);
    geti("pool_conv_channels", cfg.pool_conv_channels);
    geti("norm_groups", cfg.norm_groups);
    if (kv.count("shape_loss_kind")) {
        const auto& v = kv.at("shape_loss_kind");
        if (v == "chamfer") cfg.shape_loss_kind = ShapeLossKind::kChamfer;
        else if (v == "emd") cfg.shape_loss_kind = ShapeLossKind::kEmd;
        else throw ConfigError("model: unknown shape_loss_kind '" + v + "'");
    }
    if (kv.count("pose_head_location")) {
        const auto& v = kv.at("pose_head_location");
        if (v == "decoder") cfg.pose_head_location = PoseHeadLocation::kDecoder;
        else if (v == "image_encoder") cfg.pose_head_location = PoseHeadLocation::kImageEncoder;
        else if (v == "none") cfg.pose_head_location = PoseHeadLocation::kNone;
        else throw ConfigError("model: unknown pose_head_location '" + v + "'");
    }
    if (kv.count("pose_head_style")) {
        const auto& v = kv.at("pose_head_style");
        if (v == "two_networks") cfg.pose_head_style = PoseHeadStyle::kTwoNetworks;
        else if (v == "single_network") cfg.pose_head_style = PoseHeadStyle::kSingleNetwork;
        else throw ConfigError("model: unknown pose_head_style '" + v + "'");
    }
    auto getb = [&](const char* key, bool& dst) {
        if (!kv.count(key)) return;
        const auto& v = kv.at(key);
        if (v == "true") dst = true;
        else if (v == "false") dst = false;
        else throw ConfigError(std::string("model: boolean expected for ") + key);
    };
    getb("enable_encoder_fusion", cfg.enable_encoder_fusion);
    getb("enable_decoder_fusion", cfg.enable_decoder_fusion);
    getb("use_pc_encoder", cfg.use_pc_encoder);
    cfg.validate();
    return cfg;
}

ModelConfig ModelConfig::paper_nocs() {
    ModelConfig cfg;
    cfg.code_size = 256;
    cfg.base_channels = 64;
    cfg.point_base_channels = 64;
    cfg.n_points_out = 2048;
    cfg.input_height = 128;
    cfg.input_width = 128;
    return cfg;
}

ModelConfig ModelConfig::desk() {
    ModelConfig cfg;
    cfg.code_size = 64;
    cfg.base_channels = 16;
    cfg.point_base_channels = 32;
    cfg.n_points_out = 512;
    cfg.input_height = 64;
    cfg.input_width = 64;
    return cfg;
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.to_key_values() == b.to_key_values();
}

bool ForwardTrace::contains(const std::string& s) const {
    return std::find(stages.begin(), stages.end(), s) != stages.end();
}

GlissandoNet::GlissandoNet(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(splitmix64(init_seed ^ 0x6c1f5a2ebd03c9ULL));
    unet_ = UNet(params_, "unet", cfg_.base_channels, cfg_.norm_groups, rng);

    std::array<int, 5> level_channels{};
    for (int l = 1; l <= 5; ++l) level_channels[l - 1] = unet_.level_channels(l);
    transform_ = FeatureTransform(params_, "transform", level_channels, pyramid_sizes(),
                                  cfg_.pooled_dim, cfg_.pool_conv_channels, rng);

    if (cfg_.use_pc_encoder) {
        std::array<int, 4> fused{};
        if (cfg_.enable_encoder_fusion) {
            for (int i = 1; i <= 4; ++i) fused[i - 1] = transform_.image_feature_width(i);
        }
        pencoder_ = PointEncoder(params_, "pencoder", cfg_.point_base_channels, cfg_.code_size,
                                 fused, rng);
    }
    pdecoder_ = PointDecoder(params_, "pdecoder", cfg_.code_size, cfg_.pooled_dim,
                             cfg_.enable_decoder_fusion, cfg_.norm_groups, rng);

    shape_fc_ = nn::Linear(params_, "shape_head", kDecoderWidths[4], 3 * cfg_.n_points_out, rng);
    // Keep the initial cloud near the origin.
    for (auto& v : shape_fc_.w->value) v *= 0.05f;

    const int pose_in = [&] {
        switch (cfg_.pose_head_location) {
            case PoseHeadLocation::kDecoder:
                return kDecoderWidths[4] + (cfg_.enable_decoder_fusion ? cfg_.pooled_dim : 0);
            case PoseHeadLocation::kImageEncoder:
                return cfg_.base_channels << 4;
            default:
                return 0;
        }
    }();
    if (cfg_.pose_head_location != PoseHeadLocation::kNone) {
        auto build_mlp = [&](std::array<nn::Linear, 5>& mlp, const std::string& name, int out) {
            int in = pose_in;
            for (int j = 0; j < 5; ++j) {
                const int width = j < 4 ? kPoseMlpWidths[j] : out;
                mlp[j] = nn::Linear(params_, name + ".fc" + std::to_string(j + 1), in, width,
                                    rng);
                in = width;
            }
            // Small final layer so the initial pose is the bias.
            for (auto& v : mlp[4].w->value) v *= 0.01f;
        };
        if (cfg_.pose_head_style == PoseHeadStyle::kTwoNetworks) {
            build_mlp(rot_mlp_, "pose_rot", 4);
            build_mlp(trans_mlp_, "pose_trans", 3);
            rot_mlp_[4].b->value = {1.0f, 0.0f, 0.0f, 0.0f};
            trans_mlp_[4].b->value = {0.0f, 0.0f, 1.2f};
        } else {
            build_mlp(single_mlp_, "pose_single", 7);
            single_mlp_[4].b->value = {1.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 1.2f};
        }
    }
}

std::array<std::pair<int, int>, 5> GlissandoNet::pyramid_sizes() const {
    std::array<std::pair<int, int>, 5> sizes;
    for (int l = 1; l <= 5; ++l) {
        sizes[l - 1] = {cfg_.input_height >> (5 - l), cfg_.input_width >> (5 - l)};
    }
    return sizes;
}

ad::Tensor GlissandoNet::shape_head(nn::GraphContext& ctx, const ad::Tensor& d5) const {
    return ad::reshape(shape_fc_.forward(ctx, d5), {cfg_.n_points_out, 3});
}

std::pair<ad::Tensor, ad::Tensor> GlissandoNet::run_pose_heads(nn::GraphContext& ctx,
                                                               const ad::Tensor& feat) const {
    auto run = [&](const std::array<nn::Linear, 5>& mlp) {
        ad::Tensor x = feat;
        for (int j = 0; j < 5; ++j) {
            x = mlp[j].forward(ctx, x);
            if (j < 4) x = ad::relu(x);
        }
        return x;
    };
    if (cfg_.pose_head_style == PoseHeadStyle::kTwoNetworks) {
        return {run(rot_mlp_), run(trans_mlp_)};
    }
    ad::Tensor both = run(single_mlp_); // [7] = quaternion + translation
    ad::Tensor q = ad::reshape(ad::gather_rows(ad::reshape(both, {7, 1}), {0, 1, 2, 3}), {4});
    ad::Tensor t = ad::reshape(ad::gather_rows(ad::reshape(both, {7, 1}), {4, 5, 6}), {3});
    return {q, t};
}

Pose pose_from_raw(const float* q_raw, const float* t) {
    Pose pose;
    pose.rotation = Quaternion{q_raw[0], q_raw[1], q_raw[2], q_raw[3]}.normalized();
    pose.translation = Eigen::Vector3d(t[0], t[1], t[2]);
    return pose;
}

GlissandoNet::TrainOutputs GlissandoNet::forward_train(nn::GraphContext& ctx,
                                                       const ImageTensor& image,
                                                       const PointCloud& pc_gt,
                                                       const Pose& pose_gt,
                                                       const CameraIntrinsics& K,
                                                       const LossWeights& weights, Rng& rng,
                                                       ForwardTrace* trace) const {
    auto mark = [&](const char* s) {
        if (trace) trace->stages.push_back(s);
    };
    mark("unet_encode");
    auto enc = unet_.encode(ctx, image_to_tensor(image));
    mark("unet_decode");
    ImagePyramid pyr = unet_.decode(ctx, enc);

    // Ground-truth cloud as float for the loss heads.
    std::vector<float> gt_flat(static_cast<size_t>(pc_gt.size()) * 3);
    for (int i = 0; i < pc_gt.size(); ++i) {
        for (int k = 0; k < 3; ++k) gt_flat[3 * i + k] = static_cast<float>(pc_gt.points(i, k));
    }

    ad::Tensor mu, logvar, z;
    if (cfg_.use_pc_encoder) {
        mark("point_encoder");
        SaFusionProvider provider;
        if (cfg_.enable_encoder_fusion) {
            mark("encoder_fusion");
            provider = [&](nn::GraphContext& c, int sa_layer, const PointMatrix& centers) {
                return transform_.gather_for_sa_layer(c, pyr, sa_layer, centers, pose_gt, K);
            };
        }
        auto out = pencoder_.forward(ctx, pc_gt.points, provider);
        mu = out.mu;
        logvar = out.logvar;
        mark("reparameterize");
        z = reparameterize(mu, logvar, rng);
    } else {
        mu = ad::Tensor::zeros({cfg_.code_size});
        logvar = ad::Tensor::zeros({cfg_.code_size});
        z = ad::Tensor::zeros({cfg_.code_size});
    }

    std::vector<ad::Tensor> pooled;
    if (cfg_.enable_decoder_fusion) {
        mark("decoder_fusion");
        pooled = transform_.pooled_vectors(ctx, pyr);
    }
    mark("point_decoder");
    auto stack = pdecoder_.forward(ctx, z, pooled);

    mark("shape_head");
    ad::Tensor pc_pred = shape_head(ctx, stack[4]);

    TrainOutputs out;
    ad::Tensor pose_term;
    if (cfg_.pose_head_location != PoseHeadLocation::kNone) {
        mark("pose_heads");
        ad::Tensor pose_feat;
        if (cfg_.pose_head_location == PoseHeadLocation::kDecoder) {
            pose_feat = cfg_.enable_decoder_fusion ? ad::concat(stack[4], pooled[3]) : stack[4];
        } else {
            pose_feat = ad::spatial_mean(enc[4]);
        }
        auto [q, t] = run_pose_heads(ctx, pose_feat);
        const Quaternion qg = pose_gt.rotation.normalized();
        pose_term = ad::pose_loss(
            q, t, gt_flat,
            {static_cast<float>(qg.w), static_cast<float>(qg.x), static_cast<float>(qg.y),
             static_cast<float>(qg.z)},
            {static_cast<float>(pose_gt.translation.x()),
             static_cast<float>(pose_gt.translation.y()),
             static_cast<float>(pose_gt.translation.z())});
        out.pred.pose_pred = pose_from_raw(q.data(), t.data());
    } else {
        pose_term = ad::Tensor::zeros({1});
        out.pred.pose_pred = Pose::identity();
    }

    ad::Tensor shape_term = cfg_.shape_loss_kind == ShapeLossKind::kChamfer
                                ? ad::chamfer_loss(pc_pred, gt_flat)
                                : ad::emd_loss(pc_pred, gt_flat);
    ad::Tensor kld_term = cfg_.use_pc_encoder ? ad::kl_loss(mu, logvar)
                                              : ad::Tensor::zeros({1});
    out.total = ad::weighted_sum({shape_term, kld_term, pose_term},
                                 {static_cast<float>(weights.w_shape),
                                  static_cast<float>(weights.w_kld),
                                  static_cast<float>(weights.w_pose)});
    out.losses = total_loss(shape_term.data()[0], kld_term.data()[0], pose_term.data()[0],
                            weights);

    out.pred.pc_pred.points.resize(cfg_.n_points_out, 3);
    for (int i = 0; i < cfg_.n_points_out; ++i) {
        for (int k = 0; k < 3; ++k) out.pred.pc_pred.points(i, k) = pc_pred.data()[3 * i + k];
    }
    out.pred.pc_pred.category_id = pc_gt.category_id;
    out.pred.mu.resize(cfg_.code_size);
    out.pred.logvar.resize(cfg_.code_size);
    for (int i = 0; i < cfg_.code_size; ++i) {
        out.pred.mu[i] = mu.data()[i];
        out.pred.logvar[i] = logvar.data()[i];
    }
    return out;
}

Prediction GlissandoNet::forward_infer(nn::GraphContext& ctx, const ImageTensor& image,
                                       ForwardTrace* trace) const {
    auto mark = [&](const char* s) {
        if (trace) trace->stages.push_back(s);
    };
    mark("unet_encode");
    auto enc = unet_.encode(ctx, image_to_tensor(image));
    mark("unet_decode");
    ImagePyramid pyr = unet_.decode(ctx, enc);

    // All-zero code; the point cloud encoder is bypassed entirely.
    ad::Tensor z = ad::Tensor::zeros({cfg_.code_size});
    std::vector<ad::Tensor> pooled;
    if (cfg_.enable_decoder_fusion) {
        mark("decoder_fusion");
        pooled = transform_.pooled_vectors(ctx, pyr);
    }
    mark("point_decoder");
    auto stack = pdecoder_.forward(ctx, z, pooled);
    mark("shape_head");
    ad::Tensor pc_pred = shape_head(ctx, stack[4]);

    Prediction pred;
    if (cfg_.pose_head_location != PoseHeadLocation::kNone) {
        mark("pose_heads");
        ad::Tensor pose_feat;
        if (cfg_.pose_head_location == PoseHeadLocation::kDecoder) {
            pose_feat = cfg_.enable_decoder_fusion ? ad::concat(stack[4], pooled[3]) : stack[4];
        } else {
            pose_feat = ad::spatial_mean(enc[4]);
        }
        auto [q, t] = run_pose_heads(ctx, pose_feat);
        pred.pose_pred = pose_from_raw(q.data(), t.data());
    } else {
        pred.pose_pred = Pose::identity();
    }
    pred.pc_pred.points.resize(cfg_.n_points_out, 3);
    for (int i = 0; i < cfg_.n_points_out; ++i) {
        for (int k = 0; k < 3; ++k) pred.pc_pred.points(i, k) = pc_pred.data()[3 * i + k];
    }
    return pred;
}

} // namespace glissando
