#include "glissando/train.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "glissando/checkpoint.hpp"
#include "glissando/config_file.hpp"
#include "glissando/errors.hpp"
#include "glissando/pipeline.hpp"

namespace glissando {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (lr_milestones.size() != lr_decay_factors.size()) {
        throw ConfigError("train: lr_milestones and lr_decay_factors must pair up");
    }
    for (size_t i = 0; i < lr_milestones.size(); ++i) {
        if (lr_milestones[i] >= epochs) {
            throw ConfigError("train: lr milestone beyond the epoch count");
        }
        if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1]) {
            throw ConfigError("train: lr milestones must be strictly increasing");
        }
    }
    if (dataset.empty()) throw ConfigError("train: dataset manifest path missing");
    model.validate();
}

TrainConfig load_train_config(const std::string& path) {
    const auto cfg = KeyValueConfig::parse_file(path);
    cfg.require_known_keys({
        "lr", "lr_milestones", "lr_decay_factors", "epochs", "batch_size", "seed", "dataset",
        "out_dir", "train_split", "checkpoint_every", "val_every",
        "loss_weights.w_shape", "loss_weights.w_kld", "loss_weights.w_pose",
        "model.code_size", "model.base_channels", "model.point_base_channels",
        "model.n_points_out", "model.input_height", "model.input_width", "model.pooled_dim",
        "model.pool_conv_channels", "model.norm_groups", "model.shape_loss_kind",
        "model.pose_head_location", "model.pose_head_style", "model.enable_encoder_fusion",
        "model.enable_decoder_fusion", "model.use_pc_encoder",
    });
    TrainConfig tc;
    tc.lr = cfg.get_double("lr", tc.lr);
    tc.lr_milestones = cfg.get_int_list("lr_milestones");
    tc.lr_decay_factors = cfg.get_double_list("lr_decay_factors");
    tc.epochs = cfg.get_int("epochs", tc.epochs);
    tc.batch_size = cfg.get_int("batch_size", tc.batch_size);
    tc.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
    tc.dataset = cfg.get_string("dataset");
    tc.out_dir = cfg.get_string("out_dir", tc.out_dir);
    tc.train_split = cfg.get_string("train_split", tc.train_split);
    tc.checkpoint_every = cfg.get_int("checkpoint_every", tc.checkpoint_every);
    tc.val_every = cfg.get_int("val_every", tc.val_every);
    tc.loss_weights.w_shape = cfg.get_double("loss_weights.w_shape", tc.loss_weights.w_shape);
    tc.loss_weights.w_kld = cfg.get_double("loss_weights.w_kld", tc.loss_weights.w_kld);
    tc.loss_weights.w_pose = cfg.get_double("loss_weights.w_pose", tc.loss_weights.w_pose);

    // Model keys reuse the ModelConfig text parser.
    std::ostringstream model_kv;
    for (const auto& [key, value] : cfg.entries()) {
        if (key.rfind("model.", 0) == 0) model_kv << key.substr(6) << " = " << value << "\n";
    }
    tc.model = ModelConfig::from_key_values(model_kv.str());
    tc.validate();
    return tc;
}

double effective_lr(const TrainConfig& cfg, int epoch) {
    double lr = cfg.lr;
    for (size_t i = 0; i < cfg.lr_milestones.size(); ++i) {
        if (cfg.lr_milestones[i] <= epoch) lr *= cfg.lr_decay_factors[i];
    }
    return lr;
}

std::string RunLog::to_csv() const {
    std::ostringstream os;
    os << "epoch,step,shape,kld,pose,total,lr,wall_ms\n";
    char buf[240];
    for (const auto& s : steps) {
        std::snprintf(buf, sizeof(buf), "%d,%lld,%.8g,%.8g,%.8g,%.8g,%.8g,%.3f\n", s.epoch,
                      static_cast<long long>(s.step), s.loss.shape, s.loss.kld, s.loss.pose,
                      s.loss.total, s.lr, s.wall_ms);
        os << buf;
    }
    return os.str();
}

std::vector<Sample> load_split(const DatasetManifest& manifest, const std::string& split) {
    const auto idx = manifest.indices_for_split(split);
    std::vector<Sample> samples(idx.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < static_cast<int>(idx.size()); ++i) {
        samples[i] = load_sample(manifest, idx[i]);
    }
    return samples;
}

namespace {

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;

    void step(nn::ParamRegistry& params, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (const auto& p : params.items()) {
            if (p->adam_m.empty()) {
                p->adam_m.assign(p->value.size(), 0.0f);
                p->adam_v.assign(p->value.size(), 0.0f);
            }
            float* v = p->value.data();
            float* g = p->grad.data();
            float* m1 = p->adam_m.data();
            float* m2 = p->adam_v.data();
            const int64_t n = p->size();
            for (int64_t i = 0; i < n; ++i) {
                m1[i] = static_cast<float>(beta1 * m1[i] + (1.0 - beta1) * g[i]);
                m2[i] = static_cast<float>(beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i]);
                const double mhat = m1[i] / bc1;
                const double vhat = m2[i] / bc2;
                v[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }
};

} // namespace

TrainResult train(const TrainConfig& cfg, const std::string& resume_ckpt) {
    cfg.validate();
    const DatasetManifest manifest = load_manifest(cfg.dataset);
    const std::vector<Sample> samples = load_split(manifest, cfg.train_split);
    if (samples.empty()) {
        throw DataError("train: split '" + cfg.train_split + "' is empty");
    }
    for (const auto& s : samples) {
        if (s.pc_canonical.size() != cfg.model.n_points_out) {
            throw ConfigError("train: dataset cloud size " +
                              std::to_string(s.pc_canonical.size()) +
                              " does not match model n_points_out " +
                              std::to_string(cfg.model.n_points_out));
        }
        if (s.image.height != cfg.model.input_height ||
            s.image.width != cfg.model.input_width) {
            throw ConfigError("train: dataset image size does not match the model config");
        }
    }

    GlissandoNet model(cfg.model, cfg.seed);
    Adam adam;
    int start_epoch = 0;
    Rng master_rng(mix_seed(cfg.seed, 0x7261696eULL));
    if (!resume_ckpt.empty()) {
        const CheckpointMeta meta = load_checkpoint(resume_ckpt, model);
        start_epoch = static_cast<int>(meta.epoch);
        adam.t = meta.global_step;
        if (!meta.rng_state.empty()) master_rng.deserialize(meta.rng_state);
    }

    fs::create_directories(cfg.out_dir);
    const std::string last_path = (fs::path(cfg.out_dir) / "last.ckpt").string();
    const std::string final_path = (fs::path(cfg.out_dir) / "final.ckpt").string();

    TrainResult result;
    int64_t global_step = adam.t;
    const int n = static_cast<int>(samples.size());

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = effective_lr(cfg, epoch);
        // Deterministic shuffle independent of thread count.
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(mix_seed(cfg.seed, 0x73687566ULL, static_cast<uint64_t>(epoch)));
        for (int i = n - 1; i > 0; --i) {
            std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
        }

        for (int batch_start = 0; batch_start < n; batch_start += cfg.batch_size) {
            const auto t0 = std::chrono::steady_clock::now();
            const int bsz = std::min(cfg.batch_size, n - batch_start);
            model.params().zero_grad();
            LossBreakdown mean{};

            // Workers run whole per-sample graphs; gradients are harvested in
            // sample order afterwards so results do not depend on threads.
            const int chunk = std::max(1, omp_get_max_threads());
            for (int c0 = 0; c0 < bsz; c0 += chunk) {
                const int c1 = std::min(bsz, c0 + chunk);
                std::vector<std::unique_ptr<nn::GraphContext>> ctxs(c1 - c0);
                std::vector<GlissandoNet::TrainOutputs> outs(c1 - c0);
#pragma omp parallel for schedule(static, 1)
                for (int bi = c0; bi < c1; ++bi) {
                    const Sample& s = samples[order[batch_start + bi]];
                    auto ctx = std::make_unique<nn::GraphContext>(true);
                    Rng noise_rng(mix_seed(cfg.seed, static_cast<uint64_t>(global_step),
                                           static_cast<uint64_t>(bi) + 1));
                    auto out = model.forward_train(*ctx, s.image, s.pc_canonical, s.pose,
                                                   s.intrinsics, cfg.loss_weights, noise_rng);
                    ad::backward(out.total);
                    ctxs[bi - c0] = std::move(ctx);
                    outs[bi - c0] = std::move(out);
                }
                for (int bi = c0; bi < c1; ++bi) {
                    ctxs[bi - c0]->harvest_gradients();
                    mean.shape += outs[bi - c0].losses.shape / bsz;
                    mean.kld += outs[bi - c0].losses.kld / bsz;
                    mean.pose += outs[bi - c0].losses.pose / bsz;
                    mean.total += outs[bi - c0].losses.total / bsz;
                }
            }
            // Mean gradient over the batch.
            const float inv = 1.0f / static_cast<float>(bsz);
            for (const auto& p : model.params().items()) {
                for (auto& g : p->grad) g *= inv;
            }
            adam.step(model.params(), lr);
            ++global_step;

            StepRecord rec;
            rec.epoch = epoch;
            rec.step = global_step;
            rec.loss = mean;
            rec.lr = lr;
            rec.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
            if (!std::isfinite(rec.loss.total)) {
                throw std::runtime_error("train: non-finite loss at step " +
                                         std::to_string(global_step));
            }
            result.log.steps.push_back(rec);
        }

        const bool last_epoch = epoch + 1 == cfg.epochs;
        if ((cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) ||
            last_epoch) {
            CheckpointMeta meta;
            meta.epoch = epoch + 1;
            meta.global_step = global_step;
            meta.rng_state = master_rng.serialize();
            save_checkpoint(last_path, model, meta);
        }
        if (cfg.val_every > 0 && (epoch + 1) % cfg.val_every == 0) {
            EvalOptions opts;
            auto eval = evaluate(model, manifest, "val", opts);
            result.log.validations.push_back({epoch, eval.reports});
        }
    }

    CheckpointMeta meta;
    meta.epoch = cfg.epochs;
    meta.global_step = global_step;
    meta.rng_state = master_rng.serialize();
    save_checkpoint(final_path, model, meta);
    result.final_checkpoint = final_path;
    result.last_checkpoint = last_path;

    std::ofstream log_os(fs::path(cfg.out_dir) / "runlog.csv");
    log_os << result.log.to_csv();
    return result;
}

} // namespace glissando
