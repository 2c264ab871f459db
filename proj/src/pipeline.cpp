#include "glissando/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "glissando/errors.hpp"
#include "glissando/image_io.hpp"
#include "glissando/train.hpp"

namespace glissando {

namespace fs = std::filesystem;

EvalResult evaluate(const GlissandoNet& model, const DatasetManifest& manifest,
                    const std::string& split, const EvalOptions& options) {
    const auto samples = load_split(manifest, split);
    if (samples.empty()) {
        throw std::invalid_argument("evaluate: split '" + split + "' is empty");
    }
    return evaluate_samples(model, samples, options);
}

EvalResult evaluate_samples(const GlissandoNet& model, const std::vector<Sample>& samples,
                            const EvalOptions& options) {
    EvalResult result;
    result.samples.resize(samples.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
        const Sample& s = samples[i];
        Prediction pred;
        if (options.oracle) {
            pred.pc_pred = s.pc_canonical;
            pred.pose_pred = s.pose;
        } else {
            nn::GraphContext ctx(false);
            const ImageTensor* image = &s.image;
            ImageTensor occluded;
            if (options.occlusion) {
                occluded = occlude(s.image, *options.occlusion);
                image = &occluded;
            }
            pred = model.forward_infer(ctx, *image);
        }
        SampleMetrics sm;
        sm.category_id = s.category_id;
        sm.chamfer_canonical = chamfer_distance(pred.pc_pred.points, s.pc_canonical.points);
        sm.chamfer_mm = sm.chamfer_canonical * s.pc_canonical.scale_m * 1000.0;
        sm.app_02 = app_indicator(s.pc_canonical, s.pose, pred.pose_pred, 0.2).indicator;
        sm.app_05 = app_indicator(s.pc_canonical, s.pose, pred.pose_pred, 0.5).indicator;
        sm.acc_10deg10cm = ten_deg_ten_cm(pose_errors(pred.pose_pred, s.pose));
        result.samples[i] = sm;
    }
    result.reports = aggregate(result.samples);
    for (const auto& s : result.samples) {
        result.overall_chamfer_canonical += s.chamfer_canonical / result.samples.size();
    }
    return result;
}

std::string OcclusionReport::to_csv() const {
    std::ostringstream os;
    os << "metric";
    for (const auto& d : directions) os << "," << d;
    os << "\nchamfer_mm";
    char buf[64];
    for (const double v : chamfer_mm) {
        std::snprintf(buf, sizeof(buf), ",%.6f", v);
        os << buf;
    }
    os << "\nacc_10deg_10cm";
    for (const double v : acc_10deg10cm) {
        std::snprintf(buf, sizeof(buf), ",%.6f", v);
        os << buf;
    }
    os << "\n";
    return os.str();
}

std::string OcclusionReport::to_table() const {
    std::ostringstream os;
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-16s", "metric");
    os << buf;
    for (const auto& d : directions) {
        std::snprintf(buf, sizeof(buf), "%10s", d.c_str());
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%10s\n", "clean");
    os << buf;
    std::snprintf(buf, sizeof(buf), "%-16s", "chamfer_mm");
    os << buf;
    for (const double v : chamfer_mm) {
        std::snprintf(buf, sizeof(buf), "%10.4f", v);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%10.4f\n", clean_chamfer_mm);
    os << buf;
    std::snprintf(buf, sizeof(buf), "%-16s", "acc_10deg_10cm");
    os << buf;
    for (const double v : acc_10deg10cm) {
        std::snprintf(buf, sizeof(buf), "%10.4f", v);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%10.4f\n", clean_acc);
    os << buf;
    os << "delta chamfer_mm vs clean:";
    for (size_t i = 0; i + 1 < directions.size(); ++i) {
        std::snprintf(buf, sizeof(buf), " %s=%+.4f", directions[i].c_str(),
                      chamfer_mm[i] - clean_chamfer_mm);
        os << buf;
    }
    os << "\n";
    return os.str();
}

OcclusionReport occlusion_study(const GlissandoNet& model, const DatasetManifest& manifest,
                                const std::string& split) {
    const auto samples = load_split(manifest, split);
    if (samples.empty()) {
        throw std::invalid_argument("occlusion_study: split '" + split + "' is empty");
    }
    OcclusionReport report;
    EvalOptions clean_opts;
    const EvalResult clean = evaluate_samples(model, samples, clean_opts);
    report.clean_chamfer_mm = clean.reports.back().mean_chamfer_mm;
    report.clean_acc = clean.reports.back().acc_10deg10cm;

    double sum_chamfer = 0.0, sum_acc = 0.0;
    for (const auto& [dir, name] : kOcclusionDirections) {
        EvalOptions opts;
        opts.occlusion = dir;
        const EvalResult r = evaluate_samples(model, samples, opts);
        report.directions.push_back(name);
        report.chamfer_mm.push_back(r.reports.back().mean_chamfer_mm);
        report.acc_10deg10cm.push_back(r.reports.back().acc_10deg10cm);
        sum_chamfer += r.reports.back().mean_chamfer_mm;
        sum_acc += r.reports.back().acc_10deg10cm;
    }
    report.directions.push_back("overall");
    report.chamfer_mm.push_back(sum_chamfer / 5.0);
    report.acc_10deg10cm.push_back(sum_acc / 5.0);
    return report;
}

AblationAxis ablation_axis_from_name(const std::string& name) {
    if (name == "code_size") return AblationAxis::kCodeSize;
    if (name == "pose_head") return AblationAxis::kPoseHead;
    if (name == "fusion") return AblationAxis::kFusion;
    if (name == "pc_encoder") return AblationAxis::kPcEncoder;
    throw ConfigError("ablate: unknown axis '" + name + "'");
}

std::vector<AblationRow> ablate(const TrainConfig& base_cfg, AblationAxis axis) {
    struct Variant {
        std::string label;
        ModelConfig model;
    };
    std::vector<Variant> variants;
    auto with = [&](const std::string& label, auto&& tweak) {
        ModelConfig m = base_cfg.model;
        tweak(m);
        variants.push_back({label, m});
    };
    switch (axis) {
        case AblationAxis::kCodeSize:
            for (const int d : {32, 64, 128, 256, 512, 1024}) {
                with(std::to_string(d), [&](ModelConfig& m) { m.code_size = d; });
            }
            break;
        case AblationAxis::kPoseHead:
            with("decoder", [](ModelConfig& m) {
                m.pose_head_location = PoseHeadLocation::kDecoder;
            });
            with("image_encoder", [](ModelConfig& m) {
                m.pose_head_location = PoseHeadLocation::kImageEncoder;
            });
            with("none", [](ModelConfig& m) { m.pose_head_location = PoseHeadLocation::kNone; });
            with("single_network", [](ModelConfig& m) {
                m.pose_head_location = PoseHeadLocation::kDecoder;
                m.pose_head_style = PoseHeadStyle::kSingleNetwork;
            });
            break;
        case AblationAxis::kFusion:
            with("full", [](ModelConfig&) {});
            with("DisEn", [](ModelConfig& m) { m.enable_encoder_fusion = false; });
            with("DisDe", [](ModelConfig& m) { m.enable_decoder_fusion = false; });
            break;
        case AblationAxis::kPcEncoder:
            with("on", [](ModelConfig&) {});
            with("off", [](ModelConfig& m) { m.use_pc_encoder = false; });
            break;
    }

    std::vector<AblationRow> rows;
    const DatasetManifest manifest = load_manifest(base_cfg.dataset);
    const std::string eval_split =
        manifest.indices_for_split("test").empty() ? base_cfg.train_split : "test";
    for (const auto& variant : variants) {
        TrainConfig cfg = base_cfg;
        cfg.model = variant.model;
        cfg.out_dir = (fs::path(base_cfg.out_dir) / ("ablate_" + variant.label)).string();
        const TrainResult tr = train(cfg);
        GlissandoNet model(cfg.model, cfg.seed);
        load_checkpoint(tr.final_checkpoint, model);
        const EvalResult ev = evaluate(model, manifest, eval_split);
        AblationRow row;
        row.label = variant.label;
        row.chamfer_mm = ev.reports.back().mean_chamfer_mm;
        row.app_02 = ev.reports.back().app_02;
        row.app_05 = ev.reports.back().app_05;
        row.acc_10deg10cm = ev.reports.back().acc_10deg10cm;
        rows.push_back(row);
    }
    return rows;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "variant,chamfer_mm,app_0.2,app_0.5,acc_10deg_10cm\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", r.label.c_str(),
                      r.chamfer_mm, r.app_02, r.app_05, r.acc_10deg10cm);
        os << buf;
    }
    return os.str();
}

void predict_and_overlay(const GlissandoNet& model, const std::string& image_path,
                         const CameraIntrinsics& K, const std::string& out_dir) {
    const ImageTensor image = read_png_rgb8(image_path);
    if (image.height != model.config().input_height ||
        image.width != model.config().input_width) {
        throw DataError("predict: image size does not match the model input size");
    }
    nn::GraphContext ctx(false);
    const Prediction pred = model.forward_infer(ctx, image);

    fs::create_directories(out_dir);
    write_ascii_ply(fs::path(out_dir) / "predicted.ply", pred.pc_pred.points);

    const auto proj = project_points(pred.pc_pred.points, pred.pose_pred, K);
    ImageTensor overlay = image;
    for (Eigen::Index i = 0; i < proj.pixels.rows(); ++i) {
        if (!proj.valid[i]) continue;
        const int u = static_cast<int>(std::lround(proj.pixels(i, 0)));
        const int v = static_cast<int>(std::lround(proj.pixels(i, 1)));
        for (int dy = -2; dy <= 2; ++dy) {
            for (int dx = -2; dx <= 2; ++dx) {
                if (dx * dx + dy * dy > 4) continue; // 2-px disk
                const int x = u + dx, y = v + dy;
                if (x < 0 || x >= overlay.width || y < 0 || y >= overlay.height) continue;
                overlay.at(0, y, x) = 0.0f;
                overlay.at(1, y, x) = 1.0f;
                overlay.at(2, y, x) = 0.2f;
            }
        }
    }
    write_png_rgb8((fs::path(out_dir) / "overlay.png").string(), overlay);
}

} // namespace glissando
