#pragma once

// Evaluation harness (per-category report tables), occlusion study, ablation
// driver and single-image prediction with overlay rendering.

#include <optional>
#include <string>
#include <vector>

#include "glissando/data.hpp"
#include "glissando/metrics.hpp"
#include "glissando/model.hpp"

namespace glissando {

struct TrainConfig; // train.hpp

struct EvalOptions {
    bool oracle = false; // inject ground truth as the prediction (upper bound)
    std::optional<OcclusionDirection> occlusion;
};

struct EvalResult {
    std::vector<SampleMetrics> samples;
    std::vector<CategoryReport> reports; // per category + trailing overall
    double overall_chamfer_canonical = 0.0;
};

EvalResult evaluate(const GlissandoNet& model, const DatasetManifest& manifest,
                    const std::string& split, const EvalOptions& options = {});
EvalResult evaluate_samples(const GlissandoNet& model, const std::vector<Sample>& samples,
                            const EvalOptions& options = {});

// Table-8-shaped study: rows chamfer_mm and acc_10deg_10cm, columns bottom,
// center, left, right, top, overall; clean-split numbers and per-direction
// deltas go to the console text.
struct OcclusionReport {
    std::vector<std::string> directions; // bottom..top, then "overall"
    std::vector<double> chamfer_mm;
    std::vector<double> acc_10deg10cm;
    double clean_chamfer_mm = 0.0;
    double clean_acc = 0.0;

    std::string to_csv() const;
    std::string to_table() const;
};

OcclusionReport occlusion_study(const GlissandoNet& model, const DatasetManifest& manifest,
                                const std::string& split = "test");

enum class AblationAxis { kCodeSize, kPoseHead, kFusion, kPcEncoder };
AblationAxis ablation_axis_from_name(const std::string& name);

struct AblationRow {
    std::string label;
    double chamfer_mm = 0.0;
    double app_02 = 0.0;
    double app_05 = 0.0;
    double acc_10deg10cm = 0.0;
};

// Trains and evaluates every variant along one axis with a shared seed and
// dataset. Variant labels follow the ablation tables:
//   code_size: 32 64 128 256 512 1024
//   pose_head: decoder image_encoder none single_network
//   fusion:    full DisEn DisDe
//   pc_encoder: on off
std::vector<AblationRow> ablate(const TrainConfig& base_cfg, AblationAxis axis);
std::string ablation_to_csv(const std::vector<AblationRow>& rows);

// Runs zero-code inference on one image, projects the predicted cloud with
// the predicted pose through the given intrinsics, splats 2-px disks over the
// input and writes overlay.png + predicted.ply into out_dir.
void predict_and_overlay(const GlissandoNet& model, const std::string& image_path,
                         const CameraIntrinsics& K, const std::string& out_dir);

} // namespace glissando
