#pragma once

#include <optional>
#include <string>
#include <vector>

#include "glissando/geometry.hpp"

namespace glissando {

struct PoseErrors {
    double rotation_deg = 0.0;   // in [0, 180]
    double translation_cm = 0.0; // >= 0
};

struct CategoryReport {
    int category_id = -1; // -1 means the pooled "overall" row
    double mean_chamfer_mm = 0.0;
    double app_02 = 0.0;
    double app_05 = 0.0;
    double acc_10deg10cm = 0.0;
    int sample_count = 0;
};

// One evaluated sample; aggregate() folds these into CategoryReports.
struct SampleMetrics {
    int category_id = 0;
    double chamfer_mm = 0.0;
    double chamfer_canonical = 0.0; // convenience for desk-scale thresholds
    int app_02 = 0;
    int app_05 = 0;
    int acc_10deg10cm = 0;
};

struct AppResult {
    int indicator = 0; // 1 iff m1 <= alpha*d and m2 <= alpha*d
    double m1 = 0.0;
    double m2 = 0.0;
};

// Chamfer distance between canonical clouds, reported in millimeters via
// the ground-truth cloud's scale_m.
double chamfer_mm(const PointCloud& pc_pred, const PointCloud& pc_gt);

// Bidirectional average-distance indicator at threshold alpha, computed over
// the ground-truth cloud posed by each of the two poses. The diameter is that
// of the posed cloud (rigid, so it is computed once from the canonical cloud).
AppResult app_indicator(const PointCloud& pc, const Pose& pose_gt, const Pose& pose_hat,
                        double alpha);

// Geodesic rotation error in degrees plus Euclidean translation error in cm.
// If symmetry_axis is set, the rotation error is the angle between the two
// images of that axis (continuous rotational symmetry quotient).
PoseErrors pose_errors(const Pose& pose_hat, const Pose& pose_gt,
                       const std::optional<Eigen::Vector3d>& symmetry_axis = std::nullopt);

// 1 iff rotation_deg < 10 and translation_cm < 10 (both strict).
int ten_deg_ten_cm(const PoseErrors& errors);

// Per-category means plus a pooled "overall" row (category_id = -1, last).
std::vector<CategoryReport> aggregate(const std::vector<SampleMetrics>& samples);

// CSV with columns exactly:
// category,n,chamfer_mm,app_0.2,app_0.5,acc_10deg_10cm
std::string report_to_csv(const std::vector<CategoryReport>& reports,
                          const std::vector<std::string>& category_names);

// Human-readable aligned table for standard output.
std::string report_to_table(const std::vector<CategoryReport>& reports,
                            const std::vector<std::string>& category_names);

} // namespace glissando
