#include "glissando/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "glissando/losses.hpp"

namespace glissando {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string category_label(int id, const std::vector<std::string>& names) {
    if (id < 0) return "overall";
    if (id < static_cast<int>(names.size()) && !names[id].empty()) return names[id];
    return "cat" + std::to_string(id);
}

} // namespace

double chamfer_mm(const PointCloud& pc_pred, const PointCloud& pc_gt) {
    if (!(pc_gt.scale_m > 0.0)) {
        throw std::invalid_argument("chamfer_mm: ground-truth cloud lacks a metric scale");
    }
    return chamfer_distance(pc_pred.points, pc_gt.points) * pc_gt.scale_m * 1000.0;
}

AppResult app_indicator(const PointCloud& pc, const Pose& pose_gt, const Pose& pose_hat,
                        double alpha) {
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("app_indicator: alpha must be positive");
    }
    const double d = diameter(pc); // rigid poses preserve the diameter
    const PointMatrix a = transform_points(pc, pose_gt);
    const PointMatrix b = transform_points(pc, pose_hat);
    const int n = pc.size();
    AppResult res;
    double sum_ab = 0.0, sum_ba = 0.0;
    for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            best = std::min(best, (a.row(i) - b.row(j)).norm());
        }
        sum_ab += best;
    }
    for (int j = 0; j < n; ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            best = std::min(best, (a.row(i) - b.row(j)).norm());
        }
        sum_ba += best;
    }
    res.m1 = sum_ab / n;
    res.m2 = sum_ba / n;
    res.indicator = (res.m1 <= alpha * d && res.m2 <= alpha * d) ? 1 : 0;
    return res;
}

PoseErrors pose_errors(const Pose& pose_hat, const Pose& pose_gt,
                       const std::optional<Eigen::Vector3d>& symmetry_axis) {
    PoseErrors err;
    const Eigen::Matrix3d r_hat = quat_to_matrix(pose_hat.rotation);
    const Eigen::Matrix3d r_gt = quat_to_matrix(pose_gt.rotation);
    if (symmetry_axis) {
        const Eigen::Vector3d axis = symmetry_axis->normalized();
        const double c = std::clamp((r_gt * axis).dot(r_hat * axis), -1.0, 1.0);
        err.rotation_deg = std::acos(c) * 180.0 / kPi;
    } else {
        const double c = std::clamp(((r_gt.transpose() * r_hat).trace() - 1.0) / 2.0, -1.0, 1.0);
        err.rotation_deg = std::acos(c) * 180.0 / kPi;
    }
    err.translation_cm = (pose_hat.translation - pose_gt.translation).norm() * 100.0;
    return err;
}

int ten_deg_ten_cm(const PoseErrors& errors) {
    return (errors.rotation_deg < 10.0 && errors.translation_cm < 10.0) ? 1 : 0;
}

std::vector<CategoryReport> aggregate(const std::vector<SampleMetrics>& samples) {
    if (samples.empty()) {
        throw std::invalid_argument("aggregate: no samples");
    }
    std::map<int, std::vector<const SampleMetrics*>> by_cat;
    for (const auto& s : samples) by_cat[s.category_id].push_back(&s);

    auto fold = [](const std::vector<const SampleMetrics*>& group, int cat_id) {
        CategoryReport rep;
        rep.category_id = cat_id;
        rep.sample_count = static_cast<int>(group.size());
        for (const auto* s : group) {
            rep.mean_chamfer_mm += s->chamfer_mm;
            rep.app_02 += s->app_02;
            rep.app_05 += s->app_05;
            rep.acc_10deg10cm += s->acc_10deg10cm;
        }
        const double n = static_cast<double>(group.size());
        rep.mean_chamfer_mm /= n;
        rep.app_02 /= n;
        rep.app_05 /= n;
        rep.acc_10deg10cm /= n;
        return rep;
    };

    std::vector<CategoryReport> out;
    std::vector<const SampleMetrics*> all;
    for (const auto& [cat, group] : by_cat) {
        out.push_back(fold(group, cat));
        all.insert(all.end(), group.begin(), group.end());
    }
    out.push_back(fold(all, -1));
    return out;
}

std::string report_to_csv(const std::vector<CategoryReport>& reports,
                          const std::vector<std::string>& category_names) {
    std::ostringstream os;
    os << "category,n,chamfer_mm,app_0.2,app_0.5,acc_10deg_10cm\n";
    char buf[160];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%.6f\n",
                      category_label(r.category_id, category_names).c_str(), r.sample_count,
                      r.mean_chamfer_mm, r.app_02, r.app_05, r.acc_10deg10cm);
        os << buf;
    }
    return os.str();
}

std::string report_to_table(const std::vector<CategoryReport>& reports,
                            const std::vector<std::string>& category_names) {
    std::ostringstream os;
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-14s %6s %12s %9s %9s %14s\n", "category", "n",
                  "chamfer_mm", "app_0.2", "app_0.5", "10deg&10cm");
    os << buf;
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof(buf), "%-14s %6d %12.4f %8.1f%% %8.1f%% %13.1f%%\n",
                      category_label(r.category_id, category_names).c_str(), r.sample_count,
                      r.mean_chamfer_mm, 100.0 * r.app_02, 100.0 * r.app_05,
                      100.0 * r.acc_10deg10cm);
        os << buf;
    }
    return os.str();
}

} // namespace glissando
