#include "glissando/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace glissando {

double Quaternion::norm() const {
    return std::sqrt(w * w + x * x + y * y + z * z);
}

Quaternion Quaternion::normalized() const {
    const double n = norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw std::invalid_argument("Quaternion::normalized: zero or non-finite norm");
    }
    return {w / n, x / n, y / n, z / n};
}

Quaternion Quaternion::from_axis_angle(const Eigen::Vector3d& axis, double angle_rad) {
    const double n = axis.norm();
    if (!(n > 0.0)) {
        throw std::invalid_argument("Quaternion::from_axis_angle: zero axis");
    }
    const double half = 0.5 * angle_rad;
    const double s = std::sin(half) / n;
    return {std::cos(half), axis.x() * s, axis.y() * s, axis.z() * s};
}

Pose Pose::inverse() const {
    const Eigen::Matrix3d r = quat_to_matrix(rotation);
    Pose inv;
    inv.rotation = rotation.normalized().conjugate();
    inv.translation = -(r.transpose() * translation);
    return inv;
}

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw std::invalid_argument("CameraIntrinsics: focal lengths must be positive");
    }
    if (cx < 0.0 || cx >= image_width || cy < 0.0 || cy >= image_height) {
        throw std::invalid_argument("CameraIntrinsics: principal point outside image");
    }
}

void PointCloud::validate() const {
    if (points.rows() < 1) {
        throw std::invalid_argument("PointCloud: empty");
    }
    if (!points.allFinite()) {
        throw std::invalid_argument("PointCloud: non-finite coordinates");
    }
    if (points.rows() >= 2 && diameter(points) > 1.0 + 1e-6) {
        throw std::invalid_argument("PointCloud: canonical diameter exceeds unit bound");
    }
    if (!(scale_m > 0.0)) {
        throw std::invalid_argument("PointCloud: scale_m must be positive");
    }
}

Eigen::Matrix3d quat_to_matrix(const Quaternion& q_in) {
    const Quaternion q = q_in.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Quaternion matrix_to_quat(const Eigen::Matrix3d& r) {
    // Shepperd's method: pick the largest diagonal combination for stability.
    Quaternion q;
    const double tr = r.trace();
    if (tr > 0.0) {
        double s = std::sqrt(tr + 1.0) * 2.0;
        q.w = 0.25 * s;
        q.x = (r(2, 1) - r(1, 2)) / s;
        q.y = (r(0, 2) - r(2, 0)) / s;
        q.z = (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        q.w = (r(2, 1) - r(1, 2)) / s;
        q.x = 0.25 * s;
        q.y = (r(0, 1) + r(1, 0)) / s;
        q.z = (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        q.w = (r(0, 2) - r(2, 0)) / s;
        q.x = (r(0, 1) + r(1, 0)) / s;
        q.y = 0.25 * s;
        q.z = (r(1, 2) + r(2, 1)) / s;
    } else {
        double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        q.w = (r(1, 0) - r(0, 1)) / s;
        q.x = (r(0, 2) + r(2, 0)) / s;
        q.y = (r(1, 2) + r(2, 1)) / s;
        q.z = 0.25 * s;
    }
    if (q.w < 0.0) {
        q = {-q.w, -q.x, -q.y, -q.z};
    }
    return q.normalized();
}

PointMatrix transform_points(const PointMatrix& points, const Pose& pose) {
    const Eigen::Matrix3d r = quat_to_matrix(pose.rotation);
    PointMatrix out = points * r.transpose();
    out.rowwise() += pose.translation.transpose();
    return out;
}

PointMatrix transform_points(const PointCloud& pc, const Pose& pose) {
    return transform_points(pc.points, pose);
}

ProjectionResult project_points(const PointMatrix& points_world, const Pose& pose,
                                const CameraIntrinsics& K) {
    K.validate();
    const PointMatrix cam = transform_points(points_world, pose);
    const int n = static_cast<int>(cam.rows());
    ProjectionResult res;
    res.pixels.resize(n, 2);
    res.valid.assign(n, false);
    for (int i = 0; i < n; ++i) {
        const double zc = cam(i, 2);
        if (zc <= kProjectionZMin) {
            res.pixels(i, 0) = 0.0;
            res.pixels(i, 1) = 0.0;
            continue;
        }
        const double u = K.fx * cam(i, 0) / zc + K.cx;
        const double v = K.fy * cam(i, 1) / zc + K.cy;
        res.pixels(i, 0) = u;
        res.pixels(i, 1) = v;
        res.valid[i] = u >= 0.0 && u < K.image_width && v >= 0.0 && v < K.image_height;
    }
    return res;
}

std::vector<int> farthest_point_sample(const PointMatrix& points, int m, int start_index) {
    const int n = static_cast<int>(points.rows());
    if (m < 1 || m > n) {
        throw std::invalid_argument("farthest_point_sample: need 1 <= m <= N");
    }
    if (start_index < 0 || start_index >= n) {
        throw std::invalid_argument("farthest_point_sample: start_index out of range");
    }
    std::vector<int> picked;
    picked.reserve(m);
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    int current = start_index;
    picked.push_back(current);
    for (int step = 1; step < m; ++step) {
        int best = -1;
        double best_d2 = -1.0;
        for (int i = 0; i < n; ++i) {
            const double d2 = (points.row(i) - points.row(current)).squaredNorm();
            if (d2 < min_d2[i]) min_d2[i] = d2;
            if (min_d2[i] > best_d2) {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        picked.push_back(best);
        current = best;
    }
    return picked;
}

std::vector<std::vector<int>> ball_query(const PointMatrix& centers, const PointMatrix& points,
                                         double radius, int k_max) {
    if (!(radius > 0.0)) {
        throw std::invalid_argument("ball_query: radius must be positive");
    }
    if (k_max < 1) {
        throw std::invalid_argument("ball_query: k_max must be >= 1");
    }
    const int m = static_cast<int>(centers.rows());
    const int n = static_cast<int>(points.rows());
    const double r2 = radius * radius;
    std::vector<std::vector<int>> groups(m);
    std::vector<std::pair<double, int>> hits;
    for (int c = 0; c < m; ++c) {
        hits.clear();
        int nearest = 0;
        double nearest_d2 = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            const double d2 = (points.row(i) - centers.row(c)).squaredNorm();
            if (d2 < nearest_d2) {
                nearest_d2 = d2;
                nearest = i;
            }
            if (d2 <= r2) hits.emplace_back(d2, i);
        }
        std::sort(hits.begin(), hits.end());
        auto& g = groups[c];
        for (int k = 0; k < static_cast<int>(hits.size()) && k < k_max; ++k) {
            g.push_back(hits[k].second);
        }
        if (g.empty()) g.push_back(nearest);
    }
    return groups;
}

double diameter(const PointMatrix& points) {
    const int n = static_cast<int>(points.rows());
    if (n < 2) {
        throw std::invalid_argument("diameter: need at least 2 points");
    }
    double best = 0.0;
#pragma omp parallel for schedule(static) reduction(max : best)
    for (int i = 0; i < n; ++i) {
        double row_best = 0.0;
        for (int j = i + 1; j < n; ++j) {
            const double d2 = (points.row(i) - points.row(j)).squaredNorm();
            if (d2 > row_best) row_best = d2;
        }
        if (row_best > best) best = row_best;
    }
    return std::sqrt(best);
}

double diameter(const PointCloud& pc) {
    return diameter(pc.points);
}

} // namespace glissando
