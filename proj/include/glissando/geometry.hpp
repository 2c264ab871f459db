#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace glissando {

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using PixelMatrix = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

// Convention: (w, x, y, z), Hamilton product, right-handed frames.
struct Quaternion {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    double norm() const;
    Quaternion normalized() const; // throws std::invalid_argument on zero norm
    Quaternion conjugate() const { return {w, -x, -y, -z}; }

    static Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }
    static Quaternion from_axis_angle(const Eigen::Vector3d& axis, double angle_rad);
};

// Rigid object-to-camera transform. Translation in meters.
struct Pose {
    Quaternion rotation;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Pose inverse() const;
    static Pose identity() { return {}; }
};

struct CameraIntrinsics {
    double fx = 0.0, fy = 0.0; // focal lengths, pixels
    double cx = 0.0, cy = 0.0; // principal point, pixels
    int image_width = 0, image_height = 0;

    void validate() const; // throws std::invalid_argument on bad values
};

// Points live in canonical normalized object space (bounding-box diagonal <= 1).
// scale_m converts canonical units to meters when reporting metric distances.
struct PointCloud {
    PointMatrix points;
    double scale_m = 1.0;
    int category_id = -1;

    int size() const { return static_cast<int>(points.rows()); }
    void validate() const; // finiteness, N >= 1, diameter bound
};

// Z below which a projected point is flagged invalid rather than divided.
inline constexpr double kProjectionZMin = 1e-6;

// Orthonormal rotation matrix (det +1) from a quaternion; normalizes q first.
Eigen::Matrix3d quat_to_matrix(const Quaternion& q);

// Rotation matrix back to a quaternion with non-negative w.
Quaternion matrix_to_quat(const Eigen::Matrix3d& r);

// Rows of R*x + T.
PointMatrix transform_points(const PointMatrix& points, const Pose& pose);
PointMatrix transform_points(const PointCloud& pc, const Pose& pose);

struct ProjectionResult {
    PixelMatrix pixels;           // (u, v) per point; undefined where invalid
    std::vector<bool> valid;      // false if Z <= kProjectionZMin or off-image
};

// Pinhole projection of pose-transformed points:
// u = fx*X/Z + cx, v = fy*Y/Z + cy with (X,Y,Z) = R*x + T.
ProjectionResult project_points(const PointMatrix& points_world, const Pose& pose,
                                const CameraIntrinsics& K);

// Greedy farthest point sampling. Deterministic given start_index; ties break
// toward the smaller index. Throws std::invalid_argument when m > N or m < 1.
std::vector<int> farthest_point_sample(const PointMatrix& points, int m, int start_index = 0);

// Indices within `radius` of each center, nearest-first, truncated to k_max.
// A center with no in-radius point gets its single nearest point instead.
std::vector<std::vector<int>> ball_query(const PointMatrix& centers, const PointMatrix& points,
                                         double radius, int k_max);

// Maximum pairwise Euclidean distance. Throws std::invalid_argument when N < 2.
double diameter(const PointMatrix& points);
double diameter(const PointCloud& pc);

} // namespace glissando
