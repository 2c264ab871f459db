#pragma once

#include <Eigen/Dense>
#include <vector>

#include "glissando/geometry.hpp"

namespace glissando {

// Eq.-style weighted sum of the three training objectives. Defaults follow
// the training recipe (shape 1, KL 100, pose 100).
struct LossWeights {
    double w_shape = 1.0;
    double w_kld = 100.0;
    double w_pose = 100.0;
};

struct LossBreakdown {
    double shape = 0.0;
    double kld = 0.0;
    double pose = 0.0;
    double total = 0.0;
};

// Symmetric mean nearest-neighbor distance, unsquared.
double chamfer_distance(const PointMatrix& pc1, const PointMatrix& pc2);

// Mean cost of the optimal bijection between equal-size clouds. Exact
// (Hungarian) up to 512 points, epsilon-auction above.
double emd_distance(const PointMatrix& pc1, const PointMatrix& pc2);
double emd_distance(const PointMatrix& pc1, const PointMatrix& pc2,
                    std::vector<int>& assignment_out);

// Mean distance between the ground-truth cloud moved by the two poses.
double per_point_l2(const PointCloud& pc_gt, const Pose& pose_hat, const Pose& pose_gt);

// KL(N(mu, exp(logvar)) || N(0, I)) averaged over dimensions.
double kl_standard_normal(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar);

LossBreakdown total_loss(double shape, double kld, double pose, const LossWeights& w);

} // namespace glissando
