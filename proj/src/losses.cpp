#include "glissando/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "glissando/loss_kernels.hpp"

namespace glissando {

double chamfer_distance(const PointMatrix& pc1, const PointMatrix& pc2) {
    return kernels::chamfer<double>(pc1.data(), static_cast<int>(pc1.rows()),
                                    pc2.data(), static_cast<int>(pc2.rows()));
}

double emd_distance(const PointMatrix& pc1, const PointMatrix& pc2) {
    std::vector<int> assignment;
    return emd_distance(pc1, pc2, assignment);
}

double emd_distance(const PointMatrix& pc1, const PointMatrix& pc2,
                    std::vector<int>& assignment_out) {
    if (pc1.rows() != pc2.rows()) {
        throw std::invalid_argument("emd_distance: clouds must have equal sizes");
    }
    return kernels::emd<double>(pc1.data(), pc2.data(), static_cast<int>(pc1.rows()),
                                &assignment_out);
}

double per_point_l2(const PointCloud& pc_gt, const Pose& pose_hat, const Pose& pose_gt) {
    const double qh[4] = {pose_hat.rotation.w, pose_hat.rotation.x, pose_hat.rotation.y,
                          pose_hat.rotation.z};
    const double qg[4] = {pose_gt.rotation.w, pose_gt.rotation.x, pose_gt.rotation.y,
                          pose_gt.rotation.z};
    const double th[3] = {pose_hat.translation.x(), pose_hat.translation.y(),
                          pose_hat.translation.z()};
    const double tg[3] = {pose_gt.translation.x(), pose_gt.translation.y(),
                          pose_gt.translation.z()};
    return kernels::per_point_l2<double>(pc_gt.points.data(), pc_gt.size(), qh, th, qg, tg);
}

double kl_standard_normal(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar) {
    if (mu.size() != logvar.size()) {
        throw std::invalid_argument("kl_standard_normal: size mismatch");
    }
    return kernels::kl_standard_normal<double>(mu.data(), logvar.data(),
                                               static_cast<int>(mu.size()));
}

LossBreakdown total_loss(double shape, double kld, double pose, const LossWeights& w) {
    if (!std::isfinite(shape) || !std::isfinite(kld) || !std::isfinite(pose)) {
        throw std::invalid_argument("total_loss: non-finite term");
    }
    LossBreakdown out;
    out.shape = shape;
    out.kld = kld;
    out.pose = pose;
    out.total = w.w_shape * shape + w.w_kld * kld + w.w_pose * pose;
    return out;
}

} // namespace glissando
