#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "glissando/geometry.hpp"
#include "glissando/loss_kernels.hpp"
#include "glissando/losses.hpp"
#include "glissando/rng.hpp"

using namespace glissando;

namespace {

PointMatrix random_points(int n, Rng& rng, double extent = 0.5) {
    PointMatrix pts(n, 3);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) pts(i, k) = rng.uniform(-extent, extent);
    }
    return pts;
}

double chamfer_double_loop(const PointMatrix& a, const PointMatrix& b) {
    double sum_ab = 0.0;
    for (int i = 0; i < a.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < b.rows(); ++j) best = std::min(best, (a.row(i) - b.row(j)).norm());
        sum_ab += best;
    }
    double sum_ba = 0.0;
    for (int j = 0; j < b.rows(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < a.rows(); ++i) best = std::min(best, (a.row(i) - b.row(j)).norm());
        sum_ba += best;
    }
    return 0.5 * (sum_ab / a.rows() + sum_ba / b.rows());
}

double emd_all_permutations(const PointMatrix& a, const PointMatrix& b) {
    const int n = static_cast<int>(a.rows());
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += (a.row(i) - b.row(perm[i])).norm();
        best = std::min(best, total / n);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

Pose random_pose(Rng& rng) {
    Pose p;
    p.rotation = Quaternion{rng.normal(), rng.normal(), rng.normal(), rng.normal()}.normalized();
    p.translation = Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    return p;
}

bool grad_close(double analytic, double numeric) {
    return std::abs(analytic - numeric) <
           1e-4 * std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
}

} // namespace

TEST_CASE("chamfer trivial cases") {
    Rng rng(30);
    const PointMatrix a = random_points(6, rng);
    CHECK(chamfer_distance(a, a) == 0.0);

    PointMatrix p1(1, 3), p2(1, 3);
    p1 << 0, 0, 0;
    p2 << 1, 0, 0;
    CHECK(chamfer_distance(p1, p2) == doctest::Approx(1.0));

    PointMatrix empty(0, 3);
    CHECK_THROWS_AS(chamfer_distance(empty, a), std::invalid_argument);
}

TEST_CASE("chamfer equals the O(NM) double-loop oracle") {
    Rng rng(31);
    for (int rep = 0; rep < 25; ++rep) {
        const PointMatrix a = random_points(5, rng);
        const PointMatrix b = random_points(7, rng);
        CHECK(std::abs(chamfer_distance(a, b) - chamfer_double_loop(a, b)) < 1e-10);
        CHECK(chamfer_distance(a, b) == chamfer_distance(b, a)); // exact symmetry
    }
}

TEST_CASE("emd trivial cases and permutation invariance") {
    Rng rng(32);
    const PointMatrix a = random_points(8, rng);
    CHECK(emd_distance(a, a) == doctest::Approx(0.0).epsilon(1e-12));

    PointMatrix shuffled = a;
    std::vector<int> perm{3, 1, 7, 0, 5, 2, 6, 4};
    for (int i = 0; i < 8; ++i) shuffled.row(i) = a.row(perm[i]);
    CHECK(emd_distance(a, shuffled) < 1e-9);

    const PointMatrix b = random_points(8, rng);
    PointMatrix b_shuffled = b;
    for (int i = 0; i < 8; ++i) b_shuffled.row(i) = b.row(perm[i]);
    CHECK(std::abs(emd_distance(a, b) - emd_distance(a, b_shuffled)) < 1e-9);

    const PointMatrix c = random_points(5, rng);
    CHECK_THROWS_AS(emd_distance(a, c), std::invalid_argument);
}

TEST_CASE("emd matches the all-permutations oracle for N = 5") {
    Rng rng(33);
    for (int rep = 0; rep < 10; ++rep) {
        const PointMatrix a = random_points(5, rng);
        const PointMatrix b = random_points(5, rng);
        CHECK(std::abs(emd_distance(a, b) - emd_all_permutations(a, b)) < 1e-10);
    }
}

TEST_CASE("chamfer lower-bounds emd on equal-size clouds") {
    Rng rng(34);
    for (int rep = 0; rep < 10; ++rep) {
        const PointMatrix a = random_points(12, rng);
        const PointMatrix b = random_points(12, rng);
        CHECK(chamfer_distance(a, b) <= emd_distance(a, b) + 1e-9);
    }
}

TEST_CASE("chamfer and emd are invariant under a shared rigid transform") {
    Rng rng(35);
    const PointMatrix a = random_points(10, rng);
    const PointMatrix b = random_points(10, rng);
    const Pose pose = random_pose(rng);
    const PointMatrix ta = transform_points(a, pose);
    const PointMatrix tb = transform_points(b, pose);
    CHECK(std::abs(chamfer_distance(a, b) - chamfer_distance(ta, tb)) < 1e-9);
    CHECK(std::abs(emd_distance(a, b) - emd_distance(ta, tb)) < 1e-9);
}

TEST_CASE("auction assignment stays within its epsilon bound of exact") {
    Rng rng(36);
    const int n = 600; // above the exact threshold
    const PointMatrix a = random_points(n, rng);
    const PointMatrix b = random_points(n, rng);
    const double approx = emd_distance(a, b); // auction path
    // Exact reference through the Hungarian solver.
    std::vector<double> cost(static_cast<size_t>(n) * n);
    double cost_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            cost[static_cast<size_t>(i) * n + j] = (a.row(i) - b.row(j)).norm();
            cost_sum += cost[static_cast<size_t>(i) * n + j];
        }
    }
    std::vector<int> rowsol;
    kernels::hungarian(cost, n, rowsol);
    double exact = 0.0;
    for (int i = 0; i < n; ++i) exact += cost[static_cast<size_t>(i) * n + rowsol[i]];
    exact /= n;
    const double eps = 1e-3 * cost_sum / (static_cast<double>(n) * n);
    CHECK(approx >= exact - 1e-9);
    CHECK(approx <= exact + n * eps / n + 1e-9); // within eps per point
}

TEST_CASE("per_point_l2 trivial cases") {
    Rng rng(37);
    PointCloud pc;
    pc.points = random_points(10, rng);

    const Pose pose = random_pose(rng);
    CHECK(per_point_l2(pc, pose, pose) == doctest::Approx(0.0));

    Pose gt; // identity
    Pose hat;
    hat.translation = Eigen::Vector3d(0.1, 0, 0);
    CHECK(per_point_l2(pc, hat, gt) == doctest::Approx(0.1));
}

TEST_CASE("per_point_l2 matches the explicit two-transform oracle") {
    Rng rng(38);
    for (int rep = 0; rep < 10; ++rep) {
        PointCloud pc;
        pc.points = random_points(10, rng);
        const Pose hat = random_pose(rng);
        const Pose gt = random_pose(rng);
        const PointMatrix a = transform_points(pc, hat);
        const PointMatrix b = transform_points(pc, gt);
        double expected = 0.0;
        for (int i = 0; i < 10; ++i) expected += (a.row(i) - b.row(i)).norm() / 10.0;
        CHECK(std::abs(per_point_l2(pc, hat, gt) - expected) < 1e-10);
    }
}

TEST_CASE("per_point_l2 is invariant to permuting the cloud") {
    Rng rng(39);
    PointCloud pc;
    pc.points = random_points(8, rng);
    const Pose hat = random_pose(rng);
    const Pose gt = random_pose(rng);
    PointCloud shuffled = pc;
    std::vector<int> perm{5, 2, 7, 1, 0, 6, 3, 4};
    for (int i = 0; i < 8; ++i) shuffled.points.row(i) = pc.points.row(perm[i]);
    CHECK(std::abs(per_point_l2(pc, hat, gt) - per_point_l2(shuffled, hat, gt)) < 1e-9);
}

TEST_CASE("kl_standard_normal closed forms") {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(256);
    Eigen::VectorXd lv = Eigen::VectorXd::Zero(256);
    CHECK(kl_standard_normal(mu, lv) == doctest::Approx(0.0));
    mu[0] = 1.0;
    CHECK(kl_standard_normal(mu, lv) == doctest::Approx(0.5 / 256));

    Rng rng(40);
    for (int rep = 0; rep < 10; ++rep) {
        const int d = 32;
        Eigen::VectorXd m(d), l(d);
        for (int i = 0; i < d; ++i) {
            m[i] = rng.uniform(-2, 2);
            l[i] = rng.uniform(-2, 2);
        }
        // Independent closed form: mean over dims of KL(N(mu, s2) || N(0,1)).
        double expected = 0.0;
        for (int i = 0; i < d; ++i) {
            const double s2 = std::exp(l[i]);
            expected += 0.5 * (m[i] * m[i] + s2 - 1.0 - std::log(s2)) / d;
        }
        CHECK(std::abs(kl_standard_normal(m, l) - expected) < 1e-10);
        CHECK(kl_standard_normal(m, l) >= 0.0);
    }
}

TEST_CASE("total_loss arithmetic and breakdown") {
    LossWeights w; // defaults 1, 100, 100
    const LossBreakdown z = total_loss(0, 0, 0, w);
    CHECK(z.total == 0.0);

    const LossBreakdown b = total_loss(0.5, 0.01, 0.02, w);
    CHECK(b.total == doctest::Approx(3.5));
    CHECK(b.shape == 0.5);
    CHECK(b.kld == 0.01);
    CHECK(b.pose == 0.02);

    LossWeights mask{0, 0, 1};
    CHECK(total_loss(0.5, 0.01, 0.02, mask).total == doctest::Approx(0.02));
    CHECK_THROWS_AS(total_loss(std::nan(""), 0, 0, w), std::invalid_argument);
}

// --- gradient checks (double precision, h = 1e-5) ---------------------------

TEST_CASE("chamfer gradient matches central differences") {
    Rng rng(41);
    const double h = 1e-5;
    for (int rep = 0; rep < 5; ++rep) {
        PointMatrix a = random_points(6, rng);
        PointMatrix b = random_points(5, rng);
        std::vector<double> ga(18, 0.0), gb(15, 0.0);
        kernels::chamfer_grad<double>(a.data(), 6, b.data(), 5, ga.data(), gb.data());
        for (int i = 0; i < 18; ++i) {
            double* x = a.data() + i;
            const double orig = *x;
            *x = orig + h;
            const double up = chamfer_distance(a, b);
            *x = orig - h;
            const double dn = chamfer_distance(a, b);
            *x = orig;
            CHECK(grad_close(ga[i], (up - dn) / (2 * h)));
        }
        for (int i = 0; i < 15; ++i) {
            double* x = b.data() + i;
            const double orig = *x;
            *x = orig + h;
            const double up = chamfer_distance(a, b);
            *x = orig - h;
            const double dn = chamfer_distance(a, b);
            *x = orig;
            CHECK(grad_close(gb[i], (up - dn) / (2 * h)));
        }
    }
}

TEST_CASE("emd gradient under the frozen assignment matches central differences") {
    Rng rng(42);
    const double h = 1e-5;
    for (int rep = 0; rep < 5; ++rep) {
        PointMatrix a = random_points(6, rng);
        PointMatrix b = random_points(6, rng);
        std::vector<int> assignment;
        emd_distance(a, b, assignment);
        std::vector<double> ga(18, 0.0);
        kernels::emd_grad_fixed_assignment<double>(a.data(), b.data(), 6, assignment,
                                                   ga.data(), nullptr);
        for (int i = 0; i < 18; ++i) {
            double* x = a.data() + i;
            const double orig = *x;
            *x = orig + h;
            const double up = emd_distance(a, b);
            *x = orig - h;
            const double dn = emd_distance(a, b);
            *x = orig;
            CHECK(grad_close(ga[i], (up - dn) / (2 * h)));
        }
    }
}

TEST_CASE("per_point_l2 gradients w.r.t. quaternion and translation match central differences") {
    Rng rng(43);
    const double h = 1e-5;
    for (int rep = 0; rep < 5; ++rep) {
        const PointMatrix pts = random_points(8, rng);
        double qh[4] = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        double th[3] = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const double qg[4] = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        const double tg[3] = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        double grad_q[4], grad_t[3];
        kernels::per_point_l2<double>(pts.data(), 8, qh, th, qg, tg, grad_q, grad_t);
        auto value = [&] {
            return kernels::per_point_l2<double>(pts.data(), 8, qh, th, qg, tg);
        };
        for (int c = 0; c < 4; ++c) {
            const double orig = qh[c];
            qh[c] = orig + h;
            const double up = value();
            qh[c] = orig - h;
            const double dn = value();
            qh[c] = orig;
            CHECK(grad_close(grad_q[c], (up - dn) / (2 * h)));
        }
        for (int c = 0; c < 3; ++c) {
            const double orig = th[c];
            th[c] = orig + h;
            const double up = value();
            th[c] = orig - h;
            const double dn = value();
            th[c] = orig;
            CHECK(grad_close(grad_t[c], (up - dn) / (2 * h)));
        }
    }
}

TEST_CASE("kl gradient matches central differences") {
    Rng rng(44);
    const double h = 1e-5;
    const int d = 16;
    std::vector<double> mu(d), lv(d), gm(d), gl(d);
    for (int i = 0; i < d; ++i) {
        mu[i] = rng.uniform(-2, 2);
        lv[i] = rng.uniform(-2, 2);
    }
    kernels::kl_standard_normal<double>(mu.data(), lv.data(), d, gm.data(), gl.data());
    auto value = [&] { return kernels::kl_standard_normal<double>(mu.data(), lv.data(), d); };
    for (int i = 0; i < d; ++i) {
        double orig = mu[i];
        mu[i] = orig + h;
        const double up = value();
        mu[i] = orig - h;
        const double dn = value();
        mu[i] = orig;
        CHECK(grad_close(gm[i], (up - dn) / (2 * h)));

        orig = lv[i];
        lv[i] = orig + h;
        const double up2 = value();
        lv[i] = orig - h;
        const double dn2 = value();
        lv[i] = orig;
        CHECK(grad_close(gl[i], (up2 - dn2) / (2 * h)));
    }
}
