#include <doctest.h>

#include <cmath>
#include <set>

#include "glissando/geometry.hpp"
#include "glissando/rng.hpp"

using namespace glissando;

namespace {

Quaternion random_unit_quat(Rng& rng) {
    Quaternion q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    return q.normalized();
}

PointMatrix random_points(int n, Rng& rng, double extent = 0.5) {
    PointMatrix pts(n, 3);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) pts(i, k) = rng.uniform(-extent, extent);
    }
    return pts;
}

// Rodrigues rotation: independent oracle for quat_to_matrix.
Eigen::Matrix3d rodrigues_from_quat(const Quaternion& q_in) {
    const Quaternion q = q_in.normalized();
    const double angle = 2.0 * std::atan2(std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z), q.w);
    Eigen::Vector3d axis(q.x, q.y, q.z);
    if (axis.norm() < 1e-14) return Eigen::Matrix3d::Identity();
    axis.normalize();
    Eigen::Matrix3d k;
    k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
    return Eigen::Matrix3d::Identity() + std::sin(angle) * k + (1 - std::cos(angle)) * k * k;
}

Pose random_pose(Rng& rng) {
    Pose p;
    p.rotation = random_unit_quat(rng);
    p.translation = Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    return p;
}

} // namespace

TEST_CASE("quat_to_matrix identities") {
    CHECK(quat_to_matrix({1, 0, 0, 0}).isApprox(Eigen::Matrix3d::Identity(), 1e-12));
    Eigen::Matrix3d z180;
    z180 << -1, 0, 0, 0, -1, 0, 0, 0, 1;
    CHECK(quat_to_matrix({0, 0, 0, 1}).isApprox(z180, 1e-12));
    CHECK_THROWS_AS(quat_to_matrix({0, 0, 0, 0}), std::invalid_argument);
}

TEST_CASE("quat_to_matrix matches the Rodrigues oracle on 100 random quaternions") {
    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        const Quaternion q = random_unit_quat(rng);
        const Eigen::Matrix3d r = quat_to_matrix(q);
        CHECK((r - rodrigues_from_quat(q)).cwiseAbs().maxCoeff() < 1e-10);
        // Orthonormal, det +1.
        CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("q and -q produce the identical rotation") {
    Rng rng(12);
    for (int i = 0; i < 20; ++i) {
        const Quaternion q = random_unit_quat(rng);
        const Quaternion neg{-q.w, -q.x, -q.y, -q.z};
        CHECK((quat_to_matrix(q) - quat_to_matrix(neg)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("transform_points trivial cases and per-point oracle") {
    PointMatrix pts(1, 3);
    pts << 0, 0, 0;
    Pose shift;
    shift.translation = Eigen::Vector3d(1, 0, 0);
    const PointMatrix moved = transform_points(pts, shift);
    CHECK(moved(0, 0) == doctest::Approx(1.0));

    Rng rng(13);
    const PointMatrix cloud = random_points(5, rng);
    CHECK((transform_points(cloud, Pose::identity()) - cloud).cwiseAbs().maxCoeff() == 0.0);

    const Pose pose = random_pose(rng);
    const Eigen::Matrix3d r = quat_to_matrix(pose.rotation);
    const PointMatrix out = transform_points(cloud, pose);
    for (int i = 0; i < 5; ++i) {
        const Eigen::Vector3d expected = r * cloud.row(i).transpose() + pose.translation;
        CHECK((out.row(i).transpose() - expected).norm() < 1e-12);
    }
}

TEST_CASE("transform round trip through the inverse pose") {
    Rng rng(14);
    const PointMatrix cloud = random_points(32, rng);
    const Pose pose = random_pose(rng);
    const PointMatrix back = transform_points(transform_points(cloud, pose), pose.inverse());
    CHECK((back - cloud).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("project_points on-axis, degenerate depth and homogeneous oracle") {
    CameraIntrinsics K;
    K.fx = K.fy = 100;
    K.cx = K.cy = 64;
    K.image_width = K.image_height = 128;

    PointMatrix pts(2, 3);
    pts << 0, 0, 1, 0, 0, 0; // second point sits on the camera plane
    const auto res = project_points(pts, Pose::identity(), K);
    CHECK(res.valid[0]);
    CHECK(res.pixels(0, 0) == doctest::Approx(64.0));
    CHECK(res.pixels(0, 1) == doctest::Approx(64.0));
    CHECK_FALSE(res.valid[1]);

    Rng rng(15);
    const PointMatrix cloud = random_points(10, rng, 0.3);
    Pose pose;
    pose.rotation = random_unit_quat(rng);
    pose.translation = Eigen::Vector3d(0, 0, 2.0);
    const auto proj = project_points(cloud, pose, K);
    // Homogeneous-coordinates oracle.
    Eigen::Matrix3d km;
    km << K.fx, 0, K.cx, 0, K.fy, K.cy, 0, 0, 1;
    const Eigen::Matrix3d r = quat_to_matrix(pose.rotation);
    for (int i = 0; i < 10; ++i) {
        const Eigen::Vector3d cam = r * cloud.row(i).transpose() + pose.translation;
        const Eigen::Vector3d h = km * cam;
        CHECK(std::abs(proj.pixels(i, 0) - h.x() / h.z()) < 1e-9);
        CHECK(std::abs(proj.pixels(i, 1) - h.y() / h.z()) < 1e-9);
    }
}

TEST_CASE("projection is invariant to quaternion pre-normalization") {
    Rng rng(16);
    CameraIntrinsics K;
    K.fx = K.fy = 90;
    K.cx = K.cy = 32;
    K.image_width = K.image_height = 64;
    const PointMatrix cloud = random_points(6, rng, 0.3);
    Pose a = random_pose(rng);
    a.translation.z() = 2.0;
    Pose b = a;
    b.rotation = {3.7 * a.rotation.w, 3.7 * a.rotation.x, 3.7 * a.rotation.y,
                  3.7 * a.rotation.z};
    const auto pa = project_points(cloud, a, K);
    const auto pb = project_points(cloud, b, K);
    CHECK((pa.pixels - pb.pixels).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("farthest_point_sample basics") {
    Rng rng(17);
    const PointMatrix cloud = random_points(8, rng);
    SUBCASE("m = N returns every index") {
        const auto idx = farthest_point_sample(cloud, 8);
        CHECK(std::set<int>(idx.begin(), idx.end()).size() == 8);
    }
    SUBCASE("m = 1 returns the start index") {
        CHECK(farthest_point_sample(cloud, 1, 5) == std::vector<int>{5});
    }
    SUBCASE("m > N is a domain error") {
        CHECK_THROWS_AS(farthest_point_sample(cloud, 9), std::invalid_argument);
    }
}

TEST_CASE("farthest_point_sample picks the maximin point at every step") {
    Rng rng(18);
    const PointMatrix cloud = random_points(8, rng);
    const auto picked = farthest_point_sample(cloud, 3);
    // Exhaustive verification of the greedy rule.
    for (int step = 1; step < 3; ++step) {
        std::set<int> chosen(picked.begin(), picked.begin() + step);
        double best = -1.0;
        for (int i = 0; i < 8; ++i) {
            double min_d = std::numeric_limits<double>::infinity();
            for (const int j : chosen) {
                min_d = std::min(min_d, (cloud.row(i) - cloud.row(j)).norm());
            }
            best = std::max(best, min_d);
        }
        double got = std::numeric_limits<double>::infinity();
        for (const int j : chosen) {
            got = std::min(got, (cloud.row(picked[step]) - cloud.row(j)).norm());
        }
        CHECK(got == doctest::Approx(best).epsilon(1e-12));
    }
    std::set<int> unique(picked.begin(), picked.end());
    CHECK(unique.size() == picked.size());
}

TEST_CASE("ball_query matches a brute-force radius filter") {
    Rng rng(19);
    const PointMatrix cloud = random_points(16, rng);
    const PointMatrix centers = random_points(4, rng);
    const double radius = 0.4;
    const auto groups = ball_query(centers, cloud, radius, 8);
    for (int c = 0; c < 4; ++c) {
        std::vector<std::pair<double, int>> expected;
        for (int i = 0; i < 16; ++i) {
            const double d = (cloud.row(i) - centers.row(c)).norm();
            if (d <= radius) expected.emplace_back(d, i);
        }
        std::sort(expected.begin(), expected.end());
        if (expected.empty()) {
            CHECK(groups[c].size() == 1);
            continue;
        }
        CHECK(groups[c].size() == std::min<size_t>(expected.size(), 8));
        for (size_t k = 0; k < groups[c].size(); ++k) {
            CHECK(groups[c][k] == expected[k].second);
        }
    }
}

TEST_CASE("ball_query edge radii") {
    Rng rng(20);
    const PointMatrix cloud = random_points(10, rng);
    SUBCASE("huge radius keeps the k_max nearest") {
        const auto groups = ball_query(cloud, cloud, 10.0, 4);
        for (const auto& g : groups) CHECK(g.size() == 4);
    }
    SUBCASE("tiny radius with centers = points yields singleton self groups") {
        const auto groups = ball_query(cloud, cloud, 1e-9, 4);
        for (int i = 0; i < 10; ++i) {
            REQUIRE(groups[i].size() == 1);
            CHECK(groups[i][0] == i);
        }
    }
}

TEST_CASE("diameter basics and all-pairs oracle") {
    PointMatrix two(2, 3);
    two << 0, 0, 0, 1, 0, 0;
    CHECK(diameter(two) == doctest::Approx(1.0));

    PointMatrix cube(8, 3);
    int r = 0;
    for (int x = 0; x < 2; ++x) {
        for (int y = 0; y < 2; ++y) {
            for (int z = 0; z < 2; ++z) cube.row(r++) << x, y, z;
        }
    }
    CHECK(diameter(cube) == doctest::Approx(std::sqrt(3.0)));

    PointMatrix one(1, 3);
    one << 0, 0, 0;
    CHECK_THROWS_AS(diameter(one), std::invalid_argument);

    Rng rng(21);
    const PointMatrix cloud = random_points(20, rng);
    double brute = 0.0;
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 20; ++j) {
            brute = std::max(brute, (cloud.row(i) - cloud.row(j)).norm());
        }
    }
    CHECK(diameter(cloud) == brute);
}

TEST_CASE("diameter is invariant under rigid transforms") {
    Rng rng(22);
    const PointMatrix cloud = random_points(15, rng);
    const Pose pose = random_pose(rng);
    CHECK(diameter(transform_points(cloud, pose)) ==
          doctest::Approx(diameter(cloud)).epsilon(1e-9));
}
