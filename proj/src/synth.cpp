#include "glissando/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "glissando/config_file.hpp"
#include "glissando/errors.hpp"
#include "glissando/synth.hpp"

namespace glissando {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

// --- mesh builders ----------------------------------------------------------

void add_quad(TriangleMesh& m, int a, int b, int c, int d) {
    m.faces.push_back({a, b, c});
    m.faces.push_back({a, c, d});
}

TriangleMesh make_box(double sx, double sy, double sz) {
    TriangleMesh m;
    m.vertices.resize(8, 3);
    int idx = 0;
    for (int zi = 0; zi < 2; ++zi) {
        for (int yi = 0; yi < 2; ++yi) {
            for (int xi = 0; xi < 2; ++xi) {
                m.vertices.row(idx++) << (xi - 0.5) * sx, (yi - 0.5) * sy, (zi - 0.5) * sz;
            }
        }
    }
    add_quad(m, 0, 1, 3, 2); // z-
    add_quad(m, 4, 6, 7, 5); // z+
    add_quad(m, 0, 2, 6, 4); // x-
    add_quad(m, 1, 5, 7, 3); // x+
    add_quad(m, 0, 4, 5, 1); // y-
    add_quad(m, 2, 3, 7, 6); // y+
    return m;
}

// Surface of revolution around +Y from a (radius, height) profile polyline.
// Radius 0 endpoints produce closed poles; otherwise rims stay open.
TriangleMesh make_lathe(const std::vector<std::pair<double, double>>& profile, int segments) {
    TriangleMesh m;
    std::vector<int> ring_start;
    std::vector<int> ring_count;
    std::vector<Eigen::Vector3d> verts;
    for (const auto& [r, y] : profile) {
        ring_start.push_back(static_cast<int>(verts.size()));
        if (r <= 1e-9) {
            ring_count.push_back(1);
            verts.emplace_back(0.0, y, 0.0);
        } else {
            ring_count.push_back(segments);
            for (int s = 0; s < segments; ++s) {
                const double a = 2.0 * kPi * s / segments;
                verts.emplace_back(r * std::cos(a), y, r * std::sin(a));
            }
        }
    }
    m.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (size_t i = 0; i < verts.size(); ++i) m.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
    for (size_t p = 0; p + 1 < profile.size(); ++p) {
        const int a0 = ring_start[p], a1 = ring_start[p + 1];
        const bool pole0 = ring_count[p] == 1, pole1 = ring_count[p + 1] == 1;
        for (int s = 0; s < segments; ++s) {
            const int sn = (s + 1) % segments;
            if (pole0 && pole1) continue;
            if (pole0) {
                m.faces.push_back({a0, a1 + s, a1 + sn});
            } else if (pole1) {
                m.faces.push_back({a0 + s, a1, a0 + sn});
            } else {
                m.faces.push_back({a0 + s, a1 + s, a1 + sn});
                m.faces.push_back({a0 + s, a1 + sn, a0 + sn});
            }
        }
    }
    return m;
}

void append_mesh(TriangleMesh& dst, const TriangleMesh& src) {
    const int base = static_cast<int>(dst.vertices.rows());
    PointMatrix merged(dst.vertices.rows() + src.vertices.rows(), 3);
    merged << dst.vertices, src.vertices;
    dst.vertices = std::move(merged);
    for (const auto& f : src.faces) {
        dst.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
    }
}

// Partial torus in the XZ... actually XY plane, used as a mug handle.
TriangleMesh make_partial_torus(double ring_radius, double tube_radius, double arc_begin,
                                double arc_end, int ring_segments, int tube_segments) {
    TriangleMesh m;
    std::vector<Eigen::Vector3d> verts;
    for (int i = 0; i <= ring_segments; ++i) {
        const double a = arc_begin + (arc_end - arc_begin) * i / ring_segments;
        const Eigen::Vector3d center(ring_radius * std::cos(a), ring_radius * std::sin(a), 0.0);
        const Eigen::Vector3d dir(std::cos(a), std::sin(a), 0.0);
        for (int j = 0; j < tube_segments; ++j) {
            const double b = 2.0 * kPi * j / tube_segments;
            const Eigen::Vector3d off =
                dir * (tube_radius * std::cos(b)) + Eigen::Vector3d(0, 0, tube_radius * std::sin(b));
            verts.push_back(center + off);
        }
    }
    m.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (size_t i = 0; i < verts.size(); ++i) m.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
    for (int i = 0; i < ring_segments; ++i) {
        for (int j = 0; j < tube_segments; ++j) {
            const int jn = (j + 1) % tube_segments;
            const int a0 = i * tube_segments;
            const int a1 = (i + 1) * tube_segments;
            m.faces.push_back({a0 + j, a1 + j, a1 + jn});
            m.faces.push_back({a0 + j, a1 + jn, a0 + jn});
        }
    }
    return m;
}

} // namespace

TriangleMesh build_category_mesh(int category_id, Rng& rng) {
    const int segments = 28;
    switch (category_id) {
        case 0: { // box
            return make_box(rng.uniform(0.5, 1.0), rng.uniform(0.4, 1.0), rng.uniform(0.3, 1.0));
        }
        case 1: { // cylinder
            const double r = rng.uniform(0.25, 0.45);
            const double h = rng.uniform(0.7, 1.3);
            return make_lathe({{0.0, -h / 2}, {r, -h / 2}, {r, h / 2}, {0.0, h / 2}}, segments);
        }
        case 2: { // bowl: open spherical-cap shell with a rim
            const double r = rng.uniform(0.45, 0.6);
            const double t = rng.uniform(0.04, 0.08) * r;
            std::vector<std::pair<double, double>> prof;
            const int steps = 8;
            for (int i = 0; i <= steps; ++i) { // outer surface, bottom to rim
                const double a = -kPi / 2 + (kPi / 2) * i / steps;
                prof.emplace_back(r * std::cos(a), r * std::sin(a) + r / 2);
            }
            for (int i = steps; i >= 0; --i) { // inner surface, rim to bottom
                const double a = -kPi / 2 + (kPi / 2) * i / steps;
                prof.emplace_back(std::max(0.0, (r - t) * std::cos(a)),
                                  (r - t) * std::sin(a) + r / 2 + t);
            }
            return make_lathe(prof, segments);
        }
        case 3: { // mug: open cylinder + handle on the upper half
            const double r = rng.uniform(0.3, 0.4);
            const double h = rng.uniform(0.8, 1.1);
            const double t = 0.06 * r;
            TriangleMesh body = make_lathe({{0.0, -h / 2},
                                            {r, -h / 2},
                                            {r, h / 2},
                                            {r - t, h / 2},
                                            {r - t, -h / 2 + t},
                                            {0.0, -h / 2 + t}},
                                           segments);
            TriangleMesh handle = make_partial_torus(rng.uniform(0.18, 0.24), 0.045,
                                                     -0.35 * kPi, 0.35 * kPi, 10, 8);
            // Attach to the side, centered on the upper half of the body.
            for (Eigen::Index i = 0; i < handle.vertices.rows(); ++i) {
                handle.vertices(i, 0) += r;
                handle.vertices(i, 1) += h * 0.18;
            }
            append_mesh(body, handle);
            return body;
        }
        case 4: { // bottle: body + shoulder + neck, open top
            const double rb = rng.uniform(0.24, 0.34);
            const double rn = rb * rng.uniform(0.3, 0.45);
            const double hb = rng.uniform(0.55, 0.75);
            const double hn = rng.uniform(0.2, 0.35);
            const double y0 = -(hb + hn) / 2;
            return make_lathe({{0.0, y0},
                               {rb, y0},
                               {rb, y0 + hb},
                               {rn, y0 + hb + 0.12},
                               {rn, y0 + hb + hn},
                               {0.0, y0 + hb + hn}},
                              segments);
        }
        case 5: { // laptop-wedge: base slab + tilted screen slab
            const double w = rng.uniform(0.9, 1.2);
            const double d = rng.uniform(0.6, 0.8);
            const double t = rng.uniform(0.04, 0.07);
            const double angle = rng.uniform(1.55, 2.0); // radians from the base plane
            TriangleMesh base = make_box(w, t, d);
            TriangleMesh screen = make_box(w, t, d);
            // Rotate the screen about the shared hinge edge (back of the base).
            const double ca = std::cos(angle), sa = std::sin(angle);
            for (Eigen::Index i = 0; i < screen.vertices.rows(); ++i) {
                const double y = screen.vertices(i, 1);
                const double z = screen.vertices(i, 2) + d / 2; // hinge at z = -d/2
                screen.vertices(i, 1) = y * ca - z * sa;
                screen.vertices(i, 2) = y * sa + z * ca - d / 2;
            }
            append_mesh(base, screen);
            return base;
        }
        default:
            throw DataError("build_category_mesh: unknown category id " +
                            std::to_string(category_id));
    }
}

void canonicalize_mesh(TriangleMesh& mesh) {
    const Eigen::RowVector3d lo = mesh.vertices.colwise().minCoeff();
    const Eigen::RowVector3d hi = mesh.vertices.colwise().maxCoeff();
    const Eigen::RowVector3d center = 0.5 * (lo + hi);
    const double diag = (hi - lo).norm();
    if (!(diag > 0.0)) throw DataError("canonicalize_mesh: degenerate mesh");
    mesh.vertices.rowwise() -= center;
    mesh.vertices /= diag;
}

namespace {

struct RasterBuffers {
    std::vector<double> depth;
    std::vector<uint8_t> mask;
    ImageTensor image;
};

RasterBuffers rasterize_impl(const TriangleMesh& mesh, const Pose& pose,
                             const CameraIntrinsics& K, const Eigen::Vector3d& albedo) {
    const int w = K.image_width, h = K.image_height;
    RasterBuffers buf;
    buf.depth.assign(static_cast<size_t>(w) * h, std::numeric_limits<double>::infinity());
    buf.mask.assign(static_cast<size_t>(w) * h, 0);
    buf.image = ImageTensor::zeros(h, w, 3);

    const PointMatrix cam = transform_points(mesh.vertices, pose);
    for (const auto& f : mesh.faces) {
        const Eigen::Vector3d a = cam.row(f[0]), b = cam.row(f[1]), c = cam.row(f[2]);
        if (a.z() <= kProjectionZMin || b.z() <= kProjectionZMin || c.z() <= kProjectionZMin) {
            continue;
        }
        auto to_px = [&](const Eigen::Vector3d& p) {
            return Eigen::Vector2d(K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy);
        };
        const Eigen::Vector2d pa = to_px(a), pb = to_px(b), pc = to_px(c);
        const double area = (pb - pa).x() * (pc - pa).y() - (pb - pa).y() * (pc - pa).x();
        if (std::abs(area) < 1e-12) continue;
        Eigen::Vector3d n = (b - a).cross(c - a);
        const double nlen = n.norm();
        if (nlen <= 0.0) continue;
        n /= nlen;
        // Headlight shading, two-sided surfaces.
        const double shade = 0.3 + 0.7 * std::abs(n.z());
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({pa.x(), pb.x(), pc.x()}))));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max({pa.x(), pb.x(), pc.x()}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({pa.y(), pb.y(), pc.y()}))));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max({pa.y(), pb.y(), pc.y()}))));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const Eigen::Vector2d p(x + 0.5, y + 0.5);
                const double w0 = ((pb - p).x() * (pc - p).y() - (pb - p).y() * (pc - p).x()) / area;
                const double w1 = ((pc - p).x() * (pa - p).y() - (pc - p).y() * (pa - p).x()) / area;
                const double w2 = 1.0 - w0 - w1;
                if (w0 < 0 || w1 < 0 || w2 < 0) continue;
                const double z = 1.0 / (w0 / a.z() + w1 / b.z() + w2 / c.z());
                const size_t pix = static_cast<size_t>(y) * w + x;
                if (z < buf.depth[pix]) {
                    buf.depth[pix] = z;
                    buf.mask[pix] = 1;
                    for (int ch = 0; ch < 3; ++ch) {
                        buf.image.at(ch, y, x) = static_cast<float>(albedo[ch] * shade);
                    }
                }
            }
        }
    }
    return buf;
}

} // namespace

ImageTensor rasterize_mesh(const TriangleMesh& mesh, const Pose& pose,
                           const CameraIntrinsics& K, const Eigen::Vector3d& albedo) {
    return rasterize_impl(mesh, pose, K, albedo).image;
}

std::vector<uint8_t> rasterize_mask(const TriangleMesh& mesh, const Pose& pose,
                                    const CameraIntrinsics& K) {
    return rasterize_impl(mesh, pose, K, Eigen::Vector3d::Ones()).mask;
}

void GenSpec::validate() const {
    if (categories.empty()) throw ConfigError("gen spec: no categories listed");
    std::set<std::string> seen;
    for (const auto& c : categories) {
        category_id_from_name(c); // throws on unknown names
        if (!seen.insert(c).second) throw ConfigError("gen spec: duplicate category " + c);
    }
    if (train_instances < 1 || views_per_instance < 1) {
        throw ConfigError("gen spec: need at least one training instance and view");
    }
    if (val_instances < 0 || test_instances < 0) {
        throw ConfigError("gen spec: negative instance count");
    }
    if (n_points < 1) throw ConfigError("gen spec: n_points must be positive");
    if (image_size < 32 || image_size % 32 != 0) {
        throw ConfigError("gen spec: image_size must be a positive multiple of 32");
    }
}

std::string GenSpec::canonical_text() const {
    std::ostringstream os;
    os << "categories=";
    for (size_t i = 0; i < categories.size(); ++i) os << (i ? "," : "") << categories[i];
    os << ";train=" << train_instances << ";val=" << val_instances
       << ";test=" << test_instances << ";views=" << views_per_instance
       << ";points=" << n_points << ";image=" << image_size
       << ";pose=" << (pose_mode == PoseMode::kUpright ? "upright" : "so3");
    return os.str();
}

GenSpec GenSpec::from_file(const std::string& path) {
    const auto cfg = KeyValueConfig::parse_file(path);
    cfg.require_known_keys({"categories", "train_instances", "val_instances", "test_instances",
                            "views_per_instance", "n_points", "image_size", "pose_mode"});
    GenSpec spec;
    spec.categories = cfg.get_string_list("categories");
    spec.train_instances = cfg.get_int("train_instances", spec.train_instances);
    spec.val_instances = cfg.get_int("val_instances", spec.val_instances);
    spec.test_instances = cfg.get_int("test_instances", spec.test_instances);
    spec.views_per_instance = cfg.get_int("views_per_instance", spec.views_per_instance);
    spec.n_points = cfg.get_int("n_points", spec.n_points);
    spec.image_size = cfg.get_int("image_size", spec.image_size);
    const std::string mode = cfg.get_string("pose_mode", "upright");
    if (mode == "upright") spec.pose_mode = PoseMode::kUpright;
    else if (mode == "so3") spec.pose_mode = PoseMode::kSo3;
    else throw ConfigError("gen spec: pose_mode must be upright or so3");
    spec.validate();
    return spec;
}

namespace {

Quaternion random_rotation(PoseMode mode, Rng& rng) {
    if (mode == PoseMode::kSo3) {
        // Shoemake's uniform quaternion sampling.
        const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
        const double s1 = std::sqrt(1.0 - u1), s2 = std::sqrt(u1);
        return Quaternion{s1 * std::sin(2 * kPi * u2), s1 * std::cos(2 * kPi * u2),
                          s2 * std::sin(2 * kPi * u3), s2 * std::cos(2 * kPi * u3)}
            .normalized();
    }
    // Upright: object +Y maps near image up, free yaw, mild camera tilt/roll.
    const double yaw = rng.uniform(0.0, 2 * kPi);
    const double tilt = rng.uniform(-0.55, 0.15);
    const double roll = rng.uniform(-0.15, 0.15);
    const Quaternion qy = Quaternion::from_axis_angle({0, 1, 0}, yaw);
    const Quaternion qx = Quaternion::from_axis_angle({1, 0, 0}, kPi + tilt);
    const Quaternion qz = Quaternion::from_axis_angle({0, 0, 1}, roll);
    auto mul = [](const Quaternion& a, const Quaternion& b) {
        return Quaternion{a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
                          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
                          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
                          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
    };
    return mul(qz, mul(qx, qy)).normalized();
}

double category_scale_m(int category_id, Rng& rng) {
    switch (category_id) {
        case 0: return rng.uniform(0.15, 0.40);  // box
        case 1: return rng.uniform(0.15, 0.35);  // cylinder
        case 2: return rng.uniform(0.12, 0.30);  // bowl
        case 3: return rng.uniform(0.10, 0.18);  // mug
        case 4: return rng.uniform(0.20, 0.35);  // bottle
        default: return rng.uniform(0.30, 0.45); // laptop-wedge
    }
}

} // namespace

DatasetManifest generate_synthetic_dataset(const GenSpec& spec, uint64_t seed,
                                           const fs::path& out_dir) {
    spec.validate();
    fs::create_directories(out_dir);
    DatasetManifest manifest;
    manifest.root = out_dir;
    manifest.seed = seed;
    {
        // FNV-1a over the canonical spec text.
        uint64_t h = 1469598103934665603ULL;
        for (const char ch : spec.canonical_text()) {
            h ^= static_cast<unsigned char>(ch);
            h *= 1099511628211ULL;
        }
        std::ostringstream os;
        os << std::hex << h;
        manifest.spec_hash = os.str();
    }

    const int total_instances = spec.train_instances + spec.val_instances + spec.test_instances;
    for (size_t ci = 0; ci < spec.categories.size(); ++ci) {
        const int cat_id = category_id_from_name(spec.categories[ci]);
        for (int inst = 0; inst < total_instances; ++inst) {
            Rng inst_rng(mix_seed(seed, 0x10000 + cat_id, inst));
            TriangleMesh mesh = build_category_mesh(cat_id, inst_rng);
            canonicalize_mesh(mesh);
            PointCloud cloud;
            cloud.points = sample_mesh_to_pointcloud(mesh, spec.n_points, inst_rng);
            cloud.scale_m = category_scale_m(cat_id, inst_rng);
            cloud.category_id = cat_id;
            const Eigen::Vector3d albedo(inst_rng.uniform(0.3, 0.95),
                                         inst_rng.uniform(0.3, 0.95),
                                         inst_rng.uniform(0.3, 0.95));
            const std::string split = inst < spec.train_instances ? "train"
                                      : inst < spec.train_instances + spec.val_instances
                                          ? "val"
                                          : "test";
            const std::string instance_id = spec.categories[ci] + std::to_string(inst);

            for (int view = 0; view < spec.views_per_instance; ++view) {
                Rng view_rng(mix_seed(seed, (cat_id + 1) * 1000 + inst, view));
                Sample s;
                s.category_id = cat_id;
                s.instance_id = instance_id;
                s.pc_canonical = cloud;

                s.intrinsics.image_width = spec.image_size;
                s.intrinsics.image_height = spec.image_size;
                s.intrinsics.fx = s.intrinsics.fy = 0.75 * spec.image_size;
                s.intrinsics.cx = spec.image_size / 2.0;
                s.intrinsics.cy = spec.image_size / 2.0;

                s.pose.rotation = random_rotation(spec.pose_mode, view_rng);
                const double depth = view_rng.uniform(1.0, 1.5);
                // Keep the projected centroid inside the central band.
                const double max_off = 0.06 * spec.image_size;
                const double u_off = view_rng.uniform(-max_off, max_off);
                const double v_off = view_rng.uniform(-max_off, max_off);
                s.pose.translation =
                    Eigen::Vector3d(u_off * depth / s.intrinsics.fx,
                                    v_off * depth / s.intrinsics.fy, depth);

                s.image = rasterize_mesh(mesh, s.pose, s.intrinsics, albedo);

                std::ostringstream rel;
                rel << spec.categories[ci] << "_" << inst << "_v" << view;
                save_sample(out_dir / rel.str(), s);
                manifest.entries.push_back(
                    {rel.str(), split, spec.categories[ci], instance_id});
            }
        }
    }
    save_manifest(manifest, out_dir / "manifest.txt");
    return manifest;
}

} // namespace glissando
