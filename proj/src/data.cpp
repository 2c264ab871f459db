#include "glissando/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "glissando/errors.hpp"
#include "glissando/image_io.hpp"

namespace glissando {

namespace fs = std::filesystem;
using nlohmann::json;

int category_id_from_name(const std::string& name) {
    for (size_t i = 0; i < kCategoryNames.size(); ++i) {
        if (kCategoryNames[i] == name) return static_cast<int>(i);
    }
    throw DataError("unknown category '" + name + "'");
}

std::vector<int> DatasetManifest::indices_for_split(const std::string& split) const {
    std::vector<int> out;
    for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].split == split) out.push_back(static_cast<int>(i));
    }
    return out;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
    std::ofstream os(path);
    if (!os) throw DataError("save_manifest: cannot write " + path.string());
    os << "# glissando-manifest v1\n";
    os << "# seed " << manifest.seed << "\n";
    os << "# spec_hash " << manifest.spec_hash << "\n";
    for (const auto& e : manifest.entries) {
        os << e.rel_path << "\t" << e.split << "\t" << e.category << "\t" << e.instance << "\n";
    }
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("load_manifest: cannot open " + path.string());
    DatasetManifest m;
    m.root = path.parent_path();
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string key;
            hs >> key;
            if (key == "seed") hs >> m.seed;
            else if (key == "spec_hash") hs >> m.spec_hash;
            continue;
        }
        std::istringstream ls(line);
        DatasetManifest::Entry e;
        if (!(std::getline(ls, e.rel_path, '\t') && std::getline(ls, e.split, '\t') &&
              std::getline(ls, e.category, '\t') && std::getline(ls, e.instance))) {
            throw DataError("load_manifest: malformed record in " + path.string());
        }
        m.entries.push_back(std::move(e));
    }
    for (const auto& e : m.entries) {
        if (!fs::exists(m.root / e.rel_path)) {
            throw DataError("load_manifest: missing sample directory " +
                            (m.root / e.rel_path).string());
        }
    }
    return m;
}

void save_sample(const fs::path& dir, const Sample& sample) {
    fs::create_directories(dir);
    write_png_rgb8((dir / "image.png").string(), sample.image);
    write_ascii_ply(dir / "cloud.ply", sample.pc_canonical.points);
    json meta;
    const Quaternion q = sample.pose.rotation.normalized();
    meta["quat_wxyz"] = {q.w, q.x, q.y, q.z};
    meta["translation_m"] = {sample.pose.translation.x(), sample.pose.translation.y(),
                             sample.pose.translation.z()};
    meta["fx"] = sample.intrinsics.fx;
    meta["fy"] = sample.intrinsics.fy;
    meta["cx"] = sample.intrinsics.cx;
    meta["cy"] = sample.intrinsics.cy;
    meta["width"] = sample.intrinsics.image_width;
    meta["height"] = sample.intrinsics.image_height;
    meta["category"] = kCategoryNames.at(sample.category_id);
    meta["instance"] = sample.instance_id;
    meta["scale_m"] = sample.pc_canonical.scale_m;
    std::ofstream os(dir / "meta.json");
    if (!os) throw DataError("save_sample: cannot write meta.json in " + dir.string());
    os << meta.dump(2) << "\n";
}

Sample load_sample(const DatasetManifest& manifest, int index) {
    if (index < 0 || index >= static_cast<int>(manifest.entries.size())) {
        throw DataError("load_sample: index out of range");
    }
    const fs::path dir = manifest.root / manifest.entries[index].rel_path;
    Sample s;
    s.image = read_png_rgb8((dir / "image.png").string());

    json meta;
    {
        std::ifstream is(dir / "meta.json");
        if (!is) throw DataError("load_sample: cannot open " + (dir / "meta.json").string());
        try {
            is >> meta;
        } catch (const json::exception& e) {
            throw DataError("load_sample: corrupt meta.json in " + dir.string() + ": " +
                            e.what());
        }
    }
    try {
        const auto qv = meta.at("quat_wxyz");
        Quaternion q{qv.at(0), qv.at(1), qv.at(2), qv.at(3)};
        if (std::abs(q.norm() - 1.0) > 1e-3) {
            throw DataError("load_sample: non-unit quaternion in " + dir.string());
        }
        s.pose.rotation = q.normalized();
        const auto tv = meta.at("translation_m");
        s.pose.translation = Eigen::Vector3d(tv.at(0), tv.at(1), tv.at(2));
        s.intrinsics.fx = meta.at("fx");
        s.intrinsics.fy = meta.at("fy");
        s.intrinsics.cx = meta.at("cx");
        s.intrinsics.cy = meta.at("cy");
        s.intrinsics.image_width = meta.at("width");
        s.intrinsics.image_height = meta.at("height");
        s.category_id = category_id_from_name(meta.at("category"));
        s.instance_id = meta.at("instance");
        s.pc_canonical.scale_m = meta.at("scale_m");
    } catch (const json::exception& e) {
        throw DataError("load_sample: bad meta.json in " + dir.string() + ": " + e.what());
    }
    s.pc_canonical.points = read_ascii_ply(dir / "cloud.ply");
    s.pc_canonical.category_id = s.category_id;
    try {
        s.pc_canonical.validate();
        s.intrinsics.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError("load_sample: invariant violation in " + dir.string() + ": " +
                        e.what());
    }
    if (s.image.height != s.intrinsics.image_height ||
        s.image.width != s.intrinsics.image_width) {
        throw DataError("load_sample: image size disagrees with meta in " + dir.string());
    }
    return s;
}

void write_ascii_ply(const fs::path& path, const PointMatrix& points) {
    std::ofstream os(path);
    if (!os) throw DataError("write_ascii_ply: cannot write " + path.string());
    os << "ply\nformat ascii 1.0\nelement vertex " << points.rows()
       << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    os.precision(9);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        os << points(i, 0) << " " << points(i, 1) << " " << points(i, 2) << "\n";
    }
}

PointMatrix read_ascii_ply(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("read_ascii_ply: cannot open " + path.string());
    std::string line;
    int n = -1;
    bool in_header = true;
    while (in_header && std::getline(is, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "element") {
            std::string what;
            ls >> what >> n;
            if (what != "vertex") throw DataError("read_ascii_ply: unsupported element");
        } else if (word == "end_header") {
            in_header = false;
        } else if (word == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "ascii") throw DataError("read_ascii_ply: binary PLY unsupported");
        }
    }
    if (n < 0) throw DataError("read_ascii_ply: missing vertex count in " + path.string());
    PointMatrix pts(n, 3);
    for (int i = 0; i < n; ++i) {
        if (!(is >> pts(i, 0) >> pts(i, 1) >> pts(i, 2))) {
            throw DataError("read_ascii_ply: truncated vertex data in " + path.string());
        }
    }
    return pts;
}

ImageTensor occlude(const ImageTensor& image, OcclusionDirection direction) {
    ImageTensor out = image;
    const int bh = image.height / 3;
    const int bw = image.width / 3;
    int y0 = 0, y1 = image.height, x0 = 0, x1 = image.width;
    switch (direction) {
        case OcclusionDirection::kTop: y1 = bh; break;
        case OcclusionDirection::kBottom: y0 = image.height - bh; break;
        case OcclusionDirection::kLeft: x1 = bw; break;
        case OcclusionDirection::kRight: x0 = image.width - bw; break;
        case OcclusionDirection::kCenter:
            y0 = (image.height - bh) / 2;
            y1 = y0 + bh;
            x0 = (image.width - bw) / 2;
            x1 = x0 + bw;
            break;
    }
    for (int c = 0; c < image.channels; ++c) {
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) out.at(c, y, x) = 0.0f;
        }
    }
    return out;
}

PointMatrix sample_mesh_to_pointcloud(const TriangleMesh& mesh, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_mesh_to_pointcloud: n must be >= 1");
    std::vector<double> cumulative;
    cumulative.reserve(mesh.faces.size());
    double total = 0.0;
    for (const auto& f : mesh.faces) {
        const Eigen::Vector3d a = mesh.vertices.row(f[0]);
        const Eigen::Vector3d b = mesh.vertices.row(f[1]);
        const Eigen::Vector3d c = mesh.vertices.row(f[2]);
        total += 0.5 * (b - a).cross(c - a).norm();
        cumulative.push_back(total);
    }
    if (!(total > 0.0)) {
        throw std::invalid_argument("sample_mesh_to_pointcloud: zero-area mesh");
    }
    PointMatrix pts(n, 3);
    for (int i = 0; i < n; ++i) {
        const double r = rng.uniform() * total;
        const size_t face =
            std::lower_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin();
        const auto& f = mesh.faces[std::min(face, mesh.faces.size() - 1)];
        double u = rng.uniform(), v = rng.uniform();
        if (u + v > 1.0) { // reflect into the unit triangle
            u = 1.0 - u;
            v = 1.0 - v;
        }
        const Eigen::Vector3d a = mesh.vertices.row(f[0]);
        const Eigen::Vector3d b = mesh.vertices.row(f[1]);
        const Eigen::Vector3d c = mesh.vertices.row(f[2]);
        pts.row(i) = (a + u * (b - a) + v * (c - a)).transpose();
    }
    return pts;
}

} // namespace glissando
