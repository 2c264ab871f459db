#pragma once

// Dataset abstraction and on-disk format. One directory per sample holding
// image.png (8-bit RGB masked crop, black background), cloud.ply (ASCII PLY
// with float x y z) and meta.json. The manifest is line-delimited records
// (relative_path, split, category, instance) plus seed/spec-hash headers.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "glissando/geometry.hpp"
#include "glissando/image.hpp"
#include "glissando/rng.hpp"

namespace glissando {

inline const std::vector<std::string> kCategoryNames = {
    "box", "cylinder", "bowl", "mug", "bottle", "laptop-wedge"};
int category_id_from_name(const std::string& name); // throws DataError if unknown

struct Sample {
    ImageTensor image;
    PointCloud pc_canonical;
    Pose pose; // object-to-camera
    CameraIntrinsics intrinsics;
    int category_id = -1;
    std::string instance_id;
};

struct DatasetManifest {
    struct Entry {
        std::string rel_path;
        std::string split; // train / val / test
        std::string category;
        std::string instance;
    };
    std::filesystem::path root;
    std::vector<Entry> entries;
    uint64_t seed = 0;
    std::string spec_hash;

    std::vector<int> indices_for_split(const std::string& split) const;
};

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Full sample round trip; validates every type invariant on load.
void save_sample(const std::filesystem::path& dir, const Sample& sample);
Sample load_sample(const DatasetManifest& manifest, int index);

// ASCII PLY with x y z float properties.
void write_ascii_ply(const std::filesystem::path& path, const PointMatrix& points);
PointMatrix read_ascii_ply(const std::filesystem::path& path);

enum class OcclusionDirection { kTop, kBottom, kLeft, kRight, kCenter };
inline const std::vector<std::pair<OcclusionDirection, std::string>> kOcclusionDirections = {
    {OcclusionDirection::kBottom, "bottom"}, {OcclusionDirection::kCenter, "center"},
    {OcclusionDirection::kLeft, "left"},     {OcclusionDirection::kRight, "right"},
    {OcclusionDirection::kTop, "top"}};

// Zeroes a block of floor(dim/3) pixels: full-width strips for top/bottom,
// full-height strips for left/right, and a centered block for center.
ImageTensor occlude(const ImageTensor& image, OcclusionDirection direction);

struct TriangleMesh {
    PointMatrix vertices;
    std::vector<std::array<int, 3>> faces;
};

// Area-weighted triangle selection + uniform barycentric sampling.
PointMatrix sample_mesh_to_pointcloud(const TriangleMesh& mesh, int n, Rng& rng);

} // namespace glissando
