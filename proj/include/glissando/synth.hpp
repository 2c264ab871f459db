#pragma once

// Procedural dataset generator: parametric meshes for six desk categories,
// canonicalization to a unit bounding-box diagonal, area-weighted surface
// sampling, random poses, and flat-shaded Lambertian rasterization into
// masked crops. Deterministic for a given (spec, seed).

#include <filesystem>
#include <string>
#include <vector>

#include "glissando/data.hpp"

namespace glissando {

enum class PoseMode { kUpright, kSo3 };

struct GenSpec {
    std::vector<std::string> categories; // subset of kCategoryNames
    int train_instances = 8;
    int val_instances = 0;
    int test_instances = 2;
    int views_per_instance = 40;
    int n_points = 512;
    int image_size = 128;
    PoseMode pose_mode = PoseMode::kUpright;

    void validate() const;
    std::string canonical_text() const; // hashed into the manifest
    static GenSpec from_file(const std::string& path);
};

// Category-aligned mesh with randomized proportions, before normalization.
TriangleMesh build_category_mesh(int category_id, Rng& rng);

// Center at the bounding-box midpoint and scale the diagonal to 1.
void canonicalize_mesh(TriangleMesh& mesh);

// Flat-shaded z-buffered rasterization over a black background.
ImageTensor rasterize_mesh(const TriangleMesh& mesh, const Pose& pose,
                           const CameraIntrinsics& K, const Eigen::Vector3d& albedo);

// Coverage mask of the same rasterization (true where the object renders).
std::vector<uint8_t> rasterize_mask(const TriangleMesh& mesh, const Pose& pose,
                                    const CameraIntrinsics& K);

// Writes one directory per sample plus manifest.txt; returns the manifest.
DatasetManifest generate_synthetic_dataset(const GenSpec& spec, uint64_t seed,
                                           const std::filesystem::path& out_dir);

} // namespace glissando
