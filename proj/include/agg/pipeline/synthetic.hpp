#pragma once

#include "agg/camera.hpp"
#include "agg/gaussian.hpp"
#include "agg/image.hpp"
#include "agg/render.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace agg {

/// Azimuths are integer ticks so joint rotations and normalization are exact.
inline constexpr int kAzimuthTicks = 3600;

int wrap_ticks(std::int64_t ticks);
double ticks_to_degrees(int ticks);
/// Rotation about +z by the given ticks; exactly the identity at 0.
Mat3 ticks_rotation(int ticks);

enum class PartKind { Sphere, Box, Superquadric };

const char* part_kind_name(PartKind kind);

struct Part {
    PartKind kind = PartKind::Sphere;
    Vec3 center = Vec3::Zero();
    Vec3 radii = Vec3::Constant(0.2);  // half extents; equal for spheres
    double exponent = 1.0;             // superquadric roundness, 1 is an ellipsoid
    Vec3 albedo = Vec3::Constant(0.7);

    bool inside(const Vec3& p) const;
};

struct SyntheticObject {
    std::uint64_t seed = 0;
    std::vector<Part> parts;
    std::vector<Vec3> points;   // surface samples
    std::vector<Vec3> normals;  // outward unit normals
    std::vector<Vec3> colors;   // shaded albedo in [0,1]
};

inline constexpr int kMinSurfaceSamples = 4096;

/// 2-5 parts inside [-0.8,0.8]^3, deterministic in the seed.
SyntheticObject generate_synthetic_object(std::uint64_t seed, int samples = kMinSurfaceSamples);
/// Samples the visible union surface of given parts (points inside another
/// part are discarded). Throws InvalidArgument for an empty part list.
SyntheticObject object_from_parts(std::vector<Part> parts, std::uint64_t seed, int samples = kMinSurfaceSamples);

std::string object_spec_json(const SyntheticObject& object);
/// Rebuilds the object (including surface samples) from its spec text.
SyntheticObject object_from_spec_json(const std::string& text);

inline constexpr double kGroundTruthScale = 0.02;
inline constexpr double kGroundTruthOpacity = 0.95;

/// Dense Gaussians on the surface samples with the shaded colors.
GaussianSet ground_truth_gaussians(const SyntheticObject& object);

/// Means rotated about +z; colors and opacities unchanged.
GaussianSet rotate_set(const GaussianSet& set, int ticks);
GaussianSet rotate_set(const GaussianSet& set, const Mat3& rotation);

struct CameraSpec {
    int azimuth_ticks = 0;
    double elevation = 0.0;  // degrees
    double radius = 2.4;
    double fov = 45.0;       // degrees
    int size = 64;

    Camera camera() const;
    friend bool operator==(const CameraSpec&, const CameraSpec&) = default;
};

/// A training scene in the input-view frame: the object is rotated by
/// `object_ticks` and the input camera sits at azimuth 0.
struct SceneSample {
    int object_ticks = 0;
    CameraSpec input;
    std::vector<CameraSpec> views;
};

struct CameraRange {
    double elevation_min = -10.0;
    double elevation_max = 40.0;
    double radius = 2.4;
    double fov = 45.0;
};

/// World-frame draw: object rotation, input camera and n distinct supervision
/// azimuths. Throws InvalidRange for n < 1 or a bad elevation range.
SceneSample sample_world_scene(std::mt19937_64& rng, int n, const CameraRange& range, int input_size, int view_size);
/// Joint rotation of object and every camera.
SceneSample rotate_scene(const SceneSample& scene, int ticks);
/// Rotates object and cameras jointly so the input camera has azimuth 0.
SceneSample normalize_scene(const SceneSample& scene);
/// n cameras in the input-view frame: element 0 is the input view at azimuth
/// 0, the rest are distinct supervision views.
std::vector<CameraSpec> sample_cameras(std::mt19937_64& rng, int n, const CameraRange& range, int size);

std::vector<ImageRGBA> render_views(const GaussianSet& object, const std::vector<CameraSpec>& cams,
                                    const RasterSettings& settings = {});

}  // namespace agg
