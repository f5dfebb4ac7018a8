#pragma once

#include "agg/gaussian.hpp"

namespace agg {

/// Pinhole camera. Pose maps world to camera coordinates (x right, y down,
/// z forward); pixel centers sit at integer coordinates.
struct Camera {
    double focal = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    double near = 0.01;
    double far = 100.0;

    Vec3 to_view(const Vec3& world) const { return rotation * world + translation; }
    Vec3 center() const { return -rotation.transpose() * translation; }

    void validate() const;
};

/// Focal length in pixels for a square image of `size` pixels and a vertical
/// field of view in degrees.
double focal_from_fov(int size, double fov_deg);

/// Camera at `eye` looking at `target`; world up is +z.
Camera look_at(const Vec3& eye, const Vec3& target, int width, int height, double focal);

/// Camera on a sphere of `radius` around the origin at the given azimuth
/// (about +z, measured from +x) and elevation, looking at the origin.
Camera orbit_camera(double azimuth_deg, double elevation_deg, double radius, int size, double fov_deg);

/// Rotation about +z by `angle_rad`.
Mat3 rotation_z(double angle_rad);

}  // namespace agg
