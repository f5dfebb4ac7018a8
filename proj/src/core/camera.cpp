#include "agg/camera.hpp"

#include "agg/error.hpp"

#include <cmath>
#include <numbers>

namespace agg {

void Camera::validate() const {
    if (!std::isfinite(focal) || focal <= 0.0) {
        throw Error(ErrorCode::InvalidRange, "camera focal must be positive");
    }
    if (!(near > 0.0 && near < far)) {
        throw Error(ErrorCode::InvalidRange, "camera requires 0 < near < far");
    }
    if (width <= 0 || height <= 0 || width > 4096 || height > 4096) {
        throw Error(ErrorCode::InvalidRange, "camera image size must be in [1, 4096]");
    }
    if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(cx) || !std::isfinite(cy)) {
        throw Error(ErrorCode::NonFiniteInput, "camera pose is not finite");
    }
    if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
        std::abs(rotation.determinant() - 1.0) > 1e-6) {
        throw Error(ErrorCode::InvalidRange, "camera rotation is not orthonormal");
    }
}

double focal_from_fov(int size, double fov_deg) {
    const double half = 0.5 * fov_deg * std::numbers::pi / 180.0;
    return 0.5 * size / std::tan(half);
}

Camera look_at(const Vec3& eye, const Vec3& target, int width, int height, double focal) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 up = Vec3::UnitZ();
    if (std::abs(forward.dot(up)) > 1.0 - 1e-9) {
        up = Vec3::UnitY();
    }
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);

    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    cam.width = width;
    cam.height = height;
    cam.focal = focal;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.near = 0.1;
    cam.far = 100.0;
    return cam;
}

Camera orbit_camera(double azimuth_deg, double elevation_deg, double radius, int size, double fov_deg) {
    const double az = azimuth_deg * std::numbers::pi / 180.0;
    const double el = elevation_deg * std::numbers::pi / 180.0;
    const Vec3 eye(radius * std::cos(el) * std::cos(az), radius * std::cos(el) * std::sin(az),
                   radius * std::sin(el));
    return look_at(eye, Vec3::Zero(), size, size, focal_from_fov(size, fov_deg));
}

Mat3 rotation_z(double angle_rad) {
    const double c = std::cos(angle_rad);
    const double s = std::sin(angle_rad);
    Mat3 r;
    r << c, -s, 0, s, c, 0, 0, 0, 1;
    return r;
}

}  // namespace agg
