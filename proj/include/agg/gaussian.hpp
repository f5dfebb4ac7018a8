#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <vector>

namespace agg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Unit quaternion, scalar first.
struct Quat {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const;
    friend bool operator==(const Quat&, const Quat&) = default;
};

/// Symmetric positive semi-definite 3x3 covariance.
struct Covariance3 {
    Mat3 sym = Mat3::Identity();
};

/// Fixed-count set of 3D Gaussians with diffuse colors and one shared
/// canonical scale and rotation. Scene units are normalized to [-1,1]^3.
struct GaussianSet {
    std::vector<Vec3> means;
    std::vector<Vec3> colors;
    std::vector<double> opacities;
    double scale = 0.03;
    Quat rotation{};

    std::size_t size() const { return means.size(); }

    static GaussianSet with_count(std::size_t n, double scale);

    /// Throws CountMismatch / InvalidRange / NonFiniteInput when an invariant does not hold.
    void validate() const;
};

/// Canonical isotropic scale for the paper-scale Gaussian counts (4096 -> 0.03,
/// 16384 -> 0.01); other counts fall back to `fallback`.
double canonical_scale(std::size_t count, double fallback);

inline constexpr double kCovarianceEpsilon = 1e-9;

Mat3 quat_to_rotmat(const Quat& q);

/// R * diag(s,s,s)^2 * R^T. Quaternions off unit length by < 1e-3 are normalized.
Covariance3 build_covariance(double scale, const Quat& rotation);

/// exp(-1/2 x^T Sigma^-1 x) with Sigma regularized by kCovarianceEpsilon * I.
double evaluate_kernel(const Covariance3& cov, const Vec3& offset);

}  // namespace agg
