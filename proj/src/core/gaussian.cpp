#include "agg/gaussian.hpp"

#include "agg/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace agg {

namespace {

bool finite3(const Vec3& v) { return v.allFinite(); }

void require_finite_quat(const Quat& q) {
    if (!std::isfinite(q.w) || !std::isfinite(q.x) || !std::isfinite(q.y) || !std::isfinite(q.z)) {
        throw Error(ErrorCode::NonFiniteInput, "quaternion has non-finite component");
    }
}

Quat normalized_or_throw(const Quat& q) {
    require_finite_quat(q);
    const double n = q.norm();
    if (n < 1e-6) {
        throw Error(ErrorCode::DegenerateQuaternion, "quaternion norm below 1e-6");
    }
    if (std::abs(n - 1.0) > 1e-3) {
        throw Error(ErrorCode::DegenerateQuaternion,
                    "quaternion norm " + std::to_string(n) + " is not within 1e-3 of one");
    }
    return {q.w / n, q.x / n, q.y / n, q.z / n};
}

}  // namespace

double Quat::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

GaussianSet GaussianSet::with_count(std::size_t n, double scale) {
    GaussianSet set;
    set.means.assign(n, Vec3::Zero());
    set.colors.assign(n, Vec3::Constant(0.5));
    set.opacities.assign(n, 1.0);
    set.scale = scale;
    return set;
}

void GaussianSet::validate() const {
    if (colors.size() != means.size() || opacities.size() != means.size()) {
        throw Error(ErrorCode::CountMismatch, "means/colors/opacities lengths differ");
    }
    if (!std::isfinite(scale) || scale <= 0.0) {
        throw Error(ErrorCode::InvalidRange, "scale must be positive and finite");
    }
    require_finite_quat(rotation);
    if (std::abs(rotation.norm() - 1.0) > 1e-6) {
        throw Error(ErrorCode::DegenerateQuaternion, "rotation is not a unit quaternion");
    }
    for (std::size_t i = 0; i < means.size(); ++i) {
        if (!finite3(means[i]) || !finite3(colors[i]) || !std::isfinite(opacities[i])) {
            throw Error(ErrorCode::NonFiniteInput, "gaussian " + std::to_string(i) + " is not finite");
        }
        if (opacities[i] < 0.0 || opacities[i] > 1.0 || (colors[i].array() < 0.0).any() ||
            (colors[i].array() > 1.0).any()) {
            throw Error(ErrorCode::InvalidRange, "gaussian " + std::to_string(i) + " color/opacity outside [0,1]");
        }
    }
}

double canonical_scale(std::size_t count, double fallback) {
    if (count == 4096) return 0.03;
    if (count == 16384) return 0.01;
    return fallback;
}

Mat3 quat_to_rotmat(const Quat& q_in) {
    const Quat q = normalized_or_throw(q_in);
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Covariance3 build_covariance(double scale, const Quat& rotation) {
    if (!std::isfinite(scale)) {
        throw Error(ErrorCode::NonFiniteInput, "scale is not finite");
    }
    if (scale <= 0.0) {
        throw Error(ErrorCode::InvalidRange, "scale must be positive");
    }
    const Mat3 r = quat_to_rotmat(rotation);
    const Mat3 s = Vec3::Constant(scale).asDiagonal();
    Mat3 m = r * s * s.transpose() * r.transpose();
    // Symmetrize to remove rounding asymmetry.
    Covariance3 cov;
    cov.sym = 0.5 * (m + m.transpose());
    return cov;
}

double evaluate_kernel(const Covariance3& cov, const Vec3& offset) {
    if (!cov.sym.allFinite() || !offset.allFinite()) {
        throw Error(ErrorCode::NonFiniteInput, "kernel input is not finite");
    }
    const Mat3 reg = cov.sym + kCovarianceEpsilon * Mat3::Identity();
    Eigen::SelfAdjointEigenSolver<Mat3> eig(reg);
    if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 1e-12) {
        throw Error(ErrorCode::SingularCovariance, "covariance is not invertible after regularization");
    }
    const Eigen::LDLT<Mat3> ldlt(reg);
    const double mahal = offset.dot(ldlt.solve(offset));
    return std::exp(-0.5 * mahal);
}

}  // namespace agg
