#include "agg/error.hpp"
#include "agg/gaussian.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace agg;

namespace {

Quat random_unit_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Quat q{n(rng), n(rng), n(rng), n(rng)};
    const double s = q.norm();
    return {q.w / s, q.x / s, q.y / s, q.z / s};
}

// Independent rotation: Eigen's quaternion conversion.
Mat3 oracle_rotation(const Quat& q) { return Eigen::Quaterniond(q.w, q.x, q.y, q.z).toRotationMatrix(); }

}  // namespace

TEST(BuildCovariance, CanonicalScaleIdentityRotation) {
    const Covariance3 cov = build_covariance(0.03, Quat{});
    EXPECT_TRUE(cov.sym.isApprox(9e-4 * Mat3::Identity(), 1e-15));
}

TEST(BuildCovariance, IsotropicIsRotationInvariant) {
    const double h = std::sqrt(0.5);
    const Covariance3 cov = build_covariance(1.0, Quat{h, 0, 0, h});
    EXPECT_LT((cov.sym - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildCovariance, MatchesDenseProductOracle) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Quat q = random_unit_quat(rng);
        const Mat3 r = oracle_rotation(q);
        Mat3 s = Mat3::Zero();
        for (int i = 0; i < 3; ++i) s(i, i) = 0.5;
        Mat3 expected = Mat3::Zero();
        // Explicit triple loop product R S S^T R^T.
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k)
                    for (int l = 0; l < 3; ++l)
                        for (int m = 0; m < 3; ++m) expected(i, j) += r(i, k) * s(k, l) * s(m, l) * r(j, m);
        const Covariance3 cov = build_covariance(0.5, q);
        EXPECT_LT((cov.sym - expected).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(BuildCovariance, EigenvaluesEqualScaleSquared) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.001, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        const double s = u(rng);
        const Covariance3 cov = build_covariance(s, random_unit_quat(rng));
        EXPECT_LT((cov.sym - cov.sym.transpose()).cwiseAbs().maxCoeff(), 1e-9);
        const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov.sym);
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(eig.eigenvalues()[i], s * s, 1e-9);
    }
}

TEST(BuildCovariance, NormalizesSlightlyOffQuaternion) {
    const Covariance3 cov = build_covariance(1.0, Quat{1.0005, 0, 0, 0});
    EXPECT_LT((cov.sym - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildCovariance, Errors) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    try {
        build_covariance(nan, Quat{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonFiniteInput);
    }
    try {
        build_covariance(1.0, Quat{1, nan, 0, 0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonFiniteInput);
    }
    try {
        build_covariance(1.0, Quat{0, 0, 0, 1e-8});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateQuaternion);
    }
    try {
        build_covariance(1.0, Quat{0.5, 0, 0, 0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateQuaternion);
    }
}

TEST(EvaluateKernel, HandValues) {
    Covariance3 unit;
    EXPECT_DOUBLE_EQ(evaluate_kernel(unit, Vec3::Zero()), 1.0);
    EXPECT_NEAR(evaluate_kernel(unit, Vec3(1, 0, 0)), std::exp(-0.5), 1e-8);
    const Covariance3 canon = build_covariance(0.03, Quat{});
    EXPECT_NEAR(evaluate_kernel(canon, Vec3(0.03, 0, 0)), std::exp(-0.5), 1e-6);
}

TEST(EvaluateKernel, EvenAndDecreasingAlongRays) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Covariance3 cov = build_covariance(0.2 + std::abs(n(rng)), random_unit_quat(rng));
        const Vec3 dir(n(rng), n(rng), n(rng));
        EXPECT_EQ(evaluate_kernel(cov, dir), evaluate_kernel(cov, -dir));
        double prev = 1.0;
        for (int k = 1; k <= 10; ++k) {
            const double g = evaluate_kernel(cov, dir * (0.1 * k));
            EXPECT_LT(g, prev);
            prev = g;
        }
    }
}

TEST(EvaluateKernel, SingularCovariance) {
    Covariance3 cov;
    cov.sym = Mat3::Zero();
    cov.sym(0, 0) = -1.0;
    try {
        evaluate_kernel(cov, Vec3::Zero());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SingularCovariance);
    }
}

TEST(QuatToRotmat, KnownValues) {
    EXPECT_TRUE(quat_to_rotmat(Quat{}).isApprox(Mat3::Identity()));
    Mat3 flip = Mat3::Zero();
    flip.diagonal() << 1, -1, -1;
    EXPECT_LT((quat_to_rotmat(Quat{0, 1, 0, 0}) - flip).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(QuatToRotmat, DoubleCoverOrthonormalAndMatchesOracle) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const Quat q = random_unit_quat(rng);
        const Mat3 r = quat_to_rotmat(q);
        EXPECT_EQ(r, quat_to_rotmat(Quat{-q.w, -q.x, -q.y, -q.z}));
        EXPECT_LT((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
        EXPECT_LT((r - oracle_rotation(q)).cwiseAbs().maxCoeff(), 1e-12);
    }
    EXPECT_THROW(quat_to_rotmat(Quat{2, 0, 0, 0}), Error);
}

TEST(GaussianSet, CanonicalDefaultsAndValidation) {
    EXPECT_DOUBLE_EQ(canonical_scale(4096, 0.05), 0.03);
    EXPECT_DOUBLE_EQ(canonical_scale(16384, 0.05), 0.01);
    EXPECT_DOUBLE_EQ(canonical_scale(256, 0.05), 0.05);

    GaussianSet set = GaussianSet::with_count(4, 0.03);
    EXPECT_NO_THROW(set.validate());
    EXPECT_EQ(set.rotation, (Quat{1, 0, 0, 0}));
    set.opacities[1] = 1.5;
    EXPECT_THROW(set.validate(), Error);
    set.opacities[1] = 0.5;
    set.colors.pop_back();
    try {
        set.validate();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CountMismatch);
    }
}
