#include "agg/error.hpp"
#include "agg/ply.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>

using namespace agg;
using agg::testing::TempDir;

namespace {

GaussianSet random_set(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GaussianSet set;
    for (std::size_t i = 0; i < n; ++i) {
        set.means.emplace_back(2 * u(rng) - 1, 2 * u(rng) - 1, 2 * u(rng) - 1);
        set.colors.emplace_back(u(rng), u(rng), u(rng));
        set.opacities.push_back(u(rng));
    }
    set.scale = 0.001 + u(rng);
    Quat q{u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5};
    const double s = q.norm();
    set.rotation = {q.w / s, q.x / s, q.y / s, q.z / s};
    return set;
}

void expect_identical(const GaussianSet& a, const GaussianSet& b) {
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(a.scale, b.scale);
    EXPECT_EQ(a.rotation, b.rotation);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.means[i], b.means[i]);
        EXPECT_EQ(a.colors[i], b.colors[i]);
        EXPECT_EQ(a.opacities[i], b.opacities[i]);
    }
}

}  // namespace

TEST(Ply, RoundTripSixteen) {
    TempDir dir;
    std::mt19937_64 rng(1);
    const GaussianSet set = random_set(rng, 16);
    export_ply(set, dir / "a.ply");
    expect_identical(set, import_ply(dir / "a.ply"));
}

TEST(Ply, RoundTripProperty) {
    TempDir dir;
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 120; ++trial) {
        const GaussianSet set = random_set(rng, rng() % 50);
        export_ply(set, dir / "p.ply");
        expect_identical(set, import_ply(dir / "p.ply"));
    }
}

TEST(Ply, CanonicalScaleRestored) {
    TempDir dir;
    GaussianSet set = GaussianSet::with_count(4096, canonical_scale(4096, 0.05));
    export_ply(set, dir / "c.ply");
    const GaussianSet back = import_ply(dir / "c.ply");
    EXPECT_EQ(back.size(), 4096u);
    EXPECT_EQ(back.scale, 0.03);
}

TEST(Ply, MissingOpacityIsMalformed) {
    TempDir dir;
    std::ofstream out(dir / "bad.ply", std::ios::binary);
    out << "ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
        << "property float x\nproperty float y\nproperty float z\n"
        << "property float red\nproperty float green\nproperty float blue\nend_header\n";
    const float v[6] = {0, 0, 0, 1, 1, 1};
    out.write(reinterpret_cast<const char*>(v), sizeof(v));
    out.close();
    try {
        import_ply(dir / "bad.ply");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MalformedHeader);
    }
}

TEST(Ply, FloatPropertiesAndTruncation) {
    TempDir dir;
    {
        std::ofstream out(dir / "f.ply", std::ios::binary);
        out << "ply\nformat binary_little_endian 1.0\ncomment agg_scale 0.25\nelement vertex 2\n"
            << "property float x\nproperty float y\nproperty float z\nproperty float nx\n"
            << "property float red\nproperty float green\nproperty float blue\nproperty float opacity\nend_header\n";
        const float v[16] = {0.5f, 0, 0, 9, 1, 0, 0, 0.5f, -0.5f, 0, 0, 9, 0, 1, 0, 0.25f};
        out.write(reinterpret_cast<const char*>(v), sizeof(v));
    }
    const GaussianSet set = import_ply(dir / "f.ply");
    ASSERT_EQ(set.size(), 2u);
    EXPECT_EQ(set.means[1].x(), -0.5);
    EXPECT_EQ(set.colors[1].y(), 1.0);
    EXPECT_EQ(set.opacities[1], 0.25);
    EXPECT_EQ(set.scale, 0.25);

    std::mt19937_64 rng(3);
    export_ply(random_set(rng, 10), dir / "t.ply");
    std::filesystem::resize_file(dir / "t.ply", std::filesystem::file_size(dir / "t.ply") - 9);
    try {
        import_ply(dir / "t.ply");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CountMismatch);
    }
    EXPECT_THROW(import_ply(dir / "missing.ply"), Error);
}
