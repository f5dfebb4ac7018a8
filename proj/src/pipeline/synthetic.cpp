#include "agg/pipeline/synthetic.hpp"

#include "agg/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace agg {

int wrap_ticks(std::int64_t ticks) {
    const std::int64_t m = ticks % kAzimuthTicks;
    return static_cast<int>(m < 0 ? m + kAzimuthTicks : m);
}

double ticks_to_degrees(int ticks) { return 360.0 * static_cast<double>(ticks) / kAzimuthTicks; }

Mat3 ticks_rotation(int ticks) {
    if (wrap_ticks(ticks) == 0) return Mat3::Identity();
    return rotation_z(ticks_to_degrees(wrap_ticks(ticks)) * std::numbers::pi / 180.0);
}

const char* part_kind_name(PartKind kind) {
    switch (kind) {
        case PartKind::Sphere: return "sphere";
        case PartKind::Box: return "box";
        case PartKind::Superquadric: return "superquadric";
    }
    return "unknown";
}

namespace {

PartKind part_kind_from_name(const std::string& name) {
    for (PartKind k : {PartKind::Sphere, PartKind::Box, PartKind::Superquadric}) {
        if (name == part_kind_name(k)) return k;
    }
    throw Error(ErrorCode::MalformedHeader, "unknown part kind '" + name + "'");
}

double superquadric_value(const Vec3& d, double exponent) {
    const double p = 2.0 / exponent;
    return std::pow(std::abs(d[0]), p) + std::pow(std::abs(d[1]), p) + std::pow(std::abs(d[2]), p);
}

double part_area(const Part& part) {
    const Vec3& r = part.radii;
    if (part.kind == PartKind::Box) return 8.0 * (r[0] * r[1] + r[1] * r[2] + r[0] * r[2]);
    return 4.0 * std::numbers::pi * (r[0] * r[1] + r[1] * r[2] + r[0] * r[2]) / 3.0;
}

// One surface point and outward normal of a single part.
std::pair<Vec3, Vec3> sample_surface(const Part& part, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Vec3& r = part.radii;
    if (part.kind == PartKind::Box) {
        const double areas[3] = {r[1] * r[2], r[0] * r[2], r[0] * r[1]};
        std::discrete_distribution<int> face({areas[0], areas[0], areas[1], areas[1], areas[2], areas[2]});
        const int f = face(rng);
        const int axis = f / 2;
        const double side = (f % 2) ? 1.0 : -1.0;
        Vec3 local(u(rng), u(rng), u(rng));
        local[axis] = side;
        Vec3 normal = Vec3::Zero();
        normal[axis] = side;
        return {part.center + local.cwiseProduct(r), normal};
    }
    std::normal_distribution<double> g(0.0, 1.0);
    Vec3 dir;
    do {
        dir = Vec3(g(rng), g(rng), g(rng));
    } while (dir.norm() < 1e-9);
    dir.normalize();
    const double e = part.kind == PartKind::Sphere ? 1.0 : part.exponent;
    const Vec3 q = dir * std::pow(superquadric_value(dir, e), -e / 2.0);
    const double p = 2.0 / e;
    Vec3 grad;
    for (int i = 0; i < 3; ++i) {
        const double a = std::abs(q[i]);
        grad[i] = (a > 0 ? std::pow(a, p - 1.0) : 0.0) * (q[i] < 0 ? -1.0 : 1.0) / r[i];
    }
    if (grad.norm() < 1e-12) grad = dir;
    return {part.center + q.cwiseProduct(r), grad.normalized()};
}

const Vec3 kLight = Vec3(0.4, -0.3, 0.85).normalized();

Vec3 shade(const Vec3& albedo, const Vec3& normal) {
    const double lambert = std::max(0.0, normal.dot(kLight));
    return (albedo * (0.35 + 0.65 * lambert)).cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace

bool Part::inside(const Vec3& p) const {
    const Vec3 d = (p - center).cwiseQuotient(radii);
    if (kind == PartKind::Box) return d.cwiseAbs().maxCoeff() < 1.0 - 1e-9;
    return superquadric_value(d, kind == PartKind::Sphere ? 1.0 : exponent) < 1.0 - 1e-9;
}

SyntheticObject object_from_parts(std::vector<Part> parts, std::uint64_t seed, int samples) {
    if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "an object needs at least one part");
    if (samples < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
    SyntheticObject obj;
    obj.seed = seed;
    obj.parts = std::move(parts);
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    std::vector<double> areas;
    for (const auto& p : obj.parts) areas.push_back(part_area(p));
    std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
    const std::int64_t max_tries = 200LL * samples;
    for (std::int64_t tries = 0; static_cast<int>(obj.points.size()) < samples; ++tries) {
        if (tries > max_tries) throw Error(ErrorCode::InvalidArgument, "object surface is fully enclosed");
        const std::size_t k = pick(rng);
        auto [point, normal] = sample_surface(obj.parts[k], rng);
        bool hidden = false;
        for (std::size_t j = 0; j < obj.parts.size() && !hidden; ++j) hidden = j != k && obj.parts[j].inside(point);
        if (hidden) continue;
        obj.points.push_back(point);
        obj.normals.push_back(normal);
        obj.colors.push_back(shade(obj.parts[k].albedo, normal));
    }
    return obj;
}

SyntheticObject generate_synthetic_object(std::uint64_t seed, int samples) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 1);
    std::uniform_int_distribution<int> count(2, 5);
    std::uniform_int_distribution<int> kind(0, 2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = count(rng);
    std::vector<Part> parts;
    for (int i = 0; i < n; ++i) {
        Part p;
        p.kind = static_cast<PartKind>(kind(rng));
        const double spread = i == 0 ? 0.15 : 0.4;
        p.center = Vec3(u(rng), u(rng), u(rng)) * (2.0 * spread) - Vec3::Constant(spread);
        if (p.kind == PartKind::Sphere) {
            p.radii = Vec3::Constant(0.15 + 0.2 * u(rng));
        } else {
            p.radii = Vec3(0.15 + 0.2 * u(rng), 0.15 + 0.2 * u(rng), 0.15 + 0.2 * u(rng));
        }
        p.exponent = p.kind == PartKind::Superquadric ? 0.3 + 0.7 * u(rng) : 1.0;
        p.albedo = Vec3(0.1 + 0.85 * u(rng), 0.1 + 0.85 * u(rng), 0.1 + 0.85 * u(rng));
        parts.push_back(p);
    }
    return object_from_parts(std::move(parts), seed, samples);
}

std::string object_spec_json(const SyntheticObject& object) {
    using nlohmann::json;
    auto vec = [](const Vec3& v) { return json::array({v[0], v[1], v[2]}); };
    json parts = json::array();
    for (const auto& p : object.parts) {
        parts.push_back({{"kind", part_kind_name(p.kind)},
                         {"center", vec(p.center)},
                         {"radii", vec(p.radii)},
                         {"exponent", p.exponent},
                         {"albedo", vec(p.albedo)}});
    }
    json j{{"seed", object.seed}, {"samples", object.points.size()}, {"parts", parts}};
    return j.dump(2);
}

SyntheticObject object_from_spec_json(const std::string& text) {
    using nlohmann::json;
    try {
        const json j = json::parse(text);
        auto vec = [](const json& a) { return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()); };
        std::vector<Part> parts;
        for (const auto& pj : j.at("parts")) {
            Part p;
            p.kind = part_kind_from_name(pj.at("kind").get<std::string>());
            p.center = vec(pj.at("center"));
            p.radii = vec(pj.at("radii"));
            p.exponent = pj.at("exponent").get<double>();
            p.albedo = vec(pj.at("albedo"));
            if (p.radii.minCoeff() <= 0 || p.exponent <= 0) throw Error(ErrorCode::InvalidRange, "bad part size");
            parts.push_back(p);
        }
        return object_from_parts(std::move(parts), j.at("seed").get<std::uint64_t>(), j.at("samples").get<int>());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, std::string("object spec: ") + e.what());
    }
}

GaussianSet ground_truth_gaussians(const SyntheticObject& object) {
    GaussianSet set = GaussianSet::with_count(object.points.size(), kGroundTruthScale);
    set.means = object.points;
    set.colors = object.colors;
    std::fill(set.opacities.begin(), set.opacities.end(), kGroundTruthOpacity);
    return set;
}

GaussianSet rotate_set(const GaussianSet& set, const Mat3& rotation) {
    GaussianSet out = set;
    for (auto& m : out.means) m = rotation * m;
    return out;
}

GaussianSet rotate_set(const GaussianSet& set, int ticks) {
    if (wrap_ticks(ticks) == 0) return set;
    return rotate_set(set, ticks_rotation(ticks));
}

Camera CameraSpec::camera() const { return orbit_camera(ticks_to_degrees(wrap_ticks(azimuth_ticks)), elevation, radius, size, fov); }

SceneSample sample_world_scene(std::mt19937_64& rng, int n, const CameraRange& range, int input_size, int view_size) {
    if (n < 1) throw Error(ErrorCode::InvalidRange, "need at least one supervision camera");
    if (n >= kAzimuthTicks) throw Error(ErrorCode::InvalidRange, "too many cameras");
    if (!(range.elevation_min <= range.elevation_max) || range.elevation_min <= -90 || range.elevation_max >= 90 ||
        !(range.radius > 0) || !(range.fov > 0 && range.fov < 180)) {
        throw Error(ErrorCode::InvalidRange, "bad camera range");
    }
    std::uniform_int_distribution<int> tick(0, kAzimuthTicks - 1);
    std::uniform_real_distribution<double> elev(range.elevation_min, range.elevation_max);
    auto make = [&](int ticks, int size) {
        CameraSpec c;
        c.azimuth_ticks = ticks;
        c.elevation = elev(rng);
        c.radius = range.radius;
        c.fov = range.fov;
        c.size = size;
        return c;
    };
    SceneSample s;
    s.object_ticks = tick(rng);
    s.input = make(tick(rng), input_size);
    std::set<int> used;
    while (static_cast<int>(s.views.size()) < n) {
        const int t = tick(rng);
        if (!used.insert(t).second) continue;
        s.views.push_back(make(t, view_size));
    }
    return s;
}

SceneSample rotate_scene(const SceneSample& scene, int ticks) {
    SceneSample s = scene;
    s.object_ticks = wrap_ticks(static_cast<std::int64_t>(s.object_ticks) + ticks);
    s.input.azimuth_ticks = wrap_ticks(static_cast<std::int64_t>(s.input.azimuth_ticks) + ticks);
    for (auto& v : s.views) v.azimuth_ticks = wrap_ticks(static_cast<std::int64_t>(v.azimuth_ticks) + ticks);
    return s;
}

SceneSample normalize_scene(const SceneSample& scene) { return rotate_scene(scene, -scene.input.azimuth_ticks); }

std::vector<CameraSpec> sample_cameras(std::mt19937_64& rng, int n, const CameraRange& range, int size) {
    if (n < 1) throw Error(ErrorCode::InvalidRange, "need at least one camera");
    SceneSample s = normalize_scene(sample_world_scene(rng, std::max(n - 1, 1), range, size, size));
    std::vector<CameraSpec> cams{s.input};
    for (int i = 0; i + 1 < n; ++i) cams.push_back(s.views[i]);
    return cams;
}

std::vector<ImageRGBA> render_views(const GaussianSet& object, const std::vector<CameraSpec>& cams,
                                    const RasterSettings& settings) {
    std::vector<ImageRGBA> out;
    out.reserve(cams.size());
    for (const auto& c : cams) out.push_back(rasterize(object, c.camera(), settings));
    return out;
}

}  // namespace agg
