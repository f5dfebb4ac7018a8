#include "agg/pipeline/dataset.hpp"

#include "agg/error.hpp"
#include "agg/ply.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace agg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        out << text;
        if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

json parse_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, path.string() + ": " + e.what());
    }
}

json dataset_settings(const TrainConfig& c) {
    return {{"data_seed", c.data_seed},         {"train_objects", c.train_objects}, {"test_objects", c.test_objects},
            {"stored_views", c.stored_views},   {"render_size", c.render_size},     {"elevation_min", c.elevation_min},
            {"elevation_max", c.elevation_max}, {"camera_radius", c.camera_radius}, {"fov", c.fov}};
}

json label_settings(const TrainConfig& c) {
    return {{"coarse_count", c.model.coarse_count},
            {"coarse_scale", c.model.coarse_scale},
            {"label_iterations", c.label_iterations},
            {"label_lr", c.label_lr}};
}

json camera_json(const CameraSpec& c) {
    return {{"azimuth_ticks", c.azimuth_ticks}, {"elevation", c.elevation}, {"radius", c.radius}, {"fov", c.fov},
            {"size", c.size}};
}

CameraSpec camera_from_json(const json& j) {
    CameraSpec c;
    c.azimuth_ticks = j.at("azimuth_ticks").get<int>();
    c.elevation = j.at("elevation").get<double>();
    c.radius = j.at("radius").get<double>();
    c.fov = j.at("fov").get<double>();
    c.size = j.at("size").get<int>();
    return c;
}

std::vector<CameraSpec> stored_cameras(const TrainConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0xCA3E8A5ULL);
    std::uniform_real_distribution<double> elev(config.elevation_min, config.elevation_max);
    std::uniform_int_distribution<int> tick(1, kAzimuthTicks - 1);
    auto make = [&](int ticks) {
        CameraSpec c;
        c.azimuth_ticks = ticks;
        c.elevation = elev(rng);
        c.radius = config.camera_radius;
        c.fov = config.fov;
        c.size = config.render_size;
        return c;
    };
    std::vector<CameraSpec> cams{make(0)};
    std::set<int> used;
    while (static_cast<int>(cams.size()) < config.stored_views) {
        const int t = tick(rng);
        if (used.insert(t).second) cams.push_back(make(t));
    }
    return cams;
}

fs::path object_dir(const fs::path& root, const std::string& id) { return root / "objects" / id; }

void emit(const LogFn& log, const std::string& line) {
    if (log) log(line);
}

}  // namespace

std::string object_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "obj_%04d", index);
    return buf;
}

std::uint64_t object_seed(std::uint64_t data_seed, int index) {
    return data_seed * 1000003ULL + static_cast<std::uint64_t>(index);
}

DatasetSplit generate_dataset(const TrainConfig& config, const fs::path& root, const LogFn& log) {
    config.validate();
    DatasetSplit split;
    const int total = config.train_objects + config.test_objects;
    for (int i = 0; i < total; ++i) {
        const std::string id = object_id(i);
        const std::uint64_t seed = object_seed(config.data_seed, i);
        const SyntheticObject obj = generate_synthetic_object(seed);
        const auto cams = stored_cameras(config, seed);
        const fs::path dir = object_dir(root, id);
        fs::remove_all(dir);
        fs::create_directories(dir / "views");
        write_text(dir / "spec", object_spec_json(obj));
        json cj = json::array();
        for (const auto& c : cams) cj.push_back(camera_json(c));
        write_text(dir / "cams", cj.dump(2));
        const auto images = render_views(ground_truth_gaussians(obj), cams);
        for (std::size_t k = 0; k < images.size(); ++k) write_png(images[k], dir / "views" / (std::to_string(k) + ".png"));
        (i < config.train_objects ? split.train : split.test).push_back(id);
        emit(log, "object " + id + ": " + std::to_string(obj.parts.size()) + " parts, " +
                      std::to_string(obj.points.size()) + " samples, " + std::to_string(cams.size()) + " views");
    }
    json sj{{"train", split.train}, {"test", split.test}, {"settings", dataset_settings(config)}};
    write_text(root / "split.json", sj.dump(2));
    return split;
}

DatasetSplit read_split(const fs::path& root) {
    const fs::path path = root / "split.json";
    if (!fs::exists(path)) throw Error(ErrorCode::IoError, "no dataset at " + root.string() + " (run gen-data)");
    const json j = parse_json(path);
    DatasetSplit split;
    split.train = j.at("train").get<std::vector<std::string>>();
    split.test = j.at("test").get<std::vector<std::string>>();
    return split;
}

DatasetSplit read_split(const fs::path& root, const TrainConfig& config) {
    DatasetSplit split = read_split(root);
    const json j = parse_json(root / "split.json");
    if (j.at("settings") != dataset_settings(config)) {
        throw Error(ErrorCode::ConfigError, "dataset at " + root.string() + " was generated with different settings");
    }
    return split;
}

SyntheticObject load_object(const fs::path& root, const std::string& id) {
    return object_from_spec_json(read_text(object_dir(root, id) / "spec"));
}

std::vector<CameraSpec> load_cameras(const fs::path& root, const std::string& id) {
    const json j = parse_json(object_dir(root, id) / "cams");
    std::vector<CameraSpec> cams;
    try {
        for (const auto& c : j) cams.push_back(camera_from_json(c));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, "cams of " + id + ": " + e.what());
    }
    return cams;
}

std::vector<View> load_views(const fs::path& root, const std::string& id) {
    std::vector<View> views;
    const auto cams = load_cameras(root, id);
    for (std::size_t k = 0; k < cams.size(); ++k) {
        views.push_back({cams[k].camera(), read_png(object_dir(root, id) / "views" / (std::to_string(k) + ".png"))});
    }
    return views;
}

GaussianSet load_label(const fs::path& root, const std::string& id) {
    const fs::path path = root / "labels" / (id + ".ply");
    if (!fs::exists(path)) throw Error(ErrorCode::IoError, "missing label " + path.string() + " (run fit-labels)");
    return import_ply(path);
}

std::vector<LabelSummary> fit_labels(const TrainConfig& config, const fs::path& root, bool force, const LogFn& log) {
    config.validate();
    const DatasetSplit split = read_split(root, config);
    const fs::path manifest_path = root / "labels" / "manifest.json";
    json manifest{{"settings", label_settings(config)}, {"labels", json::object()}};
    if (!force && fs::exists(manifest_path)) {
        json old = parse_json(manifest_path);
        if (old.value("settings", json()) == label_settings(config)) manifest = old;
    }
    std::vector<LabelSummary> out;
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        const std::string& id = split.train[i];
        const fs::path ply = root / "labels" / (id + ".ply");
        LabelSummary s;
        s.id = id;
        if (manifest["labels"].contains(id) && fs::exists(ply)) {
            const json& e = manifest["labels"][id];
            s.status = e.at("status").get<std::string>() == "converged" ? FitStatus::Converged
                       : e.at("status").get<std::string>() == "max_iterations" ? FitStatus::MaxIterations
                                                                                : FitStatus::NonConvergence;
            s.iterations = e.at("iterations").get<int>();
            s.initial_psnr = e.at("initial_psnr").get<double>();
            s.final_psnr = e.at("final_psnr").get<double>();
            s.cached = true;
            out.push_back(s);
            emit(log, "label " + id + ": cached");
            continue;
        }
        const SyntheticObject obj = load_object(root, id);
        const auto views = load_views(root, id);
        std::vector<std::size_t> order(obj.points.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(obj.seed ^ 0x1abe1ULL);
        std::shuffle(order.begin(), order.end(), rng);
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(config.model.coarse_count), order.size());
        GaussianSet init = GaussianSet::with_count(n, config.model.coarse_scale);
        for (std::size_t k = 0; k < n; ++k) {
            init.means[k] = obj.points[order[k]];
            init.colors[k] = obj.colors[order[k]].cwiseMax(0.02).cwiseMin(0.98);
            init.opacities[k] = 0.7;
        }
        FitOptions opts;
        opts.max_iterations = config.label_iterations;
        opts.lr = config.label_lr;
        opts.scale = config.model.coarse_scale;
        const FitResult r = fit_pseudo_label(views, init, opts);
        fs::create_directories(root / "labels");
        export_ply(r.set, ply);
        s.status = r.status;
        s.iterations = r.iterations;
        s.initial_psnr = r.initial_psnr;
        s.final_psnr = r.final_psnr;
        manifest["labels"][id] = {{"status", fit_status_name(r.status)},
                                  {"iterations", r.iterations},
                                  {"initial_psnr", r.initial_psnr},
                                  {"final_psnr", r.final_psnr},
                                  {"initial_loss", r.initial_loss},
                                  {"final_loss", r.final_loss}};
        write_text(manifest_path, manifest.dump(2));
        char buf[160];
        std::snprintf(buf, sizeof buf, "label %s: %s after %d iterations, psnr %.2f -> %.2f dB", id.c_str(),
                      fit_status_name(r.status), r.iterations, r.initial_psnr, r.final_psnr);
        emit(log, buf);
        out.push_back(s);
    }
    fs::create_directories(root / "labels");
    write_text(manifest_path, manifest.dump(2));
    return out;
}

DatasetSplit ensure_dataset(const TrainConfig& config, const fs::path& root, const LogFn& log) {
    if (!fs::exists(root / "split.json")) {
        emit(log, "generating dataset at " + root.string());
        generate_dataset(config, root, log);
    }
    const DatasetSplit split = read_split(root, config);
    fit_labels(config, root, false, log);
    return split;
}

}  // namespace agg
