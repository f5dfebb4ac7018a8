#include "agg/pipeline/config.hpp"

#include "agg/error.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>
#include <variant>

namespace agg {

namespace {

using Slot = std::variant<int*, double*, bool*, std::uint64_t*>;

std::vector<std::pair<std::string, Slot>> model_slots(ModelConfig& m) {
    return {
        {"image_size", &m.image_size},
        {"patch_size", &m.patch_size},
        {"dim", &m.dim},
        {"heads", &m.heads},
        {"encoder_blocks", &m.encoder_blocks},
        {"freeze_encoder", &m.freeze_encoder},
        {"coarse_count", &m.coarse_count},
        {"geometry_blocks", &m.geometry_blocks},
        {"texture_field", &m.texture_field},
        {"texture_blocks", &m.texture_blocks},
        {"plane_resolution", &m.plane_resolution},
        {"plane_features", &m.plane_features},
        {"plane_patch", &m.plane_patch},
        {"decoder_hidden", &m.decoder_hidden},
        {"initial_opacity", &m.initial_opacity},
        {"coarse_scale", &m.coarse_scale},
        {"fine_scale", &m.fine_scale},
        {"ratio", &m.ratio},
        {"sr_channels", &m.sr_channels},
        {"voxel_resolution", &m.voxel_resolution},
        {"offset_bound", &m.offset_bound},
        {"model_seed", &m.seed},
    };
}

std::vector<std::pair<std::string, Slot>> slots(TrainConfig& c) {
    auto s = model_slots(c.model);
    std::vector<std::pair<std::string, Slot>> rest{
        {"train_objects", &c.train_objects},
        {"test_objects", &c.test_objects},
        {"stored_views", &c.stored_views},
        {"data_seed", &c.data_seed},
        {"elevation_min", &c.elevation_min},
        {"elevation_max", &c.elevation_max},
        {"camera_radius", &c.camera_radius},
        {"fov", &c.fov},
        {"render_size", &c.render_size},
        {"views_per_iteration", &c.views_per_iteration},
        {"perceptual_weight", &c.perceptual_weight},
        {"chamfer_start", &c.chamfer_start},
        {"chamfer_end", &c.chamfer_end},
        {"render_start", &c.render_start},
        {"render_end", &c.render_end},
        {"coarse_epochs", &c.coarse_epochs},
        {"sr_epochs", &c.sr_epochs},
        {"joint_epochs", &c.joint_epochs},
        {"iterations_per_epoch", &c.iterations_per_epoch},
        {"warmup_epochs", &c.warmup_epochs},
        {"lr_max", &c.lr_max},
        {"sr_lr", &c.sr_lr},
        {"joint_lr", &c.joint_lr},
        {"label_iterations", &c.label_iterations},
        {"label_lr", &c.label_lr},
        {"seed", &c.seed},
    };
    s.insert(s.end(), rest.begin(), rest.end());
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto* end = text.data() + text.size();
    auto [p, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || p != end) throw Error(ErrorCode::ConfigError, "bad value for " + key + ": '" + text + "'");
    return v;
}

void assign(const std::string& key, const Slot& slot, const std::string& text) {
    std::visit(
        [&](auto* p) {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, bool>) {
                if (text == "true" || text == "1") {
                    *p = true;
                } else if (text == "false" || text == "0") {
                    *p = false;
                } else {
                    throw Error(ErrorCode::ConfigError, "bad boolean for " + key + ": '" + text + "'");
                }
            } else {
                *p = parse_number<T>(key, text);
            }
        },
        slot);
}

std::string format(const Slot& slot) {
    return std::visit(
        [](auto* p) -> std::string {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, bool>) {
                return *p ? "true" : "false";
            } else if constexpr (std::is_same_v<T, double>) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.17g", *p);
                return buf;
            } else {
                return std::to_string(*p);
            }
        },
        slot);
}

}  // namespace

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
    TrainConfig c;
    c.model.image_size = 256;
    c.model.patch_size = 16;
    c.model.dim = 768;
    c.model.heads = 12;
    c.model.coarse_count = 4096;
    c.model.coarse_scale = 0.03;
    c.model.fine_scale = 0.01;
    c.model.voxel_resolution = 32;
    c.render_size = 128;
    c.coarse_epochs = 10;
    c.sr_epochs = 5;
    c.joint_epochs = 3;
    c.lr_max = 1e-4;
    c.sr_lr = 1e-4;
    c.joint_lr = 1e-5;
    return c;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
    for (auto& [name, slot] : slots(*this)) {
        if (name == key) {
            assign(key, slot, trim(value));
            return;
        }
    }
    throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
}

void TrainConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::ConfigError, path.string() + ":" + std::to_string(number) + ": expected key = value");
        }
        set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

std::string TrainConfig::to_text() const {
    std::ostringstream out;
    for (auto& [name, slot] : slots(const_cast<TrainConfig&>(*this))) out << name << " = " << format(slot) << "\n";
    return out.str();
}

std::vector<std::string> TrainConfig::keys() const {
    std::vector<std::string> k;
    for (auto& [name, slot] : slots(const_cast<TrainConfig&>(*this))) k.push_back(name);
    return k;
}

void TrainConfig::validate() const {
    model.validate();
    auto positive = [](double v, const char* what) {
        if (!(v > 0)) throw Error(ErrorCode::ConfigError, std::string(what) + " must be positive");
    };
    positive(train_objects, "train_objects");
    positive(stored_views, "stored_views");
    positive(render_size, "render_size");
    positive(views_per_iteration, "views_per_iteration");
    positive(camera_radius, "camera_radius");
    positive(fov, "fov");
    positive(lr_max, "lr_max");
    positive(sr_lr, "sr_lr");
    positive(joint_lr, "joint_lr");
    positive(label_lr, "label_lr");
    if (test_objects < 0 || coarse_epochs < 0 || sr_epochs < 0 || joint_epochs < 0 || iterations_per_epoch < 0 ||
        label_iterations < 0 || warmup_epochs < 0) {
        throw Error(ErrorCode::ConfigError, "counts must be non-negative");
    }
    if (warmup_epochs > coarse_epochs && coarse_epochs > 0) {
        throw Error(ErrorCode::ConfigError, "warmup_epochs exceeds coarse_epochs");
    }
    if (elevation_min > elevation_max || elevation_min <= -90 || elevation_max >= 90) {
        throw Error(ErrorCode::ConfigError, "elevation range must lie inside (-90, 90)");
    }
    if (stored_views < 4) throw Error(ErrorCode::ConfigError, "stored_views must be >= 4 (labels are fitted to the stored views)");
    if (render_size % 4 || render_size < 16) throw Error(ErrorCode::ConfigError, "render_size must be >= 16 and a multiple of 4");
    for (double w : {perceptual_weight, chamfer_start, chamfer_end, render_start, render_end}) {
        if (w < 0) throw Error(ErrorCode::ConfigError, "loss weights must be non-negative");
    }
}

std::string model_config_json(const ModelConfig& config) {
    nlohmann::json j;
    ModelConfig copy = config;
    for (auto& [name, slot] : model_slots(copy)) {
        std::visit([&, n = name](auto* p) { j[n] = *p; }, slot);
    }
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    ModelConfig config;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CheckpointMismatch, std::string("model config: ") + e.what());
    }
    for (auto& [name, slot] : model_slots(config)) {
        if (!j.contains(name)) throw Error(ErrorCode::CheckpointMismatch, "model config lacks " + name);
        std::visit([&, n = name](auto* p) { *p = j.at(n).get<std::remove_pointer_t<decltype(p)>>(); }, slot);
    }
    return config;
}

}  // namespace agg
