#include "agg/nn/param_store.hpp"

#include "agg/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace agg::nn {

Tensor ParamStore::add(const std::string& name, Shape shape, std::vector<double> init) {
    if (index_.count(name)) throw Error(ErrorCode::InvalidArgument, "duplicate parameter " + name);
    Tensor t = Tensor::from_data(std::move(shape), std::move(init), true);
    Entry e;
    e.name = name;
    e.value = t;
    e.m.assign(static_cast<std::size_t>(t.numel()), 0.0);
    e.v.assign(static_cast<std::size_t>(t.numel()), 0.0);
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
    return t;
}

Tensor ParamStore::zeros(const std::string& name, Shape shape) { return constant(name, std::move(shape), 0.0); }

Tensor ParamStore::constant(const std::string& name, Shape shape, double value) {
    const auto n = shape_numel(shape);
    return add(name, std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor ParamStore::xavier(const std::string& name, Shape shape, std::int64_t fan_in, std::int64_t fan_out,
                          double gain) {
    const double a = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    std::vector<double> init(static_cast<std::size_t>(shape_numel(shape)));
    for (double& v : init) v = dist(rng_);
    return add(name, std::move(shape), std::move(init));
}

Tensor ParamStore::normal(const std::string& name, Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> init(static_cast<std::size_t>(shape_numel(shape)));
    for (double& v : init) v = dist(rng_);
    return add(name, std::move(shape), std::move(init));
}

Tensor ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "unknown parameter " + name);
    return entries_[it->second].value;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "unknown parameter " + name);
    return entries_[it->second];
}

std::int64_t ParamStore::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
}

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
    for (auto& e : entries_) {
        if (e.name.starts_with(prefix)) {
            e.value.set_requires_grad(trainable);
            if (!trainable) e.value.clear_grad();
        }
    }
}

void ParamStore::set_lr_scale(const std::string& prefix, double scale) {
    for (auto& e : entries_) {
        if (e.name.starts_with(prefix)) e.lr_scale = scale;
    }
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.value.clear_grad();
}

void ParamStore::reset_optimizer() {
    for (auto& e : entries_) {
        std::fill(e.m.begin(), e.m.end(), 0.0);
        std::fill(e.v.begin(), e.v.end(), 0.0);
    }
    step_ = 0;
}

void ParamStore::adam_step(double lr, const AdamOptions& o) {
    for (auto& e : entries_) {
        if (e.value.requires_grad() && !e.value.has_grad() && e.value.numel() > 0) {
            throw Error(ErrorCode::MissingGradient, "parameter " + e.name + " has no gradient");
        }
    }
    ++step_;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step_));
    for (auto& e : entries_) {
        if (!e.value.requires_grad()) continue;
        auto x = e.value.mutable_data();
        auto g = e.value.grad();
        const double rate = lr * e.lr_scale;
        for (std::size_t i = 0; i < x.size(); ++i) {
            e.m[i] = o.beta1 * e.m[i] + (1.0 - o.beta1) * g[i];
            e.v[i] = o.beta2 * e.v[i] + (1.0 - o.beta2) * g[i] * g[i];
            const double mh = e.m[i] / c1;
            const double vh = e.v[i] / c2;
            x[i] -= rate * mh / (std::sqrt(vh) + o.eps);
        }
        e.value.clear_grad();
    }
}

void backward(const Tensor& loss, ParamStore& store) {
    backward(loss);
    for (auto& e : store.entries()) {
        if (e.value.requires_grad()) e.value.mutable_grad();
    }
}

namespace {

constexpr char kMagic[8] = {'A', 'G', 'G', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_doubles(std::ofstream& out, const double* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* p, std::size_t n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw Error(ErrorCode::CheckpointMismatch, "checkpoint payload truncated");
}

nlohmann::json read_manifest(std::ifstream& in, const std::filesystem::path& path) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
        throw Error(ErrorCode::CheckpointMismatch, "not a checkpoint: " + path.string());
    }
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (1u << 30)) throw Error(ErrorCode::CheckpointMismatch, "bad manifest length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw Error(ErrorCode::CheckpointMismatch, "manifest truncated");
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CheckpointMismatch, std::string("manifest: ") + e.what());
    }
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path, const std::string& meta) {
    nlohmann::json manifest;
    manifest["format"] = 1;
    manifest["dtype"] = "f64le";
    manifest["step"] = store.step();
    manifest["meta"] = nlohmann::json::parse(meta);
    auto& tensors = manifest["tensors"] = nlohmann::json::array();
    for (const auto& e : store.entries()) {
        tensors.push_back({{"name", e.name}, {"shape", e.value.shape()}});
    }
    const std::string text = manifest.dump();
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
        out.write(kMagic, 8);
        const std::uint64_t len = text.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(len));
        for (const auto& e : store.entries()) {
            write_doubles(out, e.value.data().data(), e.m.size());
            write_doubles(out, e.m.data(), e.m.size());
            write_doubles(out, e.v.data(), e.v.size());
        }
        if (!out) throw Error(ErrorCode::IoError, "write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::string load_checkpoint(ParamStore& store, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    const auto manifest = read_manifest(in, path);
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != store.entries().size()) {
        throw Error(ErrorCode::CheckpointMismatch, "checkpoint has " + std::to_string(tensors.size()) +
                                                       " tensors, model has " +
                                                       std::to_string(store.entries().size()));
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& e = store.entries()[i];
        const auto name = tensors[i].at("name").get<std::string>();
        const auto shape = tensors[i].at("shape").get<Shape>();
        if (name != e.name || shape != e.value.shape()) {
            throw Error(ErrorCode::CheckpointMismatch, "tensor " + std::to_string(i) + " is " + name +
                                                           shape_string(shape) + ", model expects " + e.name +
                                                           shape_string(e.value.shape()));
        }
    }
    for (auto& e : store.entries()) {
        auto x = e.value.mutable_data();
        read_doubles(in, x.data(), x.size());
        read_doubles(in, e.m.data(), e.m.size());
        read_doubles(in, e.v.data(), e.v.size());
        e.value.clear_grad();
    }
    store.set_step(manifest.at("step").get<std::int64_t>());
    return manifest.at("meta").dump();
}

std::string read_checkpoint_meta(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    return read_manifest(in, path).at("meta").dump();
}

}  // namespace agg::nn
