#include "agg/ply.hpp"

#include "agg/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace agg {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

namespace {

enum class PropType { Float32, Float64, UInt8, Int32, UInt32, Int16, UInt16, Int8 };

struct Property {
    std::string name;
    PropType type;
};

std::size_t type_size(PropType t) {
    switch (t) {
        case PropType::Float64: return 8;
        case PropType::Float32:
        case PropType::Int32:
        case PropType::UInt32: return 4;
        case PropType::Int16:
        case PropType::UInt16: return 2;
        case PropType::UInt8:
        case PropType::Int8: return 1;
    }
    return 0;
}

std::optional<PropType> parse_type(const std::string& s) {
    if (s == "float" || s == "float32") return PropType::Float32;
    if (s == "double" || s == "float64") return PropType::Float64;
    if (s == "uchar" || s == "uint8") return PropType::UInt8;
    if (s == "char" || s == "int8") return PropType::Int8;
    if (s == "short" || s == "int16") return PropType::Int16;
    if (s == "ushort" || s == "uint16") return PropType::UInt16;
    if (s == "int" || s == "int32") return PropType::Int32;
    if (s == "uint" || s == "uint32") return PropType::UInt32;
    return std::nullopt;
}

double read_value(const char* p, PropType t) {
    switch (t) {
        case PropType::Float64: { double v; std::memcpy(&v, p, 8); return v; }
        case PropType::Float32: { float v; std::memcpy(&v, p, 4); return v; }
        case PropType::UInt8: return static_cast<unsigned char>(*p) / 255.0;
        case PropType::Int8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
        case PropType::Int16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
        case PropType::UInt16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
        case PropType::Int32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
        case PropType::UInt32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    }
    return 0.0;
}

void put_double(std::string& buf, double v) {
    char bytes[8];
    std::memcpy(bytes, &v, 8);
    buf.append(bytes, 8);
}

}  // namespace

void export_ply(const GaussianSet& set, const std::filesystem::path& path) {
    set.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    }
    std::ostringstream header;
    header << std::setprecision(17);
    header << "ply\n"
           << "format binary_little_endian 1.0\n"
           << "comment agg_scale " << set.scale << "\n"
           << "comment agg_rotation " << set.rotation.w << " " << set.rotation.x << " " << set.rotation.y << " "
           << set.rotation.z << "\n"
           << "element vertex " << set.size() << "\n";
    for (const char* name : {"x", "y", "z", "red", "green", "blue", "opacity"}) {
        header << "property double " << name << "\n";
    }
    header << "end_header\n";

    std::string body;
    body.reserve(set.size() * 7 * 8);
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (int k = 0; k < 3; ++k) put_double(body, set.means[i][k]);
        for (int k = 0; k < 3; ++k) put_double(body, set.colors[i][k]);
        put_double(body, set.opacities[i]);
    }
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) {
        throw Error(ErrorCode::IoError, "write failed for " + path.string());
    }
}

GaussianSet import_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != "ply") {
        throw Error(ErrorCode::MalformedHeader, "missing 'ply' magic");
    }

    std::optional<double> scale;
    Quat rotation{};
    std::optional<std::size_t> count;
    std::vector<Property> props;
    bool in_vertex = false;
    bool format_ok = false;
    bool ended = false;

    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian") {
                throw Error(ErrorCode::MalformedHeader, "unsupported format " + fmt);
            }
            format_ok = true;
        } else if (key == "comment") {
            std::string tag;
            ls >> tag;
            if (tag == "agg_scale") {
                double s = 0.0;
                if (!(ls >> s)) throw Error(ErrorCode::MalformedHeader, "bad agg_scale comment");
                scale = s;
            } else if (tag == "agg_rotation") {
                if (!(ls >> rotation.w >> rotation.x >> rotation.y >> rotation.z)) {
                    throw Error(ErrorCode::MalformedHeader, "bad agg_rotation comment");
                }
            }
        } else if (key == "element") {
            std::string name;
            std::size_t n = 0;
            ls >> name >> n;
            if (!ls) throw Error(ErrorCode::MalformedHeader, "bad element line");
            in_vertex = (name == "vertex");
            if (in_vertex) {
                if (count) throw Error(ErrorCode::MalformedHeader, "duplicate vertex element");
                count = n;
            } else if (!count) {
                throw Error(ErrorCode::MalformedHeader, "vertex element must come first");
            }
        } else if (key == "property") {
            std::string type_name, name;
            ls >> type_name;
            if (type_name == "list") {
                if (in_vertex) throw Error(ErrorCode::MalformedHeader, "list properties on vertex unsupported");
                continue;
            }
            ls >> name;
            if (!in_vertex) continue;
            const auto type = parse_type(type_name);
            if (!type || name.empty()) throw Error(ErrorCode::MalformedHeader, "bad property line: " + line);
            props.push_back({name, *type});
        } else if (key == "end_header") {
            ended = true;
            break;
        } else if (!key.empty() && key != "obj_info") {
            throw Error(ErrorCode::MalformedHeader, "unexpected header line: " + line);
        }
    }
    if (!ended || !format_ok || !count) {
        throw Error(ErrorCode::MalformedHeader, "incomplete header");
    }

    const std::vector<std::string> required = {"x", "y", "z", "red", "green", "blue", "opacity"};
    std::vector<std::size_t> offsets(required.size());
    std::vector<PropType> types(required.size());
    std::size_t stride = 0;
    std::vector<bool> found(required.size(), false);
    for (const auto& p : props) {
        for (std::size_t r = 0; r < required.size(); ++r) {
            if (p.name == required[r]) {
                offsets[r] = stride;
                types[r] = p.type;
                found[r] = true;
            }
        }
        stride += type_size(p.type);
    }
    for (std::size_t r = 0; r < required.size(); ++r) {
        if (!found[r]) throw Error(ErrorCode::MalformedHeader, "missing vertex property " + required[r]);
    }

    const std::size_t n = *count;
    std::vector<char> body(n * stride);
    in.read(body.data(), static_cast<std::streamsize>(body.size()));
    if (static_cast<std::size_t>(in.gcount()) != body.size()) {
        throw Error(ErrorCode::CountMismatch, "file holds fewer vertices than declared (" + std::to_string(n) + ")");
    }

    GaussianSet set;
    set.means.resize(n);
    set.colors.resize(n);
    set.opacities.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const char* row = body.data() + i * stride;
        for (int k = 0; k < 3; ++k) {
            set.means[i][k] = read_value(row + offsets[k], types[k]);
            set.colors[i][k] = read_value(row + offsets[3 + k], types[3 + k]);
        }
        set.opacities[i] = read_value(row + offsets[6], types[6]);
    }
    set.scale = scale.value_or(canonical_scale(n, 0.03));
    set.rotation = rotation;
    set.validate();
    return set;
}

}  // namespace agg
