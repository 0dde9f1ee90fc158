#pragma once

#include <transplat/cloud.hpp>
#include <transplat/errors.hpp>
#include <transplat/geometry.hpp>
#include <transplat/image.hpp>
#include <transplat/synth.hpp>

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace transplat {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Raw file helpers

inline std::vector<char> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path.string() + "' for reading");
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("write to '" + path.string() + "' failed");
}

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    out.append(buf, sizeof(T));
}

template <class T>
T get_le(const char* p, bool big_endian_source = false) {
    char buf[sizeof(T)];
    std::memcpy(buf, p, sizeof(T));
    const bool swap = big_endian_source != (std::endian::native == std::endian::big);
    if (swap) std::reverse(buf, buf + sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

inline void warn(std::vector<std::string>* sink, const std::string& msg) {
    if (sink) {
        sink->push_back(msg);
    } else {
        std::cerr << "warning: " << msg << "\n";
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// PLY

inline std::vector<std::string> ply_property_names(const ParameterLayout& layout) {
    std::vector<std::string> names{"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"};
    const int rest_rgb = (sh_coeff_count(layout.sh_degree_rgb) - 1) * 3;
    for (int i = 0; i < rest_rgb; ++i) names.push_back("f_rest_" + std::to_string(i));
    names.push_back("opacity");
    for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
    for (int c = 0; c < layout.surf_channels; ++c) names.push_back("surf_dc_" + std::to_string(c));
    const int rest_surf = (sh_coeff_count(layout.sh_degree_surf) - 1) * layout.surf_channels;
    for (int i = 0; i < rest_surf; ++i) names.push_back("surf_rest_" + std::to_string(i));
    return names;
}

namespace detail {

/// Writes/reads SH rows in the PLY convention: DC per channel, then the
/// remaining coefficients channel-major.
inline void sh_row_to_ply(std::span<const double> row, int degree, int channels, std::vector<double>& dc,
                          std::vector<double>& rest) {
    const int k_count = sh_coeff_count(degree);
    for (int c = 0; c < channels; ++c) dc.push_back(row[static_cast<std::size_t>(c)]);
    for (int c = 0; c < channels; ++c) {
        for (int k = 1; k < k_count; ++k) rest.push_back(row[static_cast<std::size_t>(k * channels + c)]);
    }
}

} // namespace detail

inline std::string encode_ply(const GaussianCloud& cloud) {
    const ParameterLayout& layout = cloud.layout();
    const auto names = ply_property_names(layout);
    std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(cloud.size()) + "\n";
    for (const auto& n : names) out += "property float " + n + "\n";
    out += "end_header\n";
    std::vector<double> rgb_dc, rgb_rest, surf_dc, surf_rest;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        rgb_dc.clear();
        rgb_rest.clear();
        surf_dc.clear();
        surf_rest.clear();
        detail::sh_row_to_ply(cloud.sh_rgb(i), layout.sh_degree_rgb, 3, rgb_dc, rgb_rest);
        detail::sh_row_to_ply(cloud.sh_surf(i), layout.sh_degree_surf, layout.surf_channels, surf_dc, surf_rest);
        auto put = [&](double v) { detail::put_le(out, static_cast<float>(v)); };
        for (double v : cloud.row(ParamGroup::position, i)) put(v);
        for (double v : rgb_dc) put(v);
        for (double v : rgb_rest) put(v);
        put(cloud.opacity_logit(i));
        for (double v : cloud.row(ParamGroup::log_scale, i)) put(v);
        for (double v : cloud.row(ParamGroup::rotation, i)) put(v);
        for (double v : surf_dc) put(v);
        for (double v : surf_rest) put(v);
    }
    return out;
}

inline void write_ply(const GaussianCloud& cloud, const fs::path& path) { write_file_bytes(path, encode_ply(cloud)); }

namespace detail {

struct PlyProperty {
    std::string name;
    std::string type;
    std::size_t size = 0;
    std::size_t offset = 0; // within the vertex record
};

inline std::size_t ply_type_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    return 0;
}

inline double ply_read_scalar(const char* p, const std::string& t) {
    if (t == "float" || t == "float32") return get_le<float>(p);
    if (t == "double" || t == "float64") return get_le<double>(p);
    if (t == "char" || t == "int8") return get_le<std::int8_t>(p);
    if (t == "uchar" || t == "uint8") return get_le<std::uint8_t>(p);
    if (t == "short" || t == "int16") return get_le<std::int16_t>(p);
    if (t == "ushort" || t == "uint16") return get_le<std::uint16_t>(p);
    if (t == "int" || t == "int32") return get_le<std::int32_t>(p);
    return get_le<std::uint32_t>(p);
}

/// Counts properties named prefix0, prefix1, ... and checks there are no gaps.
inline int count_indexed(const std::vector<PlyProperty>& props, const std::string& prefix, std::size_t header_end) {
    int n = 0;
    for (const auto& p : props) {
        if (p.name.rfind(prefix, 0) == 0) ++n;
    }
    for (int i = 0; i < n; ++i) {
        const std::string want = prefix + std::to_string(i);
        if (std::none_of(props.begin(), props.end(), [&](const auto& p) { return p.name == want; })) {
            throw ParseError("ply: property '" + want + "' missing from the " + prefix + "* sequence", header_end);
        }
    }
    return n;
}

inline int degree_from_rest(int rest, int channels, const std::string& what, std::size_t offset) {
    if (rest % channels != 0) {
        throw ParseError("ply: " + what + " count " + std::to_string(rest) + " is not a multiple of " +
                             std::to_string(channels),
                         offset);
    }
    const int k = rest / channels + 1;
    for (int d = 0; d <= kMaxShDegree; ++d) {
        if (sh_coeff_count(d) == k) return d;
    }
    throw ParseError("ply: " + what + " count " + std::to_string(rest) + " matches no SH degree up to 3", offset);
}

} // namespace detail

/// Parses a binary little-endian PLY. Extra vertex properties are ignored;
/// files without surf_* fields load with a zero embedding (3 channels,
/// degree 0) and a warning.
inline GaussianCloud decode_ply(const std::vector<char>& bytes, std::vector<std::string>* warnings = nullptr) {
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const std::size_t start = pos;
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        if (pos >= bytes.size()) throw ParseError("ply: header is not terminated by end_header", start);
        std::string line(bytes.data() + start, pos - start);
        ++pos;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    if (next_line() != "ply") throw ParseError("ply: missing 'ply' magic", 0);
    std::size_t vertex_count = 0;
    bool have_format = false, in_vertex = false, seen_vertex = false, past_vertex = false;
    std::vector<detail::PlyProperty> props;
    std::size_t record = 0;
    for (;;) {
        const std::size_t line_start = pos;
        const std::string line = next_line();
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "end_header") break;
        if (word == "comment" || word == "obj_info" || word.empty()) continue;
        if (word == "format") {
            std::string fmt, ver;
            ls >> fmt >> ver;
            if (fmt != "binary_little_endian") {
                throw ParseError("ply: unsupported format '" + fmt + "' (only binary_little_endian)", line_start);
            }
            have_format = true;
        } else if (word == "element") {
            std::string name;
            long long count = -1;
            ls >> name >> count;
            if (!ls || count < 0) throw ParseError("ply: malformed element line '" + line + "'", line_start);
            if (name == "vertex") {
                if (seen_vertex) throw ParseError("ply: duplicate vertex element", line_start);
                if (!props.empty() || past_vertex) throw ParseError("ply: vertex must be the first element", line_start);
                seen_vertex = in_vertex = true;
                vertex_count = static_cast<std::size_t>(count);
            } else {
                if (!seen_vertex) throw ParseError("ply: vertex must be the first element", line_start);
                in_vertex = false;
                past_vertex = true;
            }
        } else if (word == "property") {
            std::string type, name;
            ls >> type >> name;
            if (!in_vertex) {
                if (!seen_vertex) throw ParseError("ply: property before any element", line_start);
                continue;
            }
            if (type == "list") throw ParseError("ply: list properties are not supported on vertices", line_start);
            const std::size_t sz = detail::ply_type_size(type);
            if (sz == 0 || name.empty()) throw ParseError("ply: bad property line '" + line + "'", line_start);
            if (std::any_of(props.begin(), props.end(), [&](const auto& p) { return p.name == name; })) {
                throw ParseError("ply: duplicate property '" + name + "'", line_start);
            }
            props.push_back({name, type, sz, record});
            record += sz;
        } else {
            throw ParseError("ply: unexpected header keyword '" + word + "'", line_start);
        }
    }
    const std::size_t header_end = pos;
    if (!have_format) throw ParseError("ply: missing format line", header_end);
    if (!seen_vertex) throw ParseError("ply: missing vertex element", header_end);

    auto find = [&](const std::string& name) -> const detail::PlyProperty* {
        for (const auto& p : props) {
            if (p.name == name) return &p;
        }
        return nullptr;
    };
    for (const char* req : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
                            "rot_0", "rot_1", "rot_2", "rot_3"}) {
        if (!find(req)) throw ParseError(std::string("ply: required property '") + req + "' missing", header_end);
    }
    const int rgb_rest = detail::count_indexed(props, "f_rest_", header_end);
    const int surf_dc = detail::count_indexed(props, "surf_dc_", header_end);
    const int surf_rest = detail::count_indexed(props, "surf_rest_", header_end);

    ParameterLayout layout;
    layout.sh_degree_rgb = detail::degree_from_rest(rgb_rest, 3, "f_rest_*", header_end);
    const bool has_surf = surf_dc > 0;
    if (has_surf) {
        layout.surf_channels = surf_dc;
        layout.sh_degree_surf = detail::degree_from_rest(surf_rest, surf_dc, "surf_rest_*", header_end);
    } else {
        if (surf_rest > 0) throw ParseError("ply: surf_rest_* present without surf_dc_*", header_end);
        layout.surf_channels = 3;
        layout.sh_degree_surf = 0;
        detail::warn(warnings, "ply has no surf_* properties; surface embedding initialized to zero");
    }

    const std::size_t needed = header_end + vertex_count * record;
    if (bytes.size() < needed) {
        const std::size_t complete = record ? (bytes.size() - header_end) / record : 0;
        throw ParseError("ply: payload truncated after " + std::to_string(complete) + " of " +
                             std::to_string(vertex_count) + " vertices",
                         bytes.size());
    }

    GaussianCloud cloud(layout, vertex_count);
    auto idx = [&](const std::string& name) { return find(name); };
    std::vector<const detail::PlyProperty*> p_pos{idx("x"), idx("y"), idx("z")};
    std::vector<const detail::PlyProperty*> p_scale{idx("scale_0"), idx("scale_1"), idx("scale_2")};
    std::vector<const detail::PlyProperty*> p_rot{idx("rot_0"), idx("rot_1"), idx("rot_2"), idx("rot_3")};
    const detail::PlyProperty* p_op = idx("opacity");
    const int k_rgb = sh_coeff_count(layout.sh_degree_rgb);
    const int k_surf = sh_coeff_count(layout.sh_degree_surf);
    std::vector<const detail::PlyProperty*> p_rgb(static_cast<std::size_t>(k_rgb * 3));
    for (int c = 0; c < 3; ++c) {
        p_rgb[static_cast<std::size_t>(c)] = idx("f_dc_" + std::to_string(c));
        for (int k = 1; k < k_rgb; ++k) {
            p_rgb[static_cast<std::size_t>(k * 3 + c)] = idx("f_rest_" + std::to_string(c * (k_rgb - 1) + k - 1));
        }
    }
    const int cs = layout.surf_channels;
    std::vector<const detail::PlyProperty*> p_surf;
    if (has_surf) {
        p_surf.resize(static_cast<std::size_t>(k_surf * cs));
        for (int c = 0; c < cs; ++c) {
            p_surf[static_cast<std::size_t>(c)] = idx("surf_dc_" + std::to_string(c));
            for (int k = 1; k < k_surf; ++k) {
                p_surf[static_cast<std::size_t>(k * cs + c)] =
                    idx("surf_rest_" + std::to_string(c * (k_surf - 1) + k - 1));
            }
        }
    }

    for (std::size_t i = 0; i < vertex_count; ++i) {
        const char* rec = bytes.data() + header_end + i * record;
        auto get = [&](const detail::PlyProperty* p) { return detail::ply_read_scalar(rec + p->offset, p->type); };
        auto fill = [&](ParamGroup g, const std::vector<const detail::PlyProperty*>& ps) {
            auto row = cloud.row(g, i);
            for (std::size_t k = 0; k < ps.size(); ++k) row[k] = get(ps[k]);
        };
        fill(ParamGroup::position, p_pos);
        fill(ParamGroup::log_scale, p_scale);
        fill(ParamGroup::rotation, p_rot);
        fill(ParamGroup::sh_rgb, p_rgb);
        if (has_surf) fill(ParamGroup::sh_surf, p_surf);
        cloud.set_opacity_logit(i, get(p_op));
    }
    return cloud;
}

inline GaussianCloud read_ply(const fs::path& path, std::vector<std::string>* warnings = nullptr) {
    return decode_ply(read_file_bytes(path), warnings);
}

// ---------------------------------------------------------------------------
// PFM depth maps

inline std::string encode_pfm(const Image& depth) {
    if (depth.channels != 1) throw ValidationError("pfm: depth map must have one channel");
    std::string out = "Pf\n" + std::to_string(depth.width) + " " + std::to_string(depth.height) + "\n-1.0\n";
    out.reserve(out.size() + depth.pixel_count() * 4);
    for (int y = depth.height - 1; y >= 0; --y) {
        for (int x = 0; x < depth.width; ++x) detail::put_le(out, static_cast<float>(depth.at(x, y)));
    }
    return out;
}

inline Image decode_pfm(const std::vector<char>& bytes) {
    std::size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw ParseError("pfm: truncated header", start);
        return std::string(bytes.data() + start, pos - start);
    };
    const std::string magic = token();
    if (magic != "Pf") throw ParseError("pfm: expected grayscale magic 'Pf', found '" + magic + "'", 0);
    std::size_t at = pos;
    int w = 0, h = 0;
    double scale = 0.0;
    try {
        w = std::stoi(token());
        at = pos;
        h = std::stoi(token());
        at = pos;
        scale = std::stod(token());
    } catch (const std::logic_error&) {
        throw ParseError("pfm: malformed dimension or scale field", at);
    }
    if (w <= 0 || h <= 0) throw ParseError("pfm: non-positive dimensions", at);
    if (scale == 0.0) throw ParseError("pfm: zero scale field", pos);
    ++pos; // single whitespace byte after the scale
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 4;
    if (bytes.size() - pos != need) {
        throw ParseError("pfm: payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                             std::to_string(need) + " for " + std::to_string(w) + "x" + std::to_string(h),
                         pos);
    }
    const bool big = scale > 0.0;
    Image out(w, h, 1);
    const char* p = bytes.data() + pos;
    for (int y = h - 1; y >= 0; --y) {
        for (int x = 0; x < w; ++x, p += 4) out.at(x, y) = detail::get_le<float>(p, big);
    }
    return out;
}

inline void write_pfm(const Image& depth, const fs::path& path) { write_file_bytes(path, encode_pfm(depth)); }
inline Image read_pfm(const fs::path& path) { return decode_pfm(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// PNG (8 bit). Values are clamped to [0, 1] and rounded to the nearest level.

inline std::uint8_t quantize_unit(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void write_png(const Image& img, const fs::path& path) {
    png_image pi;
    std::memset(&pi, 0, sizeof(pi));
    pi.version = PNG_IMAGE_VERSION;
    pi.width = static_cast<png_uint_32>(img.width);
    pi.height = static_cast<png_uint_32>(img.height);
    switch (img.channels) {
    case 1: pi.format = PNG_FORMAT_GRAY; break;
    case 2: pi.format = PNG_FORMAT_GA; break;
    case 3: pi.format = PNG_FORMAT_RGB; break;
    case 4: pi.format = PNG_FORMAT_RGBA; break;
    default: throw ValidationError("png: unsupported channel count " + std::to_string(img.channels));
    }
    std::vector<std::uint8_t> buf(img.data.size());
    std::transform(img.data.begin(), img.data.end(), buf.begin(), quantize_unit);
    if (!png_image_write_to_file(&pi, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
        throw ValidationError("png: cannot write '" + path.string() + "': " + pi.message);
    }
}

inline void write_png(const Mask& mask, const fs::path& path) {
    Image img(mask.width, mask.height, 1);
    for (std::size_t i = 0; i < mask.data.size(); ++i) img.data[i] = mask.data[i] ? 1.0 : 0.0;
    write_png(img, path);
}

inline Image read_png(const fs::path& path) {
    png_image pi;
    std::memset(&pi, 0, sizeof(pi));
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pi, path.string().c_str())) {
        throw ParseError("png: cannot read '" + path.string() + "': " + pi.message, 0);
    }
    pi.format &= PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA;
    const int channels = static_cast<int>(PNG_IMAGE_PIXEL_CHANNELS(pi.format));
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(pi));
    if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = pi.message;
        png_image_free(&pi);
        throw ParseError("png: corrupt data in '" + path.string() + "': " + msg, 0);
    }
    Image out(static_cast<int>(pi.width), static_cast<int>(pi.height), channels);
    for (std::size_t i = 0; i < buf.size(); ++i) out.data[i] = buf[i] / 255.0;
    return out;
}

inline Mask read_mask_png(const fs::path& path) {
    const Image img = read_png(path);
    Mask m(img.width, img.height);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        m.data[p] = img.data[p * static_cast<std::size_t>(img.channels)] > 0.5 ? 1 : 0;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Raw planar fp32 images: "TSF1", uint32 width, height, channels, then one
// row-major plane per channel.

inline std::string encode_raw_planar(const Image& img) {
    std::string out = "TSF1";
    detail::put_le(out, static_cast<std::uint32_t>(img.width));
    detail::put_le(out, static_cast<std::uint32_t>(img.height));
    detail::put_le(out, static_cast<std::uint32_t>(img.channels));
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) detail::put_le(out, static_cast<float>(img.at(x, y, c)));
        }
    }
    return out;
}

inline Image decode_raw_planar(const std::vector<char>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "TSF1", 4) != 0) {
        throw ParseError("raw image: missing TSF1 magic", 0);
    }
    const auto w = detail::get_le<std::uint32_t>(bytes.data() + 4);
    const auto h = detail::get_le<std::uint32_t>(bytes.data() + 8);
    const auto c = detail::get_le<std::uint32_t>(bytes.data() + 12);
    const std::size_t need = 16 + std::size_t{w} * h * c * 4;
    if (w == 0 || h == 0 || c == 0 || bytes.size() != need) {
        throw ParseError("raw image: size does not match header " + std::to_string(w) + "x" + std::to_string(h) + "x" +
                             std::to_string(c),
                         std::min(bytes.size(), need));
    }
    Image img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
    const char* p = bytes.data() + 16;
    for (int ch = 0; ch < img.channels; ++ch) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x, p += 4) img.at(x, y, ch) = detail::get_le<float>(p);
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// JSON

/// Canonical form: sorted keys, two-space indent, shortest round-trip
/// doubles, trailing newline.
inline std::string canonical_json(const json& j) { return j.dump(2) + "\n"; }

inline json read_json(const fs::path& path) {
    const std::vector<char> bytes = read_file_bytes(path);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw ParseError("json: " + path.string() + ": " + e.what(), e.byte);
    }
}

inline void write_json(const json& j, const fs::path& path) { write_file_bytes(path, canonical_json(j)); }

inline json camera_to_json(const Camera& cam) {
    const Eigen::Matrix4d m = cam.camera_to_world();
    json rows = json::array();
    for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
    return {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy},
            {"width", cam.width}, {"height", cam.height}, {"transform", rows}};
}

inline Camera camera_from_json(const json& j, const std::string& where = "camera") {
    try {
        Eigen::Matrix4d m;
        const json& t = j.at("transform");
        if (t.size() == 16) {
            for (int k = 0; k < 16; ++k) m(k / 4, k % 4) = t.at(static_cast<std::size_t>(k)).get<double>();
        } else if (t.size() == 4) {
            for (int r = 0; r < 4; ++r) {
                if (t.at(static_cast<std::size_t>(r)).size() != 4) throw ValidationError(where + ": transform row size");
                for (int c = 0; c < 4; ++c) m(r, c) = t[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
            }
        } else {
            throw ValidationError(where + ": transform must be 4x4 (nested rows or 16 values)");
        }
        const Mat3 rot = m.topLeftCorner<3, 3>();
        const double err = (rot.transpose() * rot - Mat3::Identity()).cwiseAbs().maxCoeff();
        if (!(err <= 1e-6) || std::abs(rot.determinant() - 1.0) > 1e-6) {
            throw ValidationError(where + ": transform is not rigid (rotation block orthonormality error " +
                                  std::to_string(err) + ")");
        }
        if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) {
            throw ValidationError(where + ": transform bottom row must be 0 0 0 1");
        }
        Camera cam = Camera::from_camera_to_world(m, j.at("fx").get<double>(), j.at("fy").get<double>(),
                                                  j.at("cx").get<double>(), j.at("cy").get<double>(),
                                                  j.at("width").get<int>(), j.at("height").get<int>());
        if (!(cam.fx > 0.0 && cam.fy > 0.0) || cam.width < 1 || cam.height < 1) {
            throw ValidationError(where + ": intrinsics must be positive");
        }
        return cam;
    } catch (const json::exception& e) {
        throw ValidationError(where + ": " + e.what());
    }
}

inline void write_cameras(const std::vector<Camera>& cams, const fs::path& path) {
    json arr = json::array();
    for (const auto& c : cams) arr.push_back(camera_to_json(c));
    write_json(arr, path);
}

inline std::vector<Camera> read_cameras(const fs::path& path) {
    const json j = read_json(path);
    if (!j.is_array()) throw ValidationError("cameras: '" + path.string() + "' must hold a JSON array");
    std::vector<Camera> cams;
    for (std::size_t i = 0; i < j.size(); ++i) cams.push_back(camera_from_json(j[i], "camera " + std::to_string(i)));
    return cams;
}

// Scene specs

inline json vec_to_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

inline Vec3 vec_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw ValidationError("expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json scene_to_json(const SceneSpec& s) {
    json prims = json::array();
    for (const auto& p : s.primitives) {
        prims.push_back({{"shape", shape_name(p.shape)},
                         {"center", vec_to_json(p.center)},
                         {"rotation", {p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z}},
                         {"size", vec_to_json(p.size)},
                         {"material",
                          {{"type", p.material.transparent ? "transparent" : "opaque"},
                           {"color", vec_to_json(p.material.color)},
                           {"base_alpha", p.material.base_alpha}}}});
    }
    return {{"primitives", prims},
            {"floor",
             {{"enabled", s.floor.enabled},
              {"height", s.floor.height},
              {"half_extent", s.floor.half_extent},
              {"tile", s.floor.tile},
              {"color_a", vec_to_json(s.floor.color_a)},
              {"color_b", vec_to_json(s.floor.color_b)}}},
            {"orbit",
             {{"count", s.orbit.count},
              {"radius", s.orbit.radius},
              {"height", s.orbit.height},
              {"height_wobble", s.orbit.height_wobble},
              {"wobble_cycles", s.orbit.wobble_cycles},
              {"look_at", vec_to_json(s.orbit.look_at)},
              {"fov_degrees", s.orbit.fov_degrees}}},
            {"width", s.width},
            {"height", s.height},
            {"seed", s.seed},
            {"background", vec_to_json(s.background)},
            {"light_direction", vec_to_json(s.light_direction)},
            {"ambient", s.ambient},
            {"surf_channels", s.surf_channels}};
}

/// Missing keys keep the defaults of `base`.
inline SceneSpec scene_from_json(const json& j, SceneSpec base = default_scene_spec()) {
    try {
        SceneSpec s = std::move(base);
        if (j.contains("primitives")) {
            s.primitives.clear();
            for (const auto& pj : j.at("primitives")) {
                Primitive p;
                const std::string shape = pj.value("shape", "sphere");
                if (shape == "sphere") p.shape = ShapeKind::sphere;
                else if (shape == "box") p.shape = ShapeKind::box;
                else if (shape == "cylinder") p.shape = ShapeKind::cylinder;
                else throw ValidationError("scene: unknown shape '" + shape + "'");
                if (pj.contains("center")) p.center = vec_from_json(pj["center"]);
                if (pj.contains("rotation")) {
                    const auto& r = pj["rotation"];
                    p.rotation = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(),
                                  r.at(3).get<double>()};
                }
                if (pj.contains("size")) {
                    p.size = pj["size"].is_number() ? Vec3::Constant(pj["size"].get<double>()) : vec_from_json(pj["size"]);
                }
                if (pj.contains("material")) {
                    const auto& m = pj["material"];
                    const std::string type = m.value("type", "opaque");
                    if (type != "opaque" && type != "transparent") {
                        throw ValidationError("scene: unknown material type '" + type + "'");
                    }
                    p.material.transparent = type == "transparent";
                    if (m.contains("color")) p.material.color = vec_from_json(m["color"]);
                    p.material.base_alpha = m.value("base_alpha", p.material.transparent ? 0.1 : 1.0);
                }
                s.primitives.push_back(p);
            }
        }
        if (j.contains("floor")) {
            const auto& f = j["floor"];
            s.floor.enabled = f.value("enabled", s.floor.enabled);
            s.floor.height = f.value("height", s.floor.height);
            s.floor.half_extent = f.value("half_extent", s.floor.half_extent);
            s.floor.tile = f.value("tile", s.floor.tile);
            if (f.contains("color_a")) s.floor.color_a = vec_from_json(f["color_a"]);
            if (f.contains("color_b")) s.floor.color_b = vec_from_json(f["color_b"]);
        }
        if (j.contains("orbit")) {
            const auto& o = j["orbit"];
            s.orbit.count = o.value("count", s.orbit.count);
            s.orbit.radius = o.value("radius", s.orbit.radius);
            s.orbit.height = o.value("height", s.orbit.height);
            s.orbit.height_wobble = o.value("height_wobble", s.orbit.height_wobble);
            s.orbit.wobble_cycles = o.value("wobble_cycles", s.orbit.wobble_cycles);
            if (o.contains("look_at")) s.orbit.look_at = vec_from_json(o["look_at"]);
            s.orbit.fov_degrees = o.value("fov_degrees", s.orbit.fov_degrees);
        }
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.seed = j.value("seed", s.seed);
        if (j.contains("background")) s.background = vec_from_json(j["background"]);
        if (j.contains("light_direction")) s.light_direction = vec_from_json(j["light_direction"]);
        s.ambient = j.value("ambient", s.ambient);
        s.surf_channels = j.value("surf_channels", s.surf_channels);
        return s;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scene: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Dataset layout

struct Dataset {
    std::vector<GroundTruthView> views;
    std::vector<int> train;
    std::vector<int> test;
};

inline std::string view_stem(std::size_t i) {
    std::string s = std::to_string(i);
    if (s.size() < 4) s.insert(0, 4 - s.size(), '0');
    return s;
}

inline void write_surf(const Image& surf, const fs::path& dir, const std::string& stem) {
    if (surf.channels == 3) {
        write_png(surf, dir / (stem + ".png"));
    } else {
        write_file_bytes(dir / (stem + ".f32"), encode_raw_planar(surf));
    }
}

inline Image read_surf(const fs::path& dir, const std::string& stem) {
    if (fs::exists(dir / (stem + ".png"))) return read_png(dir / (stem + ".png"));
    return decode_raw_planar(read_file_bytes(dir / (stem + ".f32")));
}

inline void write_dataset(const fs::path& root, const Dataset& ds, const json& extra = json::object()) {
    for (const char* sub : {"rgb", "surf", "depth_gt", "mask"}) fs::create_directories(root / sub);
    std::vector<Camera> cams;
    for (std::size_t i = 0; i < ds.views.size(); ++i) {
        const auto& v = ds.views[i];
        const std::string stem = view_stem(i);
        cams.push_back(v.camera);
        write_png(v.rgb, root / "rgb" / (stem + ".png"));
        write_surf(v.surf, root / "surf", stem);
        write_pfm(v.depth, root / "depth_gt" / (stem + ".pfm"));
        write_png(v.object_mask, root / "mask" / (stem + ".png"));
    }
    write_cameras(cams, root / "cameras.json");
    write_json({{"train", ds.train}, {"test", ds.test}}, root / "split.json");
    if (!extra.empty()) write_json(extra, root / "scene.json");
}

/// Loads a dataset directory, collecting every problem before failing.
inline Dataset read_dataset(const fs::path& root) {
    if (!fs::is_directory(root)) throw ValidationError("dataset: '" + root.string() + "' is not a directory");
    std::vector<std::string> problems;
    std::vector<Camera> cams;
    try {
        cams = read_cameras(root / "cameras.json");
    } catch (const Error& e) {
        throw ValidationError(std::string("dataset: ") + e.what());
    }
    Dataset ds;
    ds.views.resize(cams.size());
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const std::string stem = view_stem(i);
        GroundTruthView& v = ds.views[i];
        v.camera = cams[i];
        auto attempt = [&](const char* what, auto&& fn) {
            try {
                fn();
            } catch (const Error& e) {
                problems.push_back("view " + stem + " " + what + ": " + e.what());
            }
        };
        attempt("rgb", [&] { v.rgb = read_png(root / "rgb" / (stem + ".png")); });
        attempt("surf", [&] { v.surf = read_surf(root / "surf", stem); });
        attempt("depth", [&] { v.depth = read_pfm(root / "depth_gt" / (stem + ".pfm")); });
        attempt("mask", [&] { v.object_mask = read_mask_png(root / "mask" / (stem + ".png")); });
        const int w = cams[i].width, h = cams[i].height;
        auto check = [&](const char* what, int iw, int ih, bool loaded) {
            if (loaded && (iw != w || ih != h)) {
                problems.push_back("view " + stem + " " + what + " is " + std::to_string(iw) + "x" +
                                   std::to_string(ih) + ", camera says " + std::to_string(w) + "x" + std::to_string(h));
            }
        };
        check("rgb", v.rgb.width, v.rgb.height, !v.rgb.data.empty());
        check("surf", v.surf.width, v.surf.height, !v.surf.data.empty());
        check("depth", v.depth.width, v.depth.height, !v.depth.data.empty());
        check("mask", v.object_mask.width, v.object_mask.height, !v.object_mask.data.empty());
        if (!v.rgb.data.empty() && v.rgb.channels != 3) problems.push_back("view " + stem + " rgb must have 3 channels");
        if (i > 0 && !v.surf.data.empty() && !ds.views[0].surf.data.empty() &&
            v.surf.channels != ds.views[0].surf.channels) {
            problems.push_back("view " + stem + " surf channel count differs from view 0000");
        }
    }
    if (fs::exists(root / "split.json")) {
        try {
            const json s = read_json(root / "split.json");
            ds.train = s.at("train").get<std::vector<int>>();
            ds.test = s.at("test").get<std::vector<int>>();
        } catch (const std::exception& e) {
            problems.push_back(std::string("split.json: ") + e.what());
        }
    } else {
        ds.train = train_view_indices(static_cast<int>(cams.size()));
        ds.test = test_view_indices(static_cast<int>(cams.size()));
    }
    for (int idx : ds.train) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= cams.size()) {
            problems.push_back("split: train index " + std::to_string(idx) + " out of range");
        }
    }
    for (int idx : ds.test) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= cams.size()) {
            problems.push_back("split: test index " + std::to_string(idx) + " out of range");
        }
    }
    if (cams.empty()) problems.push_back("cameras.json lists no views");
    if (!problems.empty()) {
        std::string msg = "dataset '" + root.string() + "' failed validation (" + std::to_string(problems.size()) +
                          " problem" + (problems.size() == 1 ? "" : "s") + "):";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }
    return ds;
}

} // namespace transplat
