#pragma once

// MetaImage (.mhd header + .raw little-endian payload) reader and writer.
//
// The writer emits exactly these keys, in order:
//   ObjectType, NDims, BinaryData, BinaryDataByteOrderMSB, DimSize,
//   ElementSpacing, Offset, ElementType, ElementDataFile
// The reader tolerates unknown keys.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "qct/core.hpp"
#include "qct/text.hpp"

namespace qct::io {

namespace fs = std::filesystem;

using any_volume = std::variant<hu_volume, label_map, density_volume>;

template <typename T>
struct element_type;
template <>
struct element_type<std::int16_t> {
    static constexpr const char* name = "MET_SHORT";
};
template <>
struct element_type<std::uint8_t> {
    static constexpr const char* name = "MET_UCHAR";
};
template <>
struct element_type<float> {
    static constexpr const char* name = "MET_FLOAT";
};

namespace detail {

template <typename T>
T byteswap_value(T v)
{
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
        std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

template <typename T>
std::vector<char> encode_le(const std::vector<T>& values)
{
    std::vector<char> out(values.size() * sizeof(T));
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        if (!values.empty())
            std::memcpy(out.data(), values.data(), out.size());
    } else {
        for (std::size_t i = 0; i < values.size(); ++i) {
            const T v = byteswap_value(values[i]);
            std::memcpy(out.data() + i * sizeof(T), &v, sizeof(T));
        }
    }
    return out;
}

template <typename T>
std::vector<T> decode_le(const std::vector<char>& bytes)
{
    std::vector<T> out(bytes.size() / sizeof(T));
    if (!out.empty())
        std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
    if constexpr (std::endian::native != std::endian::little && sizeof(T) > 1)
        for (auto& v : out)
            v = byteswap_value(v);
    return out;
}

inline std::string format_triple(double a, double b, double c)
{
    return text::format_number(a) + " " + text::format_number(b) + " " + text::format_number(c);
}

inline vec3 parse_vec3(const std::string& value, const char* key)
{
    const auto toks = text::split_ws(value);
    if (toks.size() != 3)
        throw error(error_kind::io, std::string(key) + " needs 3 values");
    vec3 v;
    double* dst[3] = {&v.x, &v.y, &v.z};
    for (int i = 0; i < 3; ++i) {
        const auto d = text::parse_double(toks[i]);
        if (!d)
            throw error(error_kind::io, std::string(key) + ": bad number '" + toks[i] + "'");
        *dst[i] = *d;
    }
    return v;
}

inline bool parse_bool(const std::string& value)
{
    if (value == "True" || value == "true" || value == "1")
        return true;
    if (value == "False" || value == "false" || value == "0")
        return false;
    throw error(error_kind::io, "bad boolean '" + value + "'");
}

inline fs::path raw_path_for(const fs::path& header)
{
    fs::path raw = header;
    raw.replace_extension(".raw");
    return raw;
}

inline std::vector<char> read_file_bytes(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw error(error_kind::io, "cannot open data file " + path.string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

} // namespace detail

struct header_info {
    image_grid grid;
    std::string element_type;
    fs::path data_file;
};

/// Parses and validates an .mhd header; does not touch the data file.
inline header_info read_header(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw error(error_kind::io, "cannot open header " + path.string());
    const auto kv = text::parse_key_values(in, error_kind::io);

    const auto require = [&](const char* key) -> const std::string& {
        return kv.require(key, error_kind::io);
    };

    if (const auto* type = kv.find("ObjectType"); type && *type != "Image")
        throw error(error_kind::io, "ObjectType must be Image");
    if (text::trim(require("NDims")) != "3")
        throw error(error_kind::io, "only NDims = 3 is supported");
    if (const auto* bin = kv.find("BinaryData"); bin && !detail::parse_bool(*bin))
        throw error(error_kind::io, "only BinaryData = True is supported");
    if (const auto* msb = kv.find("BinaryDataByteOrderMSB"); msb && detail::parse_bool(*msb))
        throw error(error_kind::io, "big-endian data is not supported");
    if (const auto* cm = kv.find("CompressedData"); cm && detail::parse_bool(*cm))
        throw error(error_kind::io, "compressed data is not supported");

    header_info info;
    const auto dims = text::split_ws(require("DimSize"));
    if (dims.size() != 3)
        throw error(error_kind::io, "DimSize needs 3 values");
    std::size_t* dst[3] = {&info.grid.dims.x, &info.grid.dims.y, &info.grid.dims.z};
    for (int i = 0; i < 3; ++i) {
        const auto d = text::parse_int<std::size_t>(dims[i]);
        if (!d || *d == 0)
            throw error(error_kind::io, "DimSize: bad value '" + dims[i] + "'");
        *dst[i] = *d;
    }
    if (const auto* sp = kv.find("ElementSpacing"))
        info.grid.spacing = detail::parse_vec3(*sp, "ElementSpacing");
    if (const auto* off = kv.find("Offset"))
        info.grid.origin = detail::parse_vec3(*off, "Offset");
    if (!info.grid.valid())
        throw error(error_kind::io, "ElementSpacing must be positive");

    info.element_type = require("ElementType");
    if (info.element_type != "MET_SHORT" && info.element_type != "MET_UCHAR" &&
        info.element_type != "MET_FLOAT")
        throw error(error_kind::io, "unsupported ElementType " + info.element_type);

    const std::string& data = require("ElementDataFile");
    if (data == "LOCAL" || data == "LIST" || data.find('%') != std::string::npos)
        throw error(error_kind::io, "only a single external data file is supported");
    info.data_file = path.parent_path() / data;
    return info;
}

namespace detail {

template <typename T>
volume<T> read_payload(const header_info& info)
{
    const auto bytes = read_file_bytes(info.data_file);
    const std::size_t expected = info.grid.voxel_count() * sizeof(T);
    if (bytes.size() != expected)
        throw error(error_kind::io, info.data_file.string() + ": expected " +
                                        std::to_string(expected) + " bytes, found " +
                                        std::to_string(bytes.size()));
    return volume<T>(info.grid, decode_le<T>(bytes));
}

} // namespace detail

/// MET_SHORT -> hu_volume, MET_UCHAR -> label_map (codes checked), MET_FLOAT -> density_volume.
inline any_volume read_volume(const fs::path& path)
{
    const auto info = read_header(path);
    if (info.element_type == "MET_SHORT")
        return detail::read_payload<std::int16_t>(info);
    if (info.element_type == "MET_UCHAR") {
        auto m = detail::read_payload<std::uint8_t>(info);
        require_label_range(m);
        return m;
    }
    return detail::read_payload<float>(info);
}

template <typename V>
V read_as(const fs::path& path)
{
    auto any = read_volume(path);
    if (auto* v = std::get_if<V>(&any))
        return std::move(*v);
    throw error(error_kind::io, path.string() + ": element type is not " +
                                    element_type<typename V::value_type>::name);
}

inline hu_volume read_hu(const fs::path& path) { return read_as<hu_volume>(path); }
inline label_map read_labels(const fs::path& path) { return read_as<label_map>(path); }
inline density_volume read_density(const fs::path& path) { return read_as<density_volume>(path); }

/// Writes `path` (.mhd) and a sibling .raw with the same stem.
template <typename T>
void write_volume(const volume<T>& v, const fs::path& path)
{
    const fs::path raw = detail::raw_path_for(path);
    const image_grid& g = v.grid();

    std::string header;
    header += "ObjectType = Image\n";
    header += "NDims = 3\n";
    header += "BinaryData = True\n";
    header += "BinaryDataByteOrderMSB = False\n";
    header += "DimSize = " + std::to_string(g.dims.x) + " " + std::to_string(g.dims.y) + " " +
              std::to_string(g.dims.z) + "\n";
    header += "ElementSpacing = " + detail::format_triple(g.spacing.x, g.spacing.y, g.spacing.z) + "\n";
    header += "Offset = " + detail::format_triple(g.origin.x, g.origin.y, g.origin.z) + "\n";
    header += std::string("ElementType = ") + element_type<T>::name + "\n";
    header += "ElementDataFile = " + raw.filename().string() + "\n";

    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw error(error_kind::io, "cannot write " + path.string());
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        if (!out)
            throw error(error_kind::io, "write failed: " + path.string());
    }
    const auto bytes = detail::encode_le(v.data());
    std::ofstream out(raw, std::ios::binary | std::ios::trunc);
    if (!out)
        throw error(error_kind::io, "cannot write " + raw.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw error(error_kind::io, "write failed: " + raw.string());
}

inline void write_volume(const any_volume& v, const fs::path& path)
{
    std::visit([&](const auto& vol) { write_volume(vol, path); }, v);
}

} // namespace qct::io
