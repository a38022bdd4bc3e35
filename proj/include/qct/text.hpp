#pragma once

// Small text helpers shared by the file formats: shortest round-trip number
// formatting, trimming, and `key = value` record parsing.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "qct/core.hpp"

namespace qct::text {

/// Shortest decimal that parses back to the same double ("0.8", "1", "-1e-07").
inline std::string format_number(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string format_fixed(double v, int precision)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string> split_ws(std::string_view s)
{
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    std::string tok;
    while (in >> tok)
        out.push_back(tok);
    return out;
}

inline std::optional<double> parse_double(std::string_view s)
{
    s = trim(s);
    if (s.empty())
        return std::nullopt;
    if (s.front() == '+')
        s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        return std::nullopt;
    return v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s)
{
    s = trim(s);
    if (s.empty())
        return std::nullopt;
    if (s.front() == '+')
        s.remove_prefix(1);
    Int v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        return std::nullopt;
    return v;
}

/// Ordered `key = value` lines. Blank lines and lines starting with '#' are skipped.
struct key_values {
    std::vector<std::pair<std::string, std::string>> entries;

    const std::string* find(std::string_view key) const
    {
        for (const auto& [k, v] : entries)
            if (k == key)
                return &v;
        return nullptr;
    }

    const std::string& require(std::string_view key, error_kind kind) const
    {
        if (const auto* v = find(key))
            return *v;
        throw error(kind, "missing key '" + std::string(key) + "'");
    }
};

inline key_values parse_key_values(std::istream& in, error_kind kind)
{
    key_values kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw error(kind, "line " + std::to_string(lineno) + ": expected 'key = value'");
        const auto key = trim(t.substr(0, eq));
        if (key.empty())
            throw error(kind, "line " + std::to_string(lineno) + ": empty key");
        kv.entries.emplace_back(std::string(key), std::string(trim(t.substr(eq + 1))));
    }
    return kv;
}

inline key_values read_key_values(const std::string& path, error_kind kind)
{
    std::ifstream in(path);
    if (!in)
        throw error(error_kind::io, "cannot open " + path);
    return parse_key_values(in, kind);
}

} // namespace qct::text
