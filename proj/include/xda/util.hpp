#pragma once
// Small shared helpers: hex rendering, whole-file IO, TSV splitting, hashing.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "xda/errors.hpp"

namespace xda {

inline std::string hex_byte(uint8_t b) {
    static const char* digits = "0123456789abcdef";
    return {digits[b >> 4], digits[b & 0xf]};
}

// "48 83 ec" style rendering used by n-gram reports and debug dumps.
inline std::string hex_tuple(const uint8_t* p, size_t n, char sep = ' ') {
    std::string out;
    for (size_t i = 0; i < n; ++i) {
        if (i) out += sep;
        out += hex_byte(p[i]);
    }
    return out;
}

inline std::string hex_tuple(const std::vector<uint8_t>& v, char sep = ' ') {
    return hex_tuple(v.data(), v.size(), sep);
}

inline int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

// Parses "48 83 ec" or "4883ec" into bytes; throws BadConfig on junk.
inline std::vector<uint8_t> parse_hex_bytes(std::string_view s) {
    std::vector<uint8_t> out;
    int hi = -1;
    for (char c : s) {
        if (c == ' ' || c == '\t') {
            if (hi >= 0) throw BadConfig("dangling hex nibble in '" + std::string(s) + "'");
            continue;
        }
        int v = hex_nibble(c);
        if (v < 0) throw BadConfig("invalid hex character '" + std::string(1, c) + "'");
        if (hi < 0) {
            hi = v;
        } else {
            out.push_back(static_cast<uint8_t>(hi << 4 | v));
            hi = -1;
        }
    }
    if (hi >= 0) throw BadConfig("odd number of hex digits in '" + std::string(s) + "'");
    return out;
}

inline std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path.string());
    std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline std::string read_file_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, const void* data, size_t n) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoFailure("short write to " + path.string());
}

inline void write_file_text(const std::filesystem::path& path, std::string_view text) {
    write_file_bytes(path, text.data(), text.size());
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    size_t start = 0;
    while (true) {
        size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> out;
    size_t start = 0;
    while (start <= text.size()) {
        size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < text.size()) out.push_back(text.substr(start));
            return out;
        }
        std::string_view line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.push_back(line);
        start = nl + 1;
    }
    return out;
}

// FNV-1a 64. Used for reporting content fingerprints (determinism checks
// compare full bytes; the hash is for human-readable logs).
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string format_f(double v, const char* fmt = "%.9g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

inline uint64_t parse_u64(std::string_view s, const char* what) {
    if (s.empty()) throw BadConfig(std::string("empty integer field for ") + what);
    uint64_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') throw BadConfig("invalid integer '" + std::string(s) + "' for " + what);
        v = v * 10 + static_cast<uint64_t>(c - '0');
    }
    return v;
}

inline double parse_f64(std::string_view s, const char* what) {
    try {
        size_t pos = 0;
        double v = std::stod(std::string(s), &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw BadConfig("invalid number '" + std::string(s) + "' for " + what);
    }
}

} // namespace xda
