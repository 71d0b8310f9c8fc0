#pragma once

// Little-endian byte packing shared by the binary file formats.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nf3d/types.hpp"

namespace nf3d::detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u32(out, bits);
}

inline std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | p[i];
    }
    return v;
}

inline float get_f32(const std::uint8_t* p) {
    const std::uint32_t bits = get_u32(p);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

/// Sequential reader over a byte buffer with bounds-checked reads; `what`
/// names the format in error messages.
class ByteReader {
  public:
    ByteReader(const std::vector<std::uint8_t>& bytes, std::string what)
        : bytes_(bytes), what_(std::move(what)) {}

    const std::uint8_t* take(std::size_t count) {
        if (bytes_.size() - pos_ < count) {
            throw DataError(what_ + ": truncated file");
        }
        const std::uint8_t* p = bytes_.data() + pos_;
        pos_ += count;
        return p;
    }

    std::uint8_t u8() { return *take(1); }
    std::uint16_t u16() { return get_u16(take(2)); }
    std::uint32_t u32() { return get_u32(take(4)); }
    std::uint64_t u64() { return get_u64(take(8)); }
    float f32() { return get_f32(take(4)); }

    bool exhausted() const { return pos_ == bytes_.size(); }

    void expect_exhausted() const {
        if (!exhausted()) {
            throw DataError(what_ + ": trailing bytes after payload");
        }
    }

  private:
    const std::vector<std::uint8_t>& bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

/// Writes bytes to `path` atomically (temp file then rename).
inline void write_file(const std::vector<std::uint8_t>& bytes,
                       const std::filesystem::path& path, const std::string& what) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError(what + ": cannot open " + tmp.string() + " for writing");
        }
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw DataError(what + ": short write to " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw DataError(what + ": cannot move " + tmp.string() + " into place: " +
                        ec.message());
    }
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path,
                                           const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(what + ": cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace nf3d::detail
