#pragma once

// Little-endian byte assembly shared by the VLFT, VLSC and VLCK formats.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vlscene::io {

class ByteWriter {
public:
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void magic(std::string_view m) { buf_.insert(buf_.end(), m.begin(), m.end()); }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }

    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; every failure names the byte offset and the field.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string source) : data_(data), source_(std::move(source)) {}

    void expect_magic(std::string_view m);
    std::uint8_t u8(std::string_view field);
    std::uint32_t u32(std::string_view field);
    std::uint64_t u64(std::string_view field);
    float f32(std::string_view field) { return std::bit_cast<float>(u32(field)); }
    double f64(std::string_view field) { return std::bit_cast<double>(u64(field)); }
    std::string str(std::string_view field);
    std::span<const std::uint8_t> bytes(std::size_t n, std::string_view field);

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    const std::string& source() const { return source_; }
    /// Throws if bytes remain after the expected payload.
    void expect_end();
    [[noreturn]] void fail(const std::string& what) const;

private:
    void need(std::size_t n, std::string_view field);
    std::uint64_t get(int n, std::string_view field);

    std::span<const std::uint8_t> data_;
    std::string source_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// FNV-1a, stable across platforms; used for config hashes.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace vlscene::io
