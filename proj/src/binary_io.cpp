#include "vlscene/binary_io.hpp"

#include <fstream>
#include <iterator>

#include "vlscene/error.hpp"

namespace vlscene::io {

void ByteReader::fail(const std::string& what) const {
    throw FormatError(source_ + ": " + what + " (byte offset " + std::to_string(pos_) + ")");
}

void ByteReader::need(std::size_t n, std::string_view field) {
    if (remaining() < n) {
        throw FormatError(source_ + ": truncated at byte offset " + std::to_string(data_.size()) + " while reading " +
                          std::string(field) + " (needed " + std::to_string(n) + " bytes at offset " +
                          std::to_string(pos_) + ")");
    }
}

std::uint64_t ByteReader::get(int n, std::string_view field) {
    need(static_cast<std::size_t>(n), field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
}

void ByteReader::expect_magic(std::string_view m) {
    need(m.size(), "magic");
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (data_[pos_ + i] != static_cast<std::uint8_t>(m[i])) fail("bad magic, expected \"" + std::string(m) + "\"");
    }
    pos_ += m.size();
}

std::uint8_t ByteReader::u8(std::string_view field) { return static_cast<std::uint8_t>(get(1, field)); }
std::uint32_t ByteReader::u32(std::string_view field) { return static_cast<std::uint32_t>(get(4, field)); }
std::uint64_t ByteReader::u64(std::string_view field) { return get(8, field); }

std::string ByteReader::str(std::string_view field) {
    const std::uint32_t n = u32(field);
    auto b = bytes(n, field);
    return std::string(b.begin(), b.end());
}

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n, std::string_view field) {
    need(n, field);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
}

void ByteReader::expect_end() {
    if (remaining() != 0) fail(std::to_string(remaining()) + " unexpected trailing bytes");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to '" + path.string() + "'");
}

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace vlscene::io
