#include "vlscene/vlft.hpp"

#include <cmath>

#include "vlscene/binary_io.hpp"
#include "vlscene/error.hpp"

namespace vlscene::vlft {

namespace {
constexpr std::uint32_t kMaxRank = 8;
}

std::vector<std::uint8_t> encode(const Shape& shape, std::span<const double> values, DType dtype) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("VLFT: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    }
    io::ByteWriter w;
    w.magic("VLFT");
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t e : shape) w.u32(static_cast<std::uint32_t>(e));
    w.u8(static_cast<std::uint8_t>(dtype));
    for (double v : values) {
        if (dtype == DType::f32) {
            w.f32(static_cast<float>(v));
        } else {
            w.f64(v);
        }
    }
    return w.take();
}

Array decode(std::span<const std::uint8_t> bytes, const std::string& source) {
    io::ByteReader r(bytes, source);
    r.expect_magic("VLFT");
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) r.fail("unsupported VLFT version " + std::to_string(version));
    const std::uint32_t rank = r.u32("rank");
    if (rank > kMaxRank) r.fail("rank " + std::to_string(rank) + " exceeds " + std::to_string(kMaxRank));
    Array out;
    for (std::uint32_t i = 0; i < rank; ++i) out.shape.push_back(r.u32("extent"));
    const std::uint8_t tag = r.u8("dtype");
    if (tag != 1 && tag != 2) r.fail("unknown dtype tag " + std::to_string(tag));
    out.dtype = static_cast<DType>(tag);
    const std::size_t n = shape_numel(out.shape);
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.values[i] = out.dtype == DType::f32 ? static_cast<double>(r.f32("payload")) : r.f64("payload");
        if (!std::isfinite(out.values[i])) {
            throw NonFiniteError(source + ": non-finite payload value at element " + std::to_string(i));
        }
    }
    r.expect_end();
    return out;
}

void write(const std::filesystem::path& path, const Tensor& t, DType dtype) {
    io::write_file(path, encode(t.shape(), t.data(), dtype));
}

Tensor read(const std::filesystem::path& path) {
    Array a = decode(io::read_file(path), path.string());
    return Tensor::from_vector(std::move(a.shape), std::move(a.values));
}

}  // namespace vlscene::vlft
