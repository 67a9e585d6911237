#pragma once

// VLFT feature-fixture format:
//   "VLFT" | version u32 | rank u32 | extents u32 x rank | dtype u8 (1 = f32, 2 = f64) | payload
// All integers and the row-major payload are little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vlscene/tensor.hpp"

namespace vlscene::vlft {

inline constexpr std::uint32_t kVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

struct Array {
    Shape shape;
    DType dtype = DType::f64;
    std::vector<double> values;
};

std::vector<std::uint8_t> encode(const Shape& shape, std::span<const double> values, DType dtype);
/// `source` labels error messages (usually the file path).
Array decode(std::span<const std::uint8_t> bytes, const std::string& source = "VLFT");

void write(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::f64);
Tensor read(const std::filesystem::path& path);

}  // namespace vlscene::vlft
