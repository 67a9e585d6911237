#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vlscene {

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Voxel labels [X, Y, Z], row-major; 0 is empty, 255 is ignored.
struct LabelGrid {
    std::array<std::size_t, 3> extents{0, 0, 0};
    std::vector<std::uint8_t> labels;

    LabelGrid() = default;
    LabelGrid(std::array<std::size_t, 3> e, std::uint8_t fill = 0)
        : extents(e), labels(e[0] * e[1] * e[2], fill) {}

    std::size_t size() const { return labels.size(); }
    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t z) {
        return labels[(x * extents[1] + y) * extents[2] + z];
    }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const {
        return labels[(x * extents[1] + y) * extents[2] + z];
    }
    /// Throws unless every value is in [0, num_classes) or 255.
    void validate(std::size_t num_classes) const;
    /// Labels as int32 with 255 kept (for cross entropy).
    std::vector<std::int32_t> as_int() const { return {labels.begin(), labels.end()}; }
};

}  // namespace vlscene
