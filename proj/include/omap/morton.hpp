#pragma once

#include <Eigen/Core>

#include <array>
#include <compare>
#include <cstdint>

namespace omap {

using Vec3 = Eigen::Vector3d;

inline constexpr int kMaxDepthLevels = 21;

/// Leaf resolution and number of levels below the root. The root cell sits at
/// depth `depth_levels` and covers `2^depth_levels * resolution` per axis,
/// centered on the origin.
class TreeGeometry {
public:
    /// Throws std::invalid_argument unless resolution > 0 and 1 <= levels <= 21.
    TreeGeometry(double resolution, int depth_levels);

    [[nodiscard]] double resolution() const noexcept { return resolution_; }
    [[nodiscard]] int depth_levels() const noexcept { return depth_levels_; }

    /// Edge length of a cell at `depth`.
    [[nodiscard]] double res_at(int depth) const noexcept {
        return resolution_ * static_cast<double>(std::uint64_t{1} << depth);
    }
    [[nodiscard]] double extent() const noexcept { return res_at(depth_levels_); }
    [[nodiscard]] double half_extent() const noexcept { return res_at(depth_levels_ - 1); }
    /// Key offset that maps coordinate 0 to the middle of the key range.
    [[nodiscard]] std::uint32_t key_offset() const noexcept {
        return std::uint32_t{1} << (depth_levels_ - 1);
    }
    [[nodiscard]] std::uint32_t key_limit() const noexcept {
        return std::uint32_t{1} << depth_levels_;
    }
    [[nodiscard]] bool contains(const Vec3& c) const noexcept;

    friend bool operator==(const TreeGeometry&, const TreeGeometry&) = default;

private:
    double resolution_;
    int depth_levels_;
};

/// Offset-biased integer cell address. At depth d the low d bits of every
/// component are zero.
struct VoxelKey {
    std::array<std::uint32_t, 3> k{0, 0, 0};
    int depth = 0;

    [[nodiscard]] std::uint32_t x() const noexcept { return k[0]; }
    [[nodiscard]] std::uint32_t y() const noexcept { return k[1]; }
    [[nodiscard]] std::uint32_t z() const noexcept { return k[2]; }

    /// Key of the depth-`d` ancestor (d >= depth).
    [[nodiscard]] VoxelKey at_depth(int d) const noexcept {
        const std::uint32_t mask = ~((std::uint32_t{1} << d) - 1);
        return {{k[0] & mask, k[1] & mask, k[2] & mask}, d};
    }

    friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

/// Interleaved key bits; x in bit 3l, y in 3l+1, z in 3l+2 for level l.
struct MortonCode {
    std::uint64_t code = 0;
    int depth = 0;

    [[nodiscard]] MortonCode at_depth(int d) const noexcept {
        const std::uint64_t mask = d >= 21 ? 0 : ~((std::uint64_t{1} << (3 * d)) - 1);
        return {code & mask, d};
    }

    friend auto operator<=>(const MortonCode&, const MortonCode&) = default;
};

/// Cell containing `c` at `depth`. Throws std::domain_error naming the axis
/// when the coordinate lies outside the mapped extent.
[[nodiscard]] VoxelKey coord_to_key(const Vec3& c, const TreeGeometry& geo, int depth = 0);

/// Center of the cell named by `key`.
[[nodiscard]] Vec3 key_to_coord(const VoxelKey& key, const TreeGeometry& geo);

/// Lower and upper corner of the cell named by `key`. Both are computed from
/// integer indices so adjacent and nested cells share bit-identical faces.
[[nodiscard]] Vec3 cell_min(const VoxelKey& key, const TreeGeometry& geo);
[[nodiscard]] Vec3 cell_max(const VoxelKey& key, const TreeGeometry& geo);

/// Spreads the low 21 bits of `v` so that bit i lands on bit 3i.
[[nodiscard]] constexpr std::uint64_t dilate3(std::uint32_t v) noexcept {
    std::uint64_t x = v & 0x1fffffu;
    x = (x | x << 32) & 0x001f00000000ffffULL;
    x = (x | x << 16) & 0x001f0000ff0000ffULL;
    x = (x | x << 8) & 0x100f00f00f00f00fULL;
    x = (x | x << 4) & 0x10c30c30c30c30c3ULL;
    x = (x | x << 2) & 0x1249249249249249ULL;
    return x;
}

/// Inverse of dilate3.
[[nodiscard]] constexpr std::uint32_t contract3(std::uint64_t x) noexcept {
    x &= 0x1249249249249249ULL;
    x = (x ^ (x >> 2)) & 0x10c30c30c30c30c3ULL;
    x = (x ^ (x >> 4)) & 0x100f00f00f00f00fULL;
    x = (x ^ (x >> 8)) & 0x001f0000ff0000ffULL;
    x = (x ^ (x >> 16)) & 0x001f00000000ffffULL;
    x = (x ^ (x >> 32)) & 0x1fffffULL;
    return static_cast<std::uint32_t>(x);
}

[[nodiscard]] constexpr MortonCode encode(const VoxelKey& key) noexcept {
    return {dilate3(key.k[0]) | dilate3(key.k[1]) << 1 | dilate3(key.k[2]) << 2, key.depth};
}

[[nodiscard]] constexpr VoxelKey decode(const MortonCode& m) noexcept {
    return {{contract3(m.code), contract3(m.code >> 1), contract3(m.code >> 2)}, m.depth};
}

[[nodiscard]] constexpr int child_index(const MortonCode& m, int level) noexcept {
    return static_cast<int>((m.code >> (3 * level)) & 0x7u);
}

/// Code of child `idx` of the node named by `parent` (parent.depth > 0).
[[nodiscard]] constexpr MortonCode child_code(const MortonCode& parent, int idx) noexcept {
    const int d = parent.depth - 1;
    return {parent.code | (static_cast<std::uint64_t>(idx) << (3 * d)), d};
}

}  // namespace omap
