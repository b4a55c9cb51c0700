#include "omap/morton.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace omap {

TreeGeometry::TreeGeometry(double resolution, int depth_levels)
    : resolution_(resolution), depth_levels_(depth_levels) {
    if (!(resolution > 0.0) || !std::isfinite(resolution)) {
        throw std::invalid_argument("resolution must be positive and finite");
    }
    if (depth_levels < 1 || depth_levels > kMaxDepthLevels) {
        throw std::invalid_argument("depth_levels must be in [1, 21], got " +
                                    std::to_string(depth_levels));
    }
}

bool TreeGeometry::contains(const Vec3& c) const noexcept {
    const double half = static_cast<double>(key_offset());
    for (int j = 0; j < 3; ++j) {
        const double f = std::floor(c[j] / resolution_);
        if (!(f >= -half && f < half)) {
            return false;
        }
    }
    return true;
}

VoxelKey coord_to_key(const Vec3& c, const TreeGeometry& geo, int depth) {
    static constexpr char kAxis[3] = {'x', 'y', 'z'};
    const double half = static_cast<double>(geo.key_offset());
    VoxelKey key;
    for (int j = 0; j < 3; ++j) {
        const double f = std::floor(c[j] / geo.resolution());
        if (!(f >= -half && f < half)) {
            throw std::domain_error(std::string("coordinate outside map extent on axis ") +
                                    kAxis[j] + " (" + std::to_string(c[j]) + ")");
        }
        key.k[j] = static_cast<std::uint32_t>(static_cast<std::int64_t>(f) + geo.key_offset());
    }
    return key.at_depth(depth);
}

Vec3 key_to_coord(const VoxelKey& key, const TreeGeometry& geo) {
    const double half_cell = geo.res_at(key.depth) / 2.0;
    Vec3 c;
    for (int j = 0; j < 3; ++j) {
        const auto offset = static_cast<std::int64_t>(key.k[j]) - geo.key_offset();
        c[j] = static_cast<double>(offset) * geo.resolution() + half_cell;
    }
    return c;
}

Vec3 cell_min(const VoxelKey& key, const TreeGeometry& geo) {
    Vec3 c;
    for (int j = 0; j < 3; ++j) {
        const auto offset = static_cast<std::int64_t>(key.k[j]) - geo.key_offset();
        c[j] = static_cast<double>(offset) * geo.resolution();
    }
    return c;
}

Vec3 cell_max(const VoxelKey& key, const TreeGeometry& geo) {
    const std::int64_t size = std::int64_t{1} << key.depth;
    Vec3 c;
    for (int j = 0; j < 3; ++j) {
        const auto offset = static_cast<std::int64_t>(key.k[j]) + size - geo.key_offset();
        c[j] = static_cast<double>(offset) * geo.resolution();
    }
    return c;
}

}  // namespace omap
