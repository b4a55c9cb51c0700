#pragma once

#include "omap/morton.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace omap {

/// Closed axis-aligned box.
struct Aabb {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    [[nodiscard]] bool degenerate() const noexcept {
        return !(min.array() < max.array()).all();
    }
    [[nodiscard]] bool contains(const Vec3& p) const noexcept {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
    [[nodiscard]] bool contains(const Aabb& b) const noexcept {
        return (b.min.array() >= min.array()).all() && (b.max.array() <= max.array()).all();
    }
    [[nodiscard]] bool intersects(const Aabb& b) const noexcept {
        return (b.min.array() <= max.array()).all() && (b.max.array() >= min.array()).all();
    }
};

[[nodiscard]] inline Aabb cell_box(const VoxelKey& key, const TreeGeometry& geo) {
    return {cell_min(key, geo), cell_max(key, geo)};
}

/// Calls `visit(key)` for every cell at `depth` pierced by the segment, in
/// order of increasing ray parameter, excluding the cells holding `origin`
/// and `end`. Stops early when `visit` returns false. Throws std::domain_error
/// if an endpoint lies outside the map.
template <class Visit>
void walk_ray_cells(const Vec3& origin, const Vec3& end, const TreeGeometry& geo, int depth,
                    Visit&& visit);

/// Leaf cells strictly between the origin cell and the end cell (3D DDA).
[[nodiscard]] std::vector<VoxelKey> trace_ray_cells(const Vec3& origin, const Vec3& end,
                                                    const TreeGeometry& geo, int depth = 0);

/// Points spaced `res_d` apart from `origin` toward `end`, stopping `n` steps
/// short of the end.
[[nodiscard]] std::vector<Vec3> coarse_free_samples(const Vec3& origin, const Vec3& end,
                                                    double res_d, int n);

/// Part of the segment inside `box`, or nothing when the segment misses it.
[[nodiscard]] std::optional<std::pair<Vec3, Vec3>> clamp_ray_to_region(const Vec3& origin,
                                                                       const Vec3& end,
                                                                       const Aabb& box);

// ---------------------------------------------------------------------------

template <class Visit>
void walk_ray_cells(const Vec3& origin, const Vec3& end, const TreeGeometry& geo, int depth,
                    Visit&& visit) {
    const VoxelKey start_key = coord_to_key(origin, geo, depth);
    const VoxelKey end_key = coord_to_key(end, geo, depth);
    if (start_key == end_key) {
        return;
    }
    const double res = geo.res_at(depth);
    const Vec3 dir = end - origin;

    std::array<std::int64_t, 3> idx{};
    std::array<std::int64_t, 3> remaining{};
    std::array<int, 3> step{};
    std::array<double, 3> t_max{};
    std::array<double, 3> t_delta{};
    constexpr double kInf = std::numeric_limits<double>::infinity();
    for (int j = 0; j < 3; ++j) {
        idx[j] = start_key.k[j] >> depth;
        const std::int64_t target = end_key.k[j] >> depth;
        remaining[j] = target > idx[j] ? target - idx[j] : idx[j] - target;
        step[j] = target > idx[j] ? 1 : -1;
        if (remaining[j] == 0 || dir[j] == 0.0) {
            t_max[j] = kInf;
            t_delta[j] = kInf;
            continue;
        }
        // Boundary from integer indices so it matches cell_min/cell_max exactly.
        const std::int64_t boundary_idx = step[j] > 0 ? idx[j] + 1 : idx[j];
        const double boundary =
            static_cast<double>((boundary_idx << depth) - geo.key_offset()) * geo.resolution();
        t_max[j] = (boundary - origin[j]) / dir[j];
        t_delta[j] = res / std::abs(dir[j]);
    }

    std::int64_t steps = remaining[0] + remaining[1] + remaining[2];
    while (steps-- > 1) {
        int axis = 0;
        if (t_max[1] < t_max[axis]) {
            axis = 1;
        }
        if (t_max[2] < t_max[axis]) {
            axis = 2;
        }
        if (t_max[axis] == kInf) {
            // Only reachable when rounding left an axis with steps but no direction.
            for (int j = 0; j < 3; ++j) {
                if (remaining[j] > 0) {
                    axis = j;
                    break;
                }
            }
        }
        idx[axis] += step[axis];
        if (--remaining[axis] == 0) {
            t_max[axis] = kInf;
        } else {
            t_max[axis] += t_delta[axis];
        }
        VoxelKey key{{static_cast<std::uint32_t>(idx[0] << depth),
                      static_cast<std::uint32_t>(idx[1] << depth),
                      static_cast<std::uint32_t>(idx[2] << depth)},
                     depth};
        if (!visit(key)) {
            return;
        }
    }
}

}  // namespace omap
