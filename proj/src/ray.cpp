#include "omap/ray.hpp"

#include <cmath>
#include <limits>

namespace omap {

std::vector<VoxelKey> trace_ray_cells(const Vec3& origin, const Vec3& end,
                                      const TreeGeometry& geo, int depth) {
    std::vector<VoxelKey> cells;
    walk_ray_cells(origin, end, geo, depth, [&](const VoxelKey& k) {
        cells.push_back(k);
        return true;
    });
    return cells;
}

std::vector<Vec3> coarse_free_samples(const Vec3& origin, const Vec3& end, double res_d, int n) {
    std::vector<Vec3> samples;
    const Vec3 diff = end - origin;
    const double length = diff.norm();
    if (length == 0.0 || !(res_d > 0.0)) {
        return samples;
    }
    const auto upper = static_cast<std::int64_t>(std::floor(length / res_d)) - n;
    if (upper < 0) {
        return samples;
    }
    const Vec3 step = diff * (res_d / length);
    samples.reserve(static_cast<std::size_t>(upper + 1));
    for (std::int64_t i = 0; i <= upper; ++i) {
        samples.push_back(origin + static_cast<double>(i) * step);
    }
    return samples;
}

std::optional<std::pair<Vec3, Vec3>> clamp_ray_to_region(const Vec3& origin, const Vec3& end,
                                                         const Aabb& box) {
    if (box.contains(origin) && box.contains(end)) {
        return std::pair{origin, end};
    }
    const Vec3 dir = end - origin;
    double t0 = 0.0;
    double t1 = 1.0;
    for (int j = 0; j < 3; ++j) {
        if (dir[j] == 0.0) {
            if (origin[j] < box.min[j] || origin[j] > box.max[j]) {
                return std::nullopt;
            }
            continue;
        }
        double ta = (box.min[j] - origin[j]) / dir[j];
        double tb = (box.max[j] - origin[j]) / dir[j];
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) {
            return std::nullopt;
        }
    }
    Vec3 a = t0 == 0.0 ? origin : Vec3(origin + t0 * dir);
    Vec3 b = t1 == 1.0 ? end : Vec3(origin + t1 * dir);
    // Pin to the box so rounding cannot push a clipped endpoint back outside.
    a = a.cwiseMax(box.min).cwiseMin(box.max);
    b = b.cwiseMax(box.min).cwiseMin(box.max);
    return std::pair{a, b};
}

}  // namespace omap
