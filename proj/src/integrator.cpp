#include "omap/integrator.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace omap {

const char* to_string(IntegratorMethod m) noexcept {
    switch (m) {
    case IntegratorMethod::simple: return "simple";
    case IntegratorMethod::discrete: return "discrete";
    case IntegratorMethod::fast_discrete: return "fast_discrete";
    }
    return "?";
}

namespace {

struct PreparedRay {
    Vec3 from;
    Vec3 to;
    bool hit = true;
    std::optional<Color> color;
};

Aabb extent_box(const TreeGeometry& geo) {
    // Upper faces are exclusive for keys; stay a hair inside.
    const double half = geo.half_extent();
    const double inner = half - geo.resolution() * 1e-6;
    return {Vec3::Constant(-half), Vec3::Constant(inner)};
}

std::optional<PreparedRay> prepare(const TreeGeometry& geo, const Vec3& origin, const Vec3& target,
                                   const IntegratorConfig& config) {
    PreparedRay ray{origin, target, true, std::nullopt};
    if (config.max_range) {
        const Vec3 diff = target - origin;
        const double length = diff.norm();
        if (length > *config.max_range) {
            ray.to = origin + diff * (*config.max_range / length);
            ray.hit = false;
        }
    }
    if (config.region) {
        auto clipped = clamp_ray_to_region(ray.from, ray.to, *config.region);
        if (!clipped) {
            return std::nullopt;
        }
        if (clipped->second != ray.to) {
            ray.hit = false;
        }
        ray.from = clipped->first;
        ray.to = clipped->second;
    }
    if (!geo.contains(ray.from)) {
        throw std::domain_error("scan origin lies outside the map extent");
    }
    if (!geo.contains(ray.to)) {
        auto clipped = clamp_ray_to_region(ray.from, ray.to, extent_box(geo));
        if (!clipped) {
            return std::nullopt;
        }
        ray.to = clipped->second;
        ray.hit = false;
    }
    return ray;
}

struct CodeHash {
    std::size_t operator()(std::uint64_t c) const noexcept {
        return static_cast<std::size_t>(c * 0x9e3779b97f4a7c15ULL >> 17);
    }
};

class FastTracer {
public:
    FastTracer(const TreeGeometry& geo, const IntegratorConfig& config,
               const std::vector<PreparedRay>& rays)
        : geo_(geo), config_(config), blocked_(static_cast<std::size_t>(config.fast_depth) + 1) {
        for (const auto& r : rays) {
            if (!r.hit) {
                continue;
            }
            const MortonCode leaf = encode(coord_to_key(r.to, geo_, 0));
            for (int level = 1; level <= config_.fast_depth; ++level) {
                blocked_[level].insert(leaf.at_depth(level).code);
            }
        }
    }

    void trace(const PreparedRay& ray, std::vector<UpdatePlan::Free>& frees) {
        const int top = config_.fast_depth;
        std::array<std::optional<VoxelKey>, kMaxDepthLevels + 1> freed{};
        const auto covered = [&](const VoxelKey& key) {
            for (int lv = key.depth + 1; lv <= top; ++lv) {
                if (freed[lv] && key.at_depth(lv) == *freed[lv]) {
                    return true;
                }
            }
            return false;
        };

        Vec3 start = ray.from;
        for (int level = top; level > 0; --level) {
            const Vec3 diff = ray.to - start;
            const double length = diff.norm();
            if (length == 0.0) {
                break;
            }
            const double res = geo_.res_at(level);
            const auto upper = static_cast<std::int64_t>(std::floor(length / res)) - config_.fast_n;
            if (upper < 0) {
                continue;
            }
            const Vec3 step = diff * (res / length);
            std::optional<VoxelKey> last;
            bool stopped = false;
            for (std::int64_t i = 0; i <= upper; ++i) {
                const Vec3 p = start + static_cast<double>(i) * step;
                const VoxelKey key = coord_to_key(p, geo_, level);
                if (last && key == *last) {
                    continue;
                }
                last = key;
                if (covered(key)) {
                    continue;
                }
                if (blocked(key)) {
                    start = p;
                    stopped = true;
                    break;
                }
                frees.push_back({encode(key)});
                freed[level] = key;
            }
            if (!stopped) {
                start = start + static_cast<double>(upper) * step;
            }
        }

        const VoxelKey start_key = coord_to_key(start, geo_, 0);
        const VoxelKey end_key = coord_to_key(ray.to, geo_, 0);
        if (start != ray.from && start_key != end_key && !covered(start_key)) {
            frees.push_back({encode(start_key)});
        }
        walk_ray_cells(start, ray.to, geo_, 0, [&](const VoxelKey& k) {
            if (!covered(k)) {
                frees.push_back({encode(k)});
            }
            return true;
        });
    }

private:
    [[nodiscard]] bool blocked(const VoxelKey& key) const {
        if (blocked_[key.depth].contains(encode(key).code)) {
            return true;
        }
        return config_.region && !config_.region->contains(cell_box(key, geo_));
    }

    const TreeGeometry& geo_;
    const IntegratorConfig& config_;
    std::vector<std::unordered_set<std::uint64_t, CodeHash>> blocked_;
};

void trace_leaf(const TreeGeometry& geo, const PreparedRay& ray,
                std::vector<UpdatePlan::Free>& frees) {
    walk_ray_cells(ray.from, ray.to, geo, 0, [&](const VoxelKey& k) {
        frees.push_back({encode(k)});
        return true;
    });
}

void push_hit(const TreeGeometry& geo, const PreparedRay& ray, UpdatePlan& plan) {
    if (ray.hit) {
        plan.hits.push_back({encode(coord_to_key(ray.to, geo, 0)), ray.color});
    }
}

}  // namespace

UpdatePlan plan_scan(const TreeGeometry& geo, const Scan& scan, const IntegratorConfig& config) {
    if (!scan.colors.empty() && scan.colors.size() != scan.points.size()) {
        throw std::invalid_argument("scan colors must be empty or match the point count");
    }
    if (config.method == IntegratorMethod::fast_discrete &&
        (config.fast_n < 0 || config.fast_depth < 0 || config.fast_depth >= geo.depth_levels())) {
        throw std::invalid_argument("fast integrator needs n >= 0 and 0 <= d < depth_levels");
    }
    if (config.region && config.region->degenerate()) {
        throw std::invalid_argument("integration region is degenerate");
    }
    if (!config.region && !geo.contains(scan.origin)) {
        throw std::domain_error("scan origin lies outside the map extent");
    }
    const auto color_of = [&](std::size_t i) -> std::optional<Color> {
        if (scan.colors.empty()) {
            return std::nullopt;
        }
        return scan.colors[i];
    };

    UpdatePlan plan;
    std::vector<PreparedRay> rays;
    rays.reserve(scan.points.size());
    if (config.method == IntegratorMethod::simple) {
        for (std::size_t i = 0; i < scan.points.size(); ++i) {
            if (auto ray = prepare(geo, scan.origin, scan.points[i], config)) {
                ray->color = color_of(i);
                rays.push_back(*ray);
            }
        }
    } else {
        // One ray per endpoint cell, aimed at the cell center; first point wins.
        std::unordered_set<std::uint64_t, CodeHash> seen;
        seen.reserve(scan.points.size());
        for (std::size_t i = 0; i < scan.points.size(); ++i) {
            const Vec3& p = scan.points[i];
            Vec3 target = p;
            if (geo.contains(p)) {
                const VoxelKey key = coord_to_key(p, geo, 0);
                if (!seen.insert(encode(key).code).second) {
                    continue;
                }
                target = key_to_coord(key, geo);
            }
            if (auto ray = prepare(geo, scan.origin, target, config)) {
                ray->color = color_of(i);
                rays.push_back(*ray);
            }
        }
    }
    plan.rays = rays.size();

    if (config.method == IntegratorMethod::fast_discrete) {
        FastTracer tracer(geo, config, rays);
        for (const auto& ray : rays) {
            tracer.trace(ray, plan.frees);
        }
    } else {
        for (const auto& ray : rays) {
            trace_leaf(geo, ray, plan.frees);
        }
    }
    for (const auto& ray : rays) {
        push_hit(geo, ray, plan);
    }
    return plan;
}

void apply_plan(OccupancyMap& map, const UpdatePlan& plan) {
    const float miss = map.config().log_miss;
    const float hit = map.config().log_hit;
    for (const auto& f : plan.frees) {
        if (f.code.depth == 0) {
            map.update_occupancy(f.code, miss);
        } else {
            map.update_coarse(f.code, miss);
        }
    }
    for (const auto& h : plan.hits) {
        map.update_occupancy(h.code, hit, h.color);
    }
}

IntegrationResult integrate(OccupancyMap& map, const Scan& scan, const IntegratorConfig& config) {
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    const UpdatePlan plan = plan_scan(map.geometry(), scan, config);
    const auto t1 = Clock::now();
    apply_plan(map, plan);
    const auto t2 = Clock::now();

    IntegrationResult r;
    r.rays_traced = plan.rays;
    r.cells_freed = plan.frees.size();
    r.cells_occupied = plan.hits.size();
    r.raytrace_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    r.insert_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    return r;
}

}  // namespace omap
