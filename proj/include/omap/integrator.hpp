#pragma once

#include "omap/occupancy_map.hpp"
#include "omap/ray.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace omap {

struct Scan {
    Vec3 origin = Vec3::Zero();
    std::vector<Vec3> points;
    std::vector<Color> colors;  ///< empty, or one entry per point
};

enum class IntegratorMethod { simple, discrete, fast_discrete };

[[nodiscard]] const char* to_string(IntegratorMethod m) noexcept;

struct IntegratorConfig {
    IntegratorMethod method = IntegratorMethod::discrete;
    int fast_n = 0;       ///< coarse cells left untouched before the endpoint
    int fast_depth = 0;   ///< depth at which free space is cleared
    std::optional<Aabb> region;
    std::optional<double> max_range;
};

struct IntegrationResult {
    std::size_t rays_traced = 0;
    std::size_t cells_freed = 0;
    std::size_t cells_occupied = 0;
    double raytrace_ms = 0.0;  ///< computing the cells to update
    double insert_ms = 0.0;    ///< applying them to the tree
};

/// Tree mutations produced by ray tracing, in application order: every free
/// update first, then every hit.
struct UpdatePlan {
    struct Free {
        MortonCode code;  ///< depth 0 for leaf misses, > 0 for coarse clears
    };
    struct Hit {
        MortonCode code;
        std::optional<Color> color;
    };
    std::vector<Free> frees;
    std::vector<Hit> hits;
    std::size_t rays = 0;
};

/// Ray-tracing phase: pure, reads the map only for its geometry.
/// Throws std::invalid_argument for a malformed scan and std::domain_error for
/// an origin outside the map.
[[nodiscard]] UpdatePlan plan_scan(const TreeGeometry& geo, const Scan& scan,
                                   const IntegratorConfig& config);

/// Insertion phase.
void apply_plan(OccupancyMap& map, const UpdatePlan& plan);

IntegrationResult integrate(OccupancyMap& map, const Scan& scan, const IntegratorConfig& config);

}  // namespace omap
