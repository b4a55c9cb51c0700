#pragma once

#include "omap/occupancy_map.hpp"
#include "omap/ray.hpp"

#include <Eigen/Geometry>

#include <atomic>
#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

namespace omap {

struct Pose {
    Vec3 position = Vec3::Zero();
    Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

    /// Heading about +z followed by pitch about the rotated +y.
    static Pose from_yaw_pitch(const Vec3& position, double yaw, double pitch = 0.0);
};

struct Sphere {
    Vec3 center = Vec3::Zero();
    double radius = 0.0;
};

/// Angular view volume: sensor +x is forward, +z up. A point is inside when
/// |azimuth| <= h_fov/2, |elevation| <= v_fov/2 and near <= range <= far.
struct Frustum {
    Pose pose;
    double h_fov = 0.0;
    double v_fov = 0.0;
    double near = 0.0;
    double far = 0.0;

    [[nodiscard]] bool valid() const noexcept;
    [[nodiscard]] bool contains(const Vec3& p) const;
    /// False only if no point of the sphere can be inside.
    [[nodiscard]] bool may_intersect(const Vec3& center, double radius) const;
    /// True only if every point of the sphere is inside.
    [[nodiscard]] bool surely_contains(const Vec3& center, double radius) const;
};

struct SensorModel {
    Pose pose;
    double h_fov = 0.0;
    double v_fov = 0.0;
    double r_min = 0.0;
    double r_max = 0.0;

    [[nodiscard]] Frustum frustum() const { return {pose, h_fov, v_fov, r_min, r_max}; }
};

/// Box and sphere test closed cell boxes; a frustum matches a cell when one of
/// its leaf-cell centers is inside.
using BoundingVolume = std::variant<Aabb, Sphere, Frustum>;

[[nodiscard]] bool volume_degenerate(const BoundingVolume& volume);
/// Whether the cell `key` counts as intersecting `volume`.
[[nodiscard]] bool cell_in_volume(const BoundingVolume& volume, const VoxelKey& key,
                                  const TreeGeometry& geo);

struct StateFilter {
    bool occupied = false;
    bool free = false;
    bool unknown = false;
    bool contains_occupied = false;
    bool contains_free = false;
    bool contains_unknown = false;

    [[nodiscard]] bool any() const noexcept {
        return occupied || free || unknown || contains_occupied || contains_free ||
               contains_unknown;
    }
    /// `leaf_like` nodes are matched on their state, others on their
    /// contains-flags.
    [[nodiscard]] bool matches(const NodeView& v, bool leaf_like) const noexcept;
    /// Whether some node below an inner node may match.
    [[nodiscard]] bool may_match_below(const NodeView& v) const noexcept;

    static StateFilter all_states() { return {true, true, true, false, false, false}; }
};

struct QueryOptions {
    /// Skip subtrees using indicators and max occupancy. Off walks every
    /// branch that intersects the volume; answers must not change.
    bool use_indicators = true;
};

/// Number of times a reader descended into a node flagged all-children-same.
/// Kept for the concurrent-reader contract; stays zero.
[[nodiscard]] std::uint64_t uniform_descent_count() noexcept;

/// Calls `visit` for every node at depth >= min_depth that intersects `volume`
/// and matches `filter`, in Morton preorder. Nodes at min_depth, childless
/// nodes and nodes with identical children are leaf-like.
void for_each_node(const OccupancyMap& map, const BoundingVolume& volume,
                   const StateFilter& filter, int min_depth,
                   const std::function<void(const NodeView&)>& visit, QueryOptions opts = {});

[[nodiscard]] std::vector<NodeView> iterate_region(const OccupancyMap& map,
                                                   const BoundingVolume& volume,
                                                   const StateFilter& filter, int min_depth = 0,
                                                   QueryOptions opts = {});

enum class CollisionMode { conservative, occupied_only };

[[nodiscard]] bool region_collision(const OccupancyMap& map, const Sphere& sphere,
                                    CollisionMode mode, QueryOptions opts = {});

/// Throws std::domain_error when an endpoint lies outside the map.
[[nodiscard]] bool line_collision(const OccupancyMap& map, const Vec3& p0, const Vec3& p1,
                                  CollisionMode mode, QueryOptions opts = {});

enum class InfoGainVariant { exact, fast, flat };

[[nodiscard]] const char* to_string(InfoGainVariant v) noexcept;

/// Number of unknown leaf cells visible from the sensor.
[[nodiscard]] std::uint64_t info_gain(const OccupancyMap& map, const SensorModel& sensor,
                                      InfoGainVariant variant);

}  // namespace omap
