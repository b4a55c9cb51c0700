#pragma once

// Test-only oracles. Nothing here calls the library's traversal or DDA code;
// they recompute answers by brute force from leaf states and plain geometry.

#include "omap/integrator.hpp"
#include "omap/occupancy_map.hpp"
#include "omap/query.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace omap::testing {

/// Per-bit interleave loop.
std::uint64_t naive_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z);

/// Every violated tree invariant, described. Empty when the tree is sound.
std::vector<std::string> check_invariants(const OccupancyMap& map);

/// Leaf cells crossed by the open segment a-b, in order, without the cells of
/// a and b. Built from sorted grid-plane crossing parameters.
std::vector<VoxelKey> crossing_cells(const Vec3& a, const Vec3& b, const TreeGeometry& geo);

/// Dense leaf grid over the whole map (small maps only).
class DenseGrid {
public:
    DenseGrid(const TreeGeometry& geo, const OccupancyConfig& cfg);

    [[nodiscard]] std::size_t side() const noexcept { return side_; }
    [[nodiscard]] std::size_t index(const VoxelKey& k) const {
        return (static_cast<std::size_t>(k.z()) * side_ + k.y()) * side_ + k.x();
    }
    [[nodiscard]] float& at(const VoxelKey& k) { return values_[index(k)]; }
    [[nodiscard]] float at(const VoxelKey& k) const { return values_[index(k)]; }
    [[nodiscard]] NodeState state(const VoxelKey& k) const;
    void add(const VoxelKey& k, float delta);

    /// Discrete integration: one ray per unique endpoint cell toward its center.
    void integrate_discrete(const Scan& scan);

    [[nodiscard]] const TreeGeometry& geometry() const noexcept { return geo_; }

    template <class F>
    void for_each_key(F&& f) const {
        for (std::uint32_t z = 0; z < side_; ++z) {
            for (std::uint32_t y = 0; y < side_; ++y) {
                for (std::uint32_t x = 0; x < side_; ++x) {
                    f(VoxelKey{{x, y, z}, 0});
                }
            }
        }
    }

private:
    TreeGeometry geo_;
    OccupancyConfig cfg_;
    float occ_;
    float free_;
    std::size_t side_;
    std::vector<float> values_;
};

/// Copies a map's leaf values into a dense grid.
DenseGrid snapshot(const OccupancyMap& map);

/// Leaf state by root-to-leaf lookup.
NodeState leaf_state(const OccupancyMap& map, const VoxelKey& key);

bool flat_region_collision(const OccupancyMap& map, const Sphere& s, CollisionMode mode);
bool flat_line_collision(const OccupancyMap& map, const Vec3& a, const Vec3& b, CollisionMode mode);

/// Full traversal with brute-force contains flags and brute-force volume
/// tests; returns (code, depth) of every node the iterator should yield.
std::vector<MortonCode> flat_iterate(const OccupancyMap& map, const BoundingVolume& volume,
                                     const StateFilter& filter, int min_depth);

/// Unknown leaf cells in the frustum whose center is visible from the sensor,
/// counted on a dense grid with crossing_cells rays.
std::uint64_t oracle_info_gain(const OccupancyMap& map, const SensorModel& sensor);

/// Random walk of updates, coarse writes and prunes on a small map.
void random_operations(OccupancyMap& map, std::mt19937_64& rng, std::size_t count);

Vec3 random_point(const TreeGeometry& geo, std::mt19937_64& rng, double margin = 0.0);

}  // namespace omap::testing
