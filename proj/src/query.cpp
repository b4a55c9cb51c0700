#include "omap/query.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace omap {

namespace {

constexpr double kAngleEps = 1e-9;

std::atomic<std::uint64_t> g_uniform_descents{0};

Vec3 to_sensor_frame(const Pose& pose, const Vec3& p) {
    return pose.orientation.conjugate() * (p - pose.position);
}

double box_distance_sq(const Aabb& box, const Vec3& p) {
    const Vec3 q = p.cwiseMax(box.min).cwiseMin(box.max);
    return (q - p).squaredNorm();
}

/// Radius of the sphere around a cell center that holds all of its leaf centers.
double leaf_center_radius(int depth, const TreeGeometry& geo) {
    return (geo.res_at(depth) - geo.resolution()) * std::numbers::sqrt3 / 2.0;
}

VoxelKey child_key(const VoxelKey& key, int idx) {
    return decode(child_code(encode(key), idx));
}

/// Leaf centers of `key` inside the frustum; stops counting once `limit` is reached.
std::uint64_t count_centers(const Frustum& f, const VoxelKey& key, const TreeGeometry& geo,
                            std::uint64_t limit) {
    const Vec3 c = key_to_coord(key, geo);
    if (key.depth == 0) {
        return f.contains(c) ? 1 : 0;
    }
    const double r = leaf_center_radius(key.depth, geo);
    if (!f.may_intersect(c, r)) {
        return 0;
    }
    if (f.surely_contains(c, r)) {
        return std::uint64_t{1} << (3 * key.depth);
    }
    std::uint64_t n = 0;
    for (int i = 0; i < 8 && n < limit; ++i) {
        n += count_centers(f, child_key(key, i), geo, limit - n);
    }
    return n;
}

/// Calls `visit(leaf_key)` for leaf cells of `key` whose centers lie inside
/// the frustum, until it returns true. Returns whether it did.
template <class Visit>
bool find_leaf_center(const Frustum& f, const VoxelKey& key, const TreeGeometry& geo,
                      Visit& visit) {
    const Vec3 c = key_to_coord(key, geo);
    if (key.depth == 0) {
        return f.contains(c) && visit(key);
    }
    if (!f.may_intersect(c, leaf_center_radius(key.depth, geo))) {
        return false;
    }
    for (int i = 0; i < 8; ++i) {
        if (find_leaf_center(f, child_key(key, i), geo, visit)) {
            return true;
        }
    }
    return false;
}

bool may_reach(const BoundingVolume& volume, const VoxelKey& key, const TreeGeometry& geo) {
    if (const auto* f = std::get_if<Frustum>(&volume)) {
        return f->may_intersect(key_to_coord(key, geo), leaf_center_radius(key.depth, geo));
    }
    return cell_in_volume(volume, key, geo);
}

struct NodeSnapshot {
    const Node* children = nullptr;
    std::uint32_t meta = 0;
    bool leaf_like = true;
};

NodeSnapshot snapshot(const Node& node, int depth) {
    NodeSnapshot s;
    s.meta = node.meta();
    s.children = node.children();
    s.leaf_like = depth == 0 || s.children == nullptr || (s.meta & Node::kAllSame) != 0;
    return s;
}

const Node* descend(const NodeSnapshot& s) {
    if ((s.meta & Node::kAllSame) != 0) {
        g_uniform_descents.fetch_add(1, std::memory_order_relaxed);
    }
    return s.children;
}

class Walker {
public:
    Walker(const OccupancyMap& map, const BoundingVolume& volume, const StateFilter& filter,
           int min_depth, const std::function<void(const NodeView&)>& visit, QueryOptions opts)
        : map_(map), volume_(volume), filter_(filter), min_depth_(min_depth), visit_(visit),
          opts_(opts) {}

    void run(const Node& node, const MortonCode& code) {
        const VoxelKey key = decode(code);
        if (!may_reach(volume_, key, map_.geometry())) {
            return;
        }
        const NodeSnapshot s = snapshot(node, code.depth);
        const NodeView view = map_.view(node, code);
        const bool leaf_like = s.leaf_like || code.depth <= min_depth_;
        if (filter_.matches(view, leaf_like) && cell_in_volume(volume_, key, map_.geometry())) {
            visit_(view);
        }
        if (leaf_like || (opts_.use_indicators && !filter_.may_match_below(view))) {
            return;
        }
        const Node* ch = descend(s);
        for (int i = 0; i < 8; ++i) {
            run(ch[i], child_code(code, i));
        }
    }

private:
    const OccupancyMap& map_;
    const BoundingVolume& volume_;
    const StateFilter& filter_;
    int min_depth_;
    const std::function<void(const NodeView&)>& visit_;
    QueryOptions opts_;
};

bool is_bad(NodeState s, CollisionMode mode) {
    return s == NodeState::occupied ||
           (mode == CollisionMode::conservative && s == NodeState::unknown);
}

/// Whether any leaf below a node with this snapshot may be bad.
bool subtree_may_be_bad(const OccupancyMap& map, const Node& node, const NodeSnapshot& s,
                        CollisionMode mode) {
    if (map.classify(node.value()) == NodeState::occupied) {
        return true;
    }
    return mode == CollisionMode::conservative && (s.meta & Node::kUnknown) != 0;
}

bool sphere_collides(const OccupancyMap& map, const Node& node, const MortonCode& code,
                     const Sphere& sphere, CollisionMode mode, const QueryOptions& opts) {
    const Aabb box = cell_box(decode(code), map.geometry());
    if (box_distance_sq(box, sphere.center) > sphere.radius * sphere.radius) {
        return false;
    }
    const NodeSnapshot s = snapshot(node, code.depth);
    if (s.leaf_like) {
        return is_bad(map.classify(node.value()), mode);
    }
    if (opts.use_indicators && !subtree_may_be_bad(map, node, s, mode)) {
        return false;
    }
    const Node* ch = descend(s);
    for (int i = 0; i < 8; ++i) {
        if (sphere_collides(map, ch[i], child_code(code, i), sphere, mode, opts)) {
            return true;
        }
    }
    return false;
}

/// Answers "is this cell bad?" for consecutive cells along a ray, reusing the
/// last node reached when it covers the next cell.
class CellProbe {
public:
    CellProbe(const OccupancyMap& map, CollisionMode mode, bool use_cache)
        : map_(map), mode_(mode), use_cache_(use_cache) {}

    /// True if the cell named by `key` (any depth) holds a bad leaf.
    bool bad(const VoxelKey& key) {
        if (use_cache_ && cached_ && key.depth <= cached_key_.depth &&
            key.at_depth(cached_key_.depth) == cached_key_) {
            return cached_bad_;
        }
        const MortonCode code = encode(key);
        const Node* node = &map_.root();
        int depth = map_.depth_levels();
        for (;;) {
            const NodeSnapshot s = snapshot(*node, depth);
            if (s.leaf_like || depth == key.depth) {
                return remember(key, depth, is_bad(map_.classify(node->value()), mode_));
            }
            if (use_cache_ && !subtree_may_be_bad(map_, *node, s, mode_)) {
                return remember(key, depth, false);
            }
            node = &descend(s)[child_index(code, depth - 1)];
            --depth;
        }
    }

private:
    bool remember(const VoxelKey& key, int depth, bool bad) {
        cached_ = true;
        cached_key_ = key.at_depth(std::max(depth, key.depth));
        cached_bad_ = bad;
        return bad;
    }

    const OccupancyMap& map_;
    CollisionMode mode_;
    bool use_cache_;
    bool cached_ = false;
    VoxelKey cached_key_;
    bool cached_bad_ = false;
};

class InfoGain {
public:
    InfoGain(const OccupancyMap& map, const SensorModel& sensor)
        : map_(map), geo_(map.geometry()), frustum_(sensor.frustum()),
          origin_(sensor.pose.position) {}

    /// Some occupied cell at `depth` lies strictly between the sensor and `target`.
    bool blocked(const Vec3& target, int depth) const {
        CellProbe probe(map_, CollisionMode::occupied_only, true);
        bool hit = false;
        walk_ray_cells(origin_, target, geo_, depth, [&](const VoxelKey& k) {
            hit = probe.bad(k);
            return !hit;
        });
        return hit;
    }

    std::uint64_t flat() const {
        const double r = frustum_.far;
        const Vec3 lo = (origin_ - Vec3::Constant(r)).cwiseMax(Vec3::Constant(-geo_.half_extent()));
        const Vec3 hi = (origin_ + Vec3::Constant(r))
                            .cwiseMin(Vec3::Constant(geo_.half_extent() - geo_.resolution() * 1e-6));
        const VoxelKey kl = coord_to_key(lo, geo_, 0);
        const VoxelKey kh = coord_to_key(hi, geo_, 0);
        std::uint64_t count = 0;
        VoxelKey key;
        for (std::uint32_t x = kl.x(); x <= kh.x(); ++x) {
            for (std::uint32_t y = kl.y(); y <= kh.y(); ++y) {
                for (std::uint32_t z = kl.z(); z <= kh.z(); ++z) {
                    key.k = {x, y, z};
                    const Vec3 c = key_to_coord(key, geo_);
                    if (!frustum_.contains(c)) {
                        continue;
                    }
                    if (map_.get_node(encode(key)).state != NodeState::unknown) {
                        continue;
                    }
                    if (!blocked(c, 0)) {
                        ++count;
                    }
                }
            }
        }
        return count;
    }

    template <class PerNode>
    std::uint64_t over_unknown_nodes(const Node& node, const MortonCode& code,
                                     PerNode& per_node) const {
        const VoxelKey key = decode(code);
        if (!may_reach(frustum_, key, geo_)) {
            return 0;
        }
        const NodeSnapshot s = snapshot(node, code.depth);
        if (s.leaf_like) {
            return map_.classify(node.value()) == NodeState::unknown ? per_node(key) : 0;
        }
        if ((s.meta & Node::kUnknown) == 0) {
            return 0;
        }
        const Node* ch = descend(s);
        std::uint64_t n = 0;
        for (int i = 0; i < 8; ++i) {
            n += over_unknown_nodes(ch[i], child_code(code, i), per_node);
        }
        return n;
    }

    std::uint64_t exact_node(const VoxelKey& key) const {
        const std::uint64_t inside = count_centers(frustum_, key, geo_, UINT64_MAX);
        if (inside == 0) {
            return 0;
        }
        if (!blocked(key_to_coord(key, geo_), key.depth)) {
            return inside;
        }
        if (key.depth == 0) {
            return 0;
        }
        std::uint64_t n = 0;
        for (int i = 0; i < 8; ++i) {
            n += exact_node(child_key(key, i));
        }
        return n;
    }

    std::uint64_t fast_node(const VoxelKey& key) const {
        const std::uint64_t inside = count_centers(frustum_, key, geo_, UINT64_MAX);
        if (inside == 0) {
            return 0;
        }
        auto visible = [&](const VoxelKey& leaf) { return !blocked(key_to_coord(leaf, geo_), 0); };
        return find_leaf_center(frustum_, key, geo_, visible) ? inside : 0;
    }

    std::uint64_t run(InfoGainVariant variant) const {
        if (!geo_.contains(origin_)) {
            throw std::domain_error("sensor position lies outside the map extent");
        }
        switch (variant) {
        case InfoGainVariant::flat: return flat();
        case InfoGainVariant::exact: {
            auto per_node = [this](const VoxelKey& k) { return exact_node(k); };
            return over_unknown_nodes(map_.root(), map_.root_code(), per_node);
        }
        case InfoGainVariant::fast: {
            auto per_node = [this](const VoxelKey& k) { return fast_node(k); };
            return over_unknown_nodes(map_.root(), map_.root_code(), per_node);
        }
        }
        return 0;
    }

private:
    const OccupancyMap& map_;
    const TreeGeometry& geo_;
    Frustum frustum_;
    Vec3 origin_;
};

}  // namespace

Pose Pose::from_yaw_pitch(const Vec3& position, double yaw, double pitch) {
    Pose p;
    p.position = position;
    p.orientation = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY());
    return p;
}

bool Frustum::valid() const noexcept {
    return h_fov > 0.0 && h_fov < std::numbers::pi && v_fov > 0.0 && v_fov < std::numbers::pi &&
           near >= 0.0 && near < far;
}

bool Frustum::contains(const Vec3& p) const {
    const Vec3 l = to_sensor_frame(pose, p);
    const double range = l.norm();
    if (range < near || range > far) {
        return false;
    }
    const double az = std::atan2(l.y(), l.x());
    const double el = std::atan2(l.z(), std::hypot(l.x(), l.y()));
    return std::abs(az) <= h_fov / 2.0 && std::abs(el) <= v_fov / 2.0;
}

bool Frustum::may_intersect(const Vec3& center, double radius) const {
    const Vec3 l = to_sensor_frame(pose, center);
    const double d = l.norm();
    if (d - radius > far || d + radius < near) {
        return false;
    }
    if (d <= radius) {
        return true;
    }
    const double alpha = std::asin(radius / d);
    const double el = std::atan2(l.z(), std::hypot(l.x(), l.y()));
    if (std::abs(el) - alpha > v_fov / 2.0 + kAngleEps) {
        return false;
    }
    if (std::abs(el) + alpha >= std::numbers::pi / 2.0) {
        return true;
    }
    const double spread = std::asin(std::min(1.0, std::sin(alpha) / std::cos(el)));
    const double az = std::atan2(l.y(), l.x());
    return std::abs(az) - spread <= h_fov / 2.0 + kAngleEps;
}

bool Frustum::surely_contains(const Vec3& center, double radius) const {
    const Vec3 l = to_sensor_frame(pose, center);
    const double d = l.norm();
    if (d + radius > far || d - radius < near || d <= radius) {
        return false;
    }
    const double alpha = std::asin(radius / d);
    const double el = std::atan2(l.z(), std::hypot(l.x(), l.y()));
    if (std::abs(el) + alpha > v_fov / 2.0 - kAngleEps) {
        return false;
    }
    const double spread = std::asin(std::min(1.0, std::sin(alpha) / std::cos(el)));
    const double az = std::atan2(l.y(), l.x());
    return std::abs(az) + spread <= h_fov / 2.0 - kAngleEps;
}

bool volume_degenerate(const BoundingVolume& volume) {
    if (const auto* b = std::get_if<Aabb>(&volume)) {
        return !(b->min.array() <= b->max.array()).all();
    }
    if (const auto* s = std::get_if<Sphere>(&volume)) {
        return !(s->radius > 0.0);
    }
    return !std::get<Frustum>(volume).valid();
}

bool cell_in_volume(const BoundingVolume& volume, const VoxelKey& key, const TreeGeometry& geo) {
    if (const auto* b = std::get_if<Aabb>(&volume)) {
        return b->intersects(cell_box(key, geo));
    }
    if (const auto* s = std::get_if<Sphere>(&volume)) {
        return box_distance_sq(cell_box(key, geo), s->center) <= s->radius * s->radius;
    }
    return count_centers(std::get<Frustum>(volume), key, geo, 1) > 0;
}

bool StateFilter::matches(const NodeView& v, bool leaf_like) const noexcept {
    if (leaf_like) {
        switch (v.state) {
        case NodeState::occupied: return occupied || contains_occupied;
        case NodeState::free: return free || contains_free;
        case NodeState::unknown: return unknown || contains_unknown;
        }
        return false;
    }
    return (contains_occupied && v.state == NodeState::occupied) ||
           (contains_free && v.indicators.contains_free) ||
           (contains_unknown && v.indicators.contains_unknown);
}

bool StateFilter::may_match_below(const NodeView& v) const noexcept {
    return ((occupied || contains_occupied) && v.state == NodeState::occupied) ||
           ((free || contains_free) && v.indicators.contains_free) ||
           ((unknown || contains_unknown) && v.indicators.contains_unknown);
}

std::uint64_t uniform_descent_count() noexcept {
    return g_uniform_descents.load(std::memory_order_relaxed);
}

void for_each_node(const OccupancyMap& map, const BoundingVolume& volume,
                   const StateFilter& filter, int min_depth,
                   const std::function<void(const NodeView&)>& visit, QueryOptions opts) {
    if (!filter.any() || volume_degenerate(volume) || min_depth < 0 ||
        min_depth > map.depth_levels()) {
        return;
    }
    Walker walker(map, volume, filter, min_depth, visit, opts);
    walker.run(map.root(), map.root_code());
}

std::vector<NodeView> iterate_region(const OccupancyMap& map, const BoundingVolume& volume,
                                     const StateFilter& filter, int min_depth,
                                     QueryOptions opts) {
    std::vector<NodeView> out;
    for_each_node(map, volume, filter, min_depth, [&](const NodeView& v) { out.push_back(v); },
                  opts);
    return out;
}

bool region_collision(const OccupancyMap& map, const Sphere& sphere, CollisionMode mode,
                      QueryOptions opts) {
    if (!(sphere.radius > 0.0)) {
        throw std::invalid_argument("collision sphere needs a positive radius");
    }
    return sphere_collides(map, map.root(), map.root_code(), sphere, mode, opts);
}

bool line_collision(const OccupancyMap& map, const Vec3& p0, const Vec3& p1, CollisionMode mode,
                    QueryOptions opts) {
    const TreeGeometry& geo = map.geometry();
    const VoxelKey k0 = coord_to_key(p0, geo, 0);
    const VoxelKey k1 = coord_to_key(p1, geo, 0);
    CellProbe probe(map, mode, opts.use_indicators);
    if (probe.bad(k0)) {
        return true;
    }
    bool hit = false;
    walk_ray_cells(p0, p1, geo, 0, [&](const VoxelKey& k) {
        hit = probe.bad(k);
        return !hit;
    });
    return hit || probe.bad(k1);
}

const char* to_string(InfoGainVariant v) noexcept {
    switch (v) {
    case InfoGainVariant::exact: return "exact";
    case InfoGainVariant::fast: return "fast";
    case InfoGainVariant::flat: return "flat";
    }
    return "?";
}

std::uint64_t info_gain(const OccupancyMap& map, const SensorModel& sensor,
                        InfoGainVariant variant) {
    if (!sensor.frustum().valid()) {
        throw std::invalid_argument("sensor model is invalid");
    }
    return InfoGain(map, sensor).run(variant);
}

}  // namespace omap
