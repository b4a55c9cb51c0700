#include "support.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_set>

namespace omap::testing {

std::uint64_t naive_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
    std::uint64_t m = 0;
    for (int bit = 0; bit < 21; ++bit) {
        m |= static_cast<std::uint64_t>((x >> bit) & 1u) << (3 * bit);
        m |= static_cast<std::uint64_t>((y >> bit) & 1u) << (3 * bit + 1);
        m |= static_cast<std::uint64_t>((z >> bit) & 1u) << (3 * bit + 2);
    }
    return m;
}

namespace {

constexpr unsigned kMaskFree = 1;
constexpr unsigned kMaskUnknown = 2;
constexpr unsigned kMaskOccupied = 4;

unsigned state_bit(NodeState s) {
    switch (s) {
    case NodeState::free: return kMaskFree;
    case NodeState::unknown: return kMaskUnknown;
    case NodeState::occupied: return kMaskOccupied;
    }
    return 0;
}

bool brute_all_same(const Node* ch) {
    if (ch == nullptr) {
        return false;
    }
    for (int i = 0; i < 8; ++i) {
        if (ch[i].has_children() ||
            std::bit_cast<std::uint32_t>(ch[i].value()) != std::bit_cast<std::uint32_t>(ch[0].value()) ||
            ch[i].color() != ch[0].color()) {
            return false;
        }
    }
    return true;
}

unsigned subtree_mask(const OccupancyMap& map, const Node& node, int depth) {
    const Node* ch = depth > 0 ? node.children() : nullptr;
    if (ch == nullptr) {
        return state_bit(map.classify(node.value()));
    }
    unsigned m = 0;
    for (int i = 0; i < 8; ++i) {
        m |= subtree_mask(map, ch[i], depth - 1);
    }
    return m;
}

std::string where(const MortonCode& c) {
    return "node code=" + std::to_string(c.code) + " depth=" + std::to_string(c.depth);
}

unsigned scan(const OccupancyMap& map, const Node& node, const MortonCode& code,
              std::vector<std::string>& out) {
    const auto& cfg = map.config();
    const float v = node.value();
    if (!(v >= cfg.clamp_min && v <= cfg.clamp_max)) {
        out.push_back(where(code) + ": value outside clamp bounds");
    }
    const Node* ch = node.children();
    const Indicators ind = node.indicators();
    const NodeState state = map.classify(v);
    if (code.depth == 0) {
        if (ch != nullptr) {
            out.push_back(where(code) + ": leaf owns children");
        }
        return state_bit(state);
    }
    if (ch == nullptr) {
        if (ind.contains_free != (state == NodeState::free) ||
            ind.contains_unknown != (state == NodeState::unknown) || ind.all_children_same) {
            out.push_back(where(code) + ": childless indicators disagree with state");
        }
        return state_bit(state);
    }
    unsigned mask = 0;
    float max_child = ch[0].value();
    for (int i = 0; i < 8; ++i) {
        mask |= scan(map, ch[i], child_code(code, i), out);
        max_child = std::max(max_child, ch[i].value());
    }
    if (std::bit_cast<std::uint32_t>(v) != std::bit_cast<std::uint32_t>(max_child)) {
        out.push_back(where(code) + ": value is not the max of its children");
    }
    if (ind.contains_free != ((mask & kMaskFree) != 0)) {
        out.push_back(where(code) + ": contains_free disagrees with subtree scan");
    }
    if (ind.contains_unknown != ((mask & kMaskUnknown) != 0)) {
        out.push_back(where(code) + ": contains_unknown disagrees with subtree scan");
    }
    if ((state == NodeState::occupied) != ((mask & kMaskOccupied) != 0)) {
        out.push_back(where(code) + ": derived contains_occupied disagrees with subtree scan");
    }
    const bool same = brute_all_same(ch);
    if (ind.all_children_same != same) {
        out.push_back(where(code) + ": all_children_same disagrees with children");
    }
    if (map.auto_prune() && same) {
        out.push_back(where(code) + ": prunable node left with auto-prune on");
    }
    return mask;
}

VoxelKey key_of(const Vec3& p, const TreeGeometry& geo) {
    VoxelKey k;
    for (int j = 0; j < 3; ++j) {
        k.k[j] = static_cast<std::uint32_t>(
            static_cast<std::int64_t>(std::floor(p[j] / geo.resolution())) + geo.key_offset());
    }
    return k;
}

}  // namespace

std::vector<std::string> check_invariants(const OccupancyMap& map) {
    std::vector<std::string> out;
    scan(map, map.root(), map.root_code(), out);
    return out;
}

std::vector<VoxelKey> crossing_cells(const Vec3& a, const Vec3& b, const TreeGeometry& geo) {
    const Vec3 d = b - a;
    const double res = geo.resolution();
    std::vector<double> ts{0.0, 1.0};
    for (int j = 0; j < 3; ++j) {
        if (d[j] == 0.0) {
            continue;
        }
        const double lo = std::min(a[j], b[j]);
        const double hi = std::max(a[j], b[j]);
        for (auto i = static_cast<std::int64_t>(std::floor(lo / res));
             i <= static_cast<std::int64_t>(std::floor(hi / res)) + 1; ++i) {
            const double plane = static_cast<double>(i) * res;
            if (plane > lo && plane < hi) {
                ts.push_back((plane - a[j]) / d[j]);
            }
        }
    }
    std::sort(ts.begin(), ts.end());
    const VoxelKey ka = key_of(a, geo);
    const VoxelKey kb = key_of(b, geo);
    std::vector<VoxelKey> cells;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        if (!(ts[i + 1] > ts[i])) {
            continue;
        }
        const VoxelKey k = key_of(a + 0.5 * (ts[i] + ts[i + 1]) * d, geo);
        if (k == ka || k == kb || (!cells.empty() && cells.back() == k)) {
            continue;
        }
        cells.push_back(k);
    }
    return cells;
}

DenseGrid::DenseGrid(const TreeGeometry& geo, const OccupancyConfig& cfg)
    : geo_(geo), cfg_(cfg), occ_(static_cast<float>(logit(cfg.t_occ))),
      free_(static_cast<float>(logit(cfg.t_free))), side_(geo.key_limit()),
      values_(side_ * side_ * side_, cfg.prior) {}

NodeState DenseGrid::state(const VoxelKey& k) const {
    const float v = at(k);
    if (v > occ_) {
        return NodeState::occupied;
    }
    if (v < free_) {
        return NodeState::free;
    }
    return NodeState::unknown;
}

void DenseGrid::add(const VoxelKey& k, float delta) {
    float& v = at(k);
    v = std::min(std::max(v + delta, cfg_.clamp_min), cfg_.clamp_max);
}

void DenseGrid::integrate_discrete(const Scan& scan) {
    std::vector<VoxelKey> ends;
    std::unordered_set<std::size_t> seen;
    for (const Vec3& p : scan.points) {
        const VoxelKey k = key_of(p, geo_);
        if (seen.insert(index(k)).second) {
            ends.push_back(k);
        }
    }
    for (const VoxelKey& k : ends) {
        Vec3 center;
        for (int j = 0; j < 3; ++j) {
            center[j] = (static_cast<double>(k.k[j]) - geo_.key_offset() + 0.5) * geo_.resolution();
        }
        for (const VoxelKey& c : crossing_cells(scan.origin, center, geo_)) {
            add(c, cfg_.log_miss);
        }
    }
    for (const VoxelKey& k : ends) {
        add(k, cfg_.log_hit);
    }
}

DenseGrid snapshot(const OccupancyMap& map) {
    DenseGrid grid(map.geometry(), map.config());
    grid.for_each_key([&](const VoxelKey& k) { grid.at(k) = map.get_node(encode(k)).value; });
    return grid;
}

NodeState leaf_state(const OccupancyMap& map, const VoxelKey& key) {
    return map.get_node(encode(key)).state;
}

namespace {

bool bad(NodeState s, CollisionMode mode) {
    return s == NodeState::occupied ||
           (mode == CollisionMode::conservative && s == NodeState::unknown);
}

}  // namespace

bool flat_region_collision(const OccupancyMap& map, const Sphere& s, CollisionMode mode) {
    const TreeGeometry& geo = map.geometry();
    const double res = geo.resolution();
    const auto off = static_cast<std::int64_t>(geo.key_offset());
    const auto limit = static_cast<std::int64_t>(geo.key_limit());
    std::array<std::int64_t, 3> lo{};
    std::array<std::int64_t, 3> hi{};
    for (int j = 0; j < 3; ++j) {
        lo[j] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((s.center[j] - s.radius) / res)) + off - 1);
        hi[j] = std::min<std::int64_t>(limit - 1, static_cast<std::int64_t>(std::floor((s.center[j] + s.radius) / res)) + off + 1);
    }
    for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
        for (std::int64_t y = lo[1]; y <= hi[1]; ++y) {
            for (std::int64_t z = lo[2]; z <= hi[2]; ++z) {
                const std::array<std::int64_t, 3> k{x, y, z};
                double d2 = 0.0;
                for (int j = 0; j < 3; ++j) {
                    const double mn = static_cast<double>(k[j] - off) * res;
                    const double mx = static_cast<double>(k[j] + 1 - off) * res;
                    const double q = std::clamp(s.center[j], mn, mx);
                    d2 += (q - s.center[j]) * (q - s.center[j]);
                }
                if (d2 > s.radius * s.radius) {
                    continue;
                }
                const VoxelKey key{{static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                                    static_cast<std::uint32_t>(z)},
                                   0};
                if (bad(leaf_state(map, key), mode)) {
                    return true;
                }
            }
        }
    }
    return false;
}

bool flat_line_collision(const OccupancyMap& map, const Vec3& a, const Vec3& b,
                         CollisionMode mode) {
    const TreeGeometry& geo = map.geometry();
    std::vector<VoxelKey> cells{coord_to_key(a, geo)};
    for (const auto& k : trace_ray_cells(a, b, geo)) {
        cells.push_back(k);
    }
    cells.push_back(coord_to_key(b, geo));
    return std::any_of(cells.begin(), cells.end(),
                       [&](const VoxelKey& k) { return bad(leaf_state(map, k), mode); });
}

namespace {

bool brute_in_volume(const BoundingVolume& volume, const VoxelKey& key, const TreeGeometry& geo) {
    const double res = geo.resolution();
    const std::int64_t size = std::int64_t{1} << key.depth;
    Vec3 mn;
    Vec3 mx;
    for (int j = 0; j < 3; ++j) {
        mn[j] = static_cast<double>(static_cast<std::int64_t>(key.k[j]) - geo.key_offset()) * res;
        mx[j] = static_cast<double>(static_cast<std::int64_t>(key.k[j]) + size - geo.key_offset()) * res;
    }
    if (const auto* b = std::get_if<Aabb>(&volume)) {
        for (int j = 0; j < 3; ++j) {
            if (mx[j] < b->min[j] || mn[j] > b->max[j]) {
                return false;
            }
        }
        return true;
    }
    if (const auto* s = std::get_if<Sphere>(&volume)) {
        double d2 = 0.0;
        for (int j = 0; j < 3; ++j) {
            const double q = std::clamp(s->center[j], mn[j], mx[j]);
            d2 += (q - s->center[j]) * (q - s->center[j]);
        }
        return d2 <= s->radius * s->radius;
    }
    const auto& f = std::get<Frustum>(volume);
    for (std::int64_t x = 0; x < size; ++x) {
        for (std::int64_t y = 0; y < size; ++y) {
            for (std::int64_t z = 0; z < size; ++z) {
                const Vec3 c = mn + Vec3(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5,
                                         static_cast<double>(z) + 0.5) * res;
                if (f.contains(c)) {
                    return true;
                }
            }
        }
    }
    return false;
}

void flat_walk(const OccupancyMap& map, const Node& node, const MortonCode& code,
               const BoundingVolume& volume, const StateFilter& filter, int min_depth,
               std::vector<MortonCode>& out) {
    const Node* ch = code.depth > 0 ? node.children() : nullptr;
    const bool leaf_like = ch == nullptr || brute_all_same(ch) || code.depth <= min_depth;
    const NodeState state = map.classify(node.value());
    bool match = false;
    if (leaf_like) {
        match = (state == NodeState::occupied && (filter.occupied || filter.contains_occupied)) ||
                (state == NodeState::free && (filter.free || filter.contains_free)) ||
                (state == NodeState::unknown && (filter.unknown || filter.contains_unknown));
    } else {
        const unsigned mask = subtree_mask(map, node, code.depth);
        match = (filter.contains_occupied && (mask & kMaskOccupied) != 0) ||
                (filter.contains_free && (mask & kMaskFree) != 0) ||
                (filter.contains_unknown && (mask & kMaskUnknown) != 0);
    }
    if (match && brute_in_volume(volume, decode(code), map.geometry())) {
        out.push_back(code);
    }
    if (!leaf_like) {
        for (int i = 0; i < 8; ++i) {
            flat_walk(map, ch[i], child_code(code, i), volume, filter, min_depth, out);
        }
    }
}

}  // namespace

std::vector<MortonCode> flat_iterate(const OccupancyMap& map, const BoundingVolume& volume,
                                     const StateFilter& filter, int min_depth) {
    std::vector<MortonCode> out;
    flat_walk(map, map.root(), map.root_code(), volume, filter, min_depth, out);
    return out;
}

std::uint64_t oracle_info_gain(const OccupancyMap& map, const SensorModel& sensor) {
    const DenseGrid grid = snapshot(map);
    const Frustum f = sensor.frustum();
    const TreeGeometry& geo = map.geometry();
    std::uint64_t count = 0;
    grid.for_each_key([&](const VoxelKey& k) {
        if (grid.state(k) != NodeState::unknown) {
            return;
        }
        Vec3 c;
        for (int j = 0; j < 3; ++j) {
            c[j] = (static_cast<double>(k.k[j]) - geo.key_offset() + 0.5) * geo.resolution();
        }
        if (!f.contains(c)) {
            return;
        }
        for (const VoxelKey& cell : crossing_cells(sensor.pose.position, c, geo)) {
            if (grid.state(cell) == NodeState::occupied) {
                return;
            }
        }
        ++count;
    });
    return count;
}

Vec3 random_point(const TreeGeometry& geo, std::mt19937_64& rng, double margin) {
    const double h = geo.half_extent() - margin;
    std::uniform_real_distribution<double> d(-h, h);
    return {d(rng), d(rng), d(rng)};
}

void random_operations(OccupancyMap& map, std::mt19937_64& rng, std::size_t count) {
    const TreeGeometry& geo = map.geometry();
    const auto& cfg = map.config();
    const int levels = geo.depth_levels();
    std::uniform_int_distribution<int> op(0, 99);
    std::uniform_int_distribution<std::uint32_t> key_dist(0, geo.key_limit() - 1);
    // Keep most activity in one corner so siblings collide and prune.
    const std::uint32_t hot = std::max<std::uint32_t>(1, geo.key_limit() / 4);
    std::uniform_int_distribution<std::uint32_t> hot_dist(0, hot - 1);
    std::uniform_int_distribution<int> depth_dist(1, levels);
    std::uniform_real_distribution<float> value_dist(cfg.clamp_min, cfg.clamp_max);
    const auto random_key = [&] {
        const bool h = op(rng) < 70;
        return VoxelKey{{h ? hot_dist(rng) : key_dist(rng), h ? hot_dist(rng) : key_dist(rng),
                         h ? hot_dist(rng) : key_dist(rng)},
                        0};
    };
    const auto random_value = [&] {
        switch (op(rng) % 6) {
        case 0: return cfg.log_miss;
        case 1: return cfg.log_hit;
        case 2: return cfg.clamp_min;
        case 3: return cfg.clamp_max;
        case 4: return cfg.prior;
        default: return value_dist(rng);
        }
    };
    for (std::size_t i = 0; i < count; ++i) {
        const int r = op(rng);
        if (r < 60) {
            const float delta = op(rng) < 50 ? cfg.log_hit : cfg.log_miss;
            const Color c{static_cast<std::uint8_t>(op(rng) % 3 * 100), 0, 0};
            map.update_occupancy(encode(random_key()), delta, c);
        } else if (r < 78) {
            const int d = depth_dist(rng);
            map.set_coarse(encode(random_key().at_depth(d)), random_value());
        } else if (r < 93) {
            const int d = depth_dist(rng);
            map.update_coarse(encode(random_key().at_depth(d)), cfg.log_miss);
        } else {
            map.prune();
        }
    }
}

}  // namespace omap::testing
