#pragma once

#include "omap/morton.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace omap {

[[nodiscard]] inline double logit(double p) { return std::log(p / (1.0 - p)); }
[[nodiscard]] inline double inv_logit(double l) { return 1.0 / (1.0 + std::exp(-l)); }

struct Color {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    [[nodiscard]] bool empty() const noexcept { return r == 0 && g == 0 && b == 0; }
    friend bool operator==(const Color&, const Color&) = default;
};

/// Sensor model and classification thresholds. Hit/miss/clamp values are in
/// log-odds; thresholds are probabilities.
struct OccupancyConfig {
    float log_hit = 0.84729786f;    // p = 0.7
    float log_miss = -0.40546511f;  // p = 0.4
    float clamp_min = -1.99243016f; // p = 0.12
    float clamp_max = 3.47609869f;  // p = 0.97
    double t_free = 0.5;
    double t_occ = 0.5;
    float prior = 0.0f;

    static OccupancyConfig from_probabilities(double p_hit, double p_miss, double p_min,
                                              double p_max, double t_free, double t_occ);

    /// Throws std::invalid_argument when an invariant is broken.
    void validate() const;
    /// Non-fatal problems, e.g. a free threshold no clamped value can reach.
    [[nodiscard]] std::vector<std::string> warnings() const;
};

enum class NodeState : std::uint8_t { free, unknown, occupied };
enum class NodeKind : std::uint8_t { leaf, inner_leaf, inner };

[[nodiscard]] const char* to_string(NodeState s) noexcept;

struct Indicators {
    bool contains_free = false;
    bool contains_unknown = false;
    bool all_children_same = false;
};

/// Tree node. Leaves (depth 0) never own a child block; every other node owns
/// either no children or exactly eight. Fields are atomics so that readers may
/// run next to a single writer while automatic pruning is off.
class Node {
public:
    Node() = default;
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;
    ~Node();

    [[nodiscard]] float value() const noexcept { return value_.load(std::memory_order_relaxed); }
    [[nodiscard]] Color color() const noexcept { return unpack_color(meta()); }
    [[nodiscard]] Indicators indicators() const noexcept;
    [[nodiscard]] bool has_children() const noexcept { return children() != nullptr; }
    [[nodiscard]] const Node* children() const noexcept {
        return children_.load(std::memory_order_acquire);
    }
    /// Children a reader may descend into: none when the block is absent or the
    /// eight children are identical (such a node behaves as a leaf).
    [[nodiscard]] const Node* visible_children() const noexcept;

    static constexpr std::uint32_t kFree = 1u << 0;
    static constexpr std::uint32_t kUnknown = 1u << 1;
    static constexpr std::uint32_t kAllSame = 1u << 2;

    [[nodiscard]] std::uint32_t meta() const noexcept {
        return meta_.load(std::memory_order_relaxed);
    }
    [[nodiscard]] static Color unpack_color(std::uint32_t meta) noexcept {
        return {static_cast<std::uint8_t>(meta >> 8), static_cast<std::uint8_t>(meta >> 16),
                static_cast<std::uint8_t>(meta >> 24)};
    }
    [[nodiscard]] static std::uint32_t pack_color(Color c) noexcept {
        return std::uint32_t{c.r} << 8 | std::uint32_t{c.g} << 16 | std::uint32_t{c.b} << 24;
    }

private:
    friend class OccupancyMap;
    friend class MapBuilder;

    std::atomic<float> value_{0.0f};
    std::atomic<std::uint32_t> meta_{0};
    std::atomic<Node*> children_{nullptr};
};

/// Snapshot of one node as seen by a reader.
struct NodeView {
    MortonCode code;
    float value = 0.0f;
    NodeState state = NodeState::unknown;
    NodeKind kind = NodeKind::leaf;
    Indicators indicators;
    Color color;

    [[nodiscard]] int depth() const noexcept { return code.depth; }
    [[nodiscard]] double probability() const { return inv_logit(value); }
    [[nodiscard]] bool contains_occupied() const noexcept { return state == NodeState::occupied; }
};

struct TreeStats {
    std::size_t inner = 0;
    std::size_t inner_leaf = 0;
    std::size_t leaf = 0;

    [[nodiscard]] std::size_t total() const noexcept { return inner + inner_leaf + leaf; }
    [[nodiscard]] double leaf_fraction() const noexcept {
        return total() == 0 ? 0.0 : static_cast<double>(leaf) / static_cast<double>(total());
    }
    /// Layout model: 16 bytes per inner or inner-leaf node, 4 per leaf.
    [[nodiscard]] std::size_t bytes_model() const noexcept {
        return 16 * (inner + inner_leaf) + 4 * leaf;
    }
    friend bool operator==(const TreeStats&, const TreeStats&) = default;
};

class OccupancyMap {
public:
    OccupancyMap(TreeGeometry geometry, OccupancyConfig config = {}, bool auto_prune = true,
                 bool color = false);
    OccupancyMap(const OccupancyMap&) = delete;
    OccupancyMap& operator=(const OccupancyMap&) = delete;
    OccupancyMap(OccupancyMap&&) noexcept;
    OccupancyMap& operator=(OccupancyMap&&) noexcept;
    ~OccupancyMap();

    [[nodiscard]] const TreeGeometry& geometry() const noexcept { return geometry_; }
    [[nodiscard]] const OccupancyConfig& config() const noexcept { return config_; }
    [[nodiscard]] bool auto_prune() const noexcept { return auto_prune_; }
    void set_auto_prune(bool on) noexcept { auto_prune_ = on; }
    [[nodiscard]] bool color_enabled() const noexcept { return color_; }
    [[nodiscard]] int depth_levels() const noexcept { return geometry_.depth_levels(); }
    [[nodiscard]] const Node& root() const noexcept { return *root_; }
    [[nodiscard]] MortonCode root_code() const noexcept { return {0, depth_levels()}; }

    [[nodiscard]] NodeState classify(float value) const noexcept {
        if (value > occupied_logit_) {
            return NodeState::occupied;
        }
        if (value < free_logit_) {
            return NodeState::free;
        }
        return NodeState::unknown;
    }
    [[nodiscard]] float occupied_logit() const noexcept { return occupied_logit_; }
    [[nodiscard]] float free_logit() const noexcept { return free_logit_; }

    /// Descends toward `code` until its depth or a leaf-like node is reached.
    [[nodiscard]] NodeView get_node(const MortonCode& code) const;
    [[nodiscard]] NodeView get_node(const Vec3& c, int depth = 0) const;
    [[nodiscard]] NodeView view(const Node& node, const MortonCode& code) const;

    /// Adds `delta` to the leaf at `code` (depth 0), clamping the result.
    /// Throws std::invalid_argument for a non-leaf code.
    NodeState update_occupancy(const MortonCode& code, float delta,
                               std::optional<Color> color = std::nullopt);

    /// Overwrites a coarse node unless it is occupied, in which case the rule is
    /// applied to each child down to leaf depth. Returns the finest depth that
    /// was written.
    int set_coarse(const MortonCode& code, float value);
    /// As set_coarse, with the written value being the old one plus `delta`.
    int update_coarse(const MortonCode& code, float delta);

    /// Collapses every node whose eight children are identical leaves, to a
    /// fixpoint. Returns the number of nodes removed.
    std::size_t prune();

    [[nodiscard]] TreeStats stats() const;
    [[nodiscard]] std::size_t node_count() const noexcept {
        return 1 + 8 * blocks_.load(std::memory_order_relaxed);
    }

    /// Structural and value equality of the two trees.
    [[nodiscard]] bool same_tree(const OccupancyMap& other) const;

private:
    friend class MapBuilder;

    template <class Rule>
    int apply_coarse(const MortonCode& code, Rule rule);
    template <class Rule>
    int apply_rule(Node& node, int depth, Rule& rule);

    void expand(Node& node, int depth);
    void refresh(Node& node, int depth) const;
    void refresh_childless(Node& node, int depth) const;
    std::size_t free_children(Node& node);
    void overwrite_subtree(Node& node, int depth, float value, std::uint32_t color);
    std::size_t prune_recursive(Node& node, int depth);
    [[nodiscard]] bool child_contains(const Node& child, int child_depth,
                                      std::uint32_t flag) const noexcept;
    [[nodiscard]] float clamp(float v) const noexcept;

    TreeGeometry geometry_;
    OccupancyConfig config_;
    bool auto_prune_;
    bool color_;
    float occupied_logit_;
    float free_logit_;
    Node* root_;
    std::atomic<std::size_t> blocks_{0};
};

}  // namespace omap
