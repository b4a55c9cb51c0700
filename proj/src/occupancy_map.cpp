#include "omap/occupancy_map.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <iostream>
#include <stdexcept>
#include <utility>

namespace omap {

OccupancyConfig OccupancyConfig::from_probabilities(double p_hit, double p_miss, double p_min,
                                                    double p_max, double t_free, double t_occ) {
    for (const double p : {p_hit, p_miss, p_min, p_max, t_free, t_occ}) {
        if (!(p > 0.0 && p < 1.0)) {
            throw std::invalid_argument("probabilities must lie in (0, 1)");
        }
    }
    OccupancyConfig cfg;
    cfg.log_hit = static_cast<float>(logit(p_hit));
    cfg.log_miss = static_cast<float>(logit(p_miss));
    cfg.clamp_min = static_cast<float>(logit(p_min));
    cfg.clamp_max = static_cast<float>(logit(p_max));
    cfg.t_free = t_free;
    cfg.t_occ = t_occ;
    cfg.validate();
    return cfg;
}

void OccupancyConfig::validate() const {
    if (!(log_hit > 0.0f)) {
        throw std::invalid_argument("log_hit must be positive");
    }
    if (!(log_miss < 0.0f)) {
        throw std::invalid_argument("log_miss must be negative");
    }
    if (!(clamp_min <= prior && prior <= clamp_max)) {
        throw std::invalid_argument("clamp bounds must enclose the prior");
    }
    if (!(t_free > 0.0 && t_free <= t_occ && t_occ < 1.0)) {
        throw std::invalid_argument("thresholds must satisfy 0 < t_free <= t_occ < 1");
    }
}

std::vector<std::string> OccupancyConfig::warnings() const {
    std::vector<std::string> out;
    if (logit(t_free) < clamp_min) {
        out.emplace_back("free threshold lies below clamp_min; no node can classify free");
    }
    if (logit(t_occ) >= clamp_max) {
        out.emplace_back("occupied threshold is not below clamp_max; no node can classify occupied");
    }
    return out;
}

const char* to_string(NodeState s) noexcept {
    switch (s) {
    case NodeState::free: return "free";
    case NodeState::unknown: return "unknown";
    case NodeState::occupied: return "occupied";
    }
    return "?";
}

Node::~Node() { delete[] children_.load(std::memory_order_relaxed); }

Indicators Node::indicators() const noexcept {
    const std::uint32_t m = meta();
    return {(m & kFree) != 0, (m & kUnknown) != 0, (m & kAllSame) != 0};
}

const Node* Node::visible_children() const noexcept {
    const Node* c = children();
    if (c == nullptr || (meta() & kAllSame) != 0) {
        return nullptr;
    }
    return c;
}

OccupancyMap::OccupancyMap(TreeGeometry geometry, OccupancyConfig config, bool auto_prune,
                           bool color)
    : geometry_(geometry),
      config_(config),
      auto_prune_(auto_prune),
      color_(color),
      occupied_logit_(static_cast<float>(logit(config.t_occ))),
      free_logit_(static_cast<float>(logit(config.t_free))),
      root_(new Node) {
    config_.validate();
    for (const auto& w : config_.warnings()) {
        std::clog << "omap: warning: " << w << '\n';
    }
    root_->value_.store(config_.prior, std::memory_order_relaxed);
    refresh_childless(*root_, depth_levels());
}

OccupancyMap::OccupancyMap(OccupancyMap&& other) noexcept
    : geometry_(other.geometry_),
      config_(other.config_),
      auto_prune_(other.auto_prune_),
      color_(other.color_),
      occupied_logit_(other.occupied_logit_),
      free_logit_(other.free_logit_),
      root_(std::exchange(other.root_, nullptr)),
      blocks_(other.blocks_.load()) {}

OccupancyMap& OccupancyMap::operator=(OccupancyMap&& other) noexcept {
    if (this != &other) {
        delete root_;
        geometry_ = other.geometry_;
        config_ = other.config_;
        auto_prune_ = other.auto_prune_;
        color_ = other.color_;
        occupied_logit_ = other.occupied_logit_;
        free_logit_ = other.free_logit_;
        root_ = std::exchange(other.root_, nullptr);
        blocks_.store(other.blocks_.load());
    }
    return *this;
}

OccupancyMap::~OccupancyMap() { delete root_; }

float OccupancyMap::clamp(float v) const noexcept {
    return std::clamp(v, config_.clamp_min, config_.clamp_max);
}

bool OccupancyMap::child_contains(const Node& child, int child_depth,
                                  std::uint32_t flag) const noexcept {
    if (child_depth == 0) {
        const NodeState s = classify(child.value());
        return flag == Node::kFree ? s == NodeState::free : s == NodeState::unknown;
    }
    return (child.meta() & flag) != 0;
}

void OccupancyMap::refresh_childless(Node& node, int depth) const {
    std::uint32_t meta = node.meta() & 0xffffff00u;
    if (depth > 0) {
        const NodeState s = classify(node.value());
        meta |= s == NodeState::free ? Node::kFree : 0u;
        meta |= s == NodeState::unknown ? Node::kUnknown : 0u;
    }
    node.meta_.store(meta, std::memory_order_relaxed);
}

void OccupancyMap::refresh(Node& node, int depth) const {
    const Node* ch = node.children();
    if (ch == nullptr) {
        refresh_childless(node, depth);
        return;
    }
    const int cd = depth - 1;
    float max_value = ch[0].value();
    bool any_free = false;
    bool any_unknown = false;
    bool all_same = true;
    const std::uint32_t first_color = ch[0].meta() & 0xffffff00u;
    const auto first_bits = std::bit_cast<std::uint32_t>(ch[0].value());
    for (int i = 0; i < 8; ++i) {
        const Node& c = ch[i];
        const float v = c.value();
        max_value = std::max(max_value, v);
        any_free = any_free || child_contains(c, cd, Node::kFree);
        any_unknown = any_unknown || child_contains(c, cd, Node::kUnknown);
        all_same = all_same && !c.has_children() &&
                   std::bit_cast<std::uint32_t>(v) == first_bits &&
                   (c.meta() & 0xffffff00u) == first_color;
    }
    std::uint32_t meta = (any_free ? Node::kFree : 0u) | (any_unknown ? Node::kUnknown : 0u);
    if (all_same) {
        meta |= Node::kAllSame | first_color;
    }
    node.value_.store(max_value, std::memory_order_relaxed);
    node.meta_.store(meta, std::memory_order_relaxed);
}

void OccupancyMap::expand(Node& node, int depth) {
    auto* block = new Node[8];
    const float v = node.value();
    const std::uint32_t color = node.meta() & 0xffffff00u;
    for (int i = 0; i < 8; ++i) {
        block[i].value_.store(v, std::memory_order_relaxed);
        block[i].meta_.store(color, std::memory_order_relaxed);
        refresh_childless(block[i], depth - 1);
    }
    node.children_.store(block, std::memory_order_release);
    blocks_.fetch_add(1, std::memory_order_relaxed);
}

std::size_t OccupancyMap::free_children(Node& node) {
    Node* ch = node.children_.load(std::memory_order_relaxed);
    if (ch == nullptr) {
        return 0;
    }
    std::size_t removed = 8;
    for (int i = 0; i < 8; ++i) {
        removed += free_children(ch[i]);
    }
    node.children_.store(nullptr, std::memory_order_release);
    delete[] ch;
    blocks_.fetch_sub(1, std::memory_order_relaxed);
    return removed;
}

NodeView OccupancyMap::view(const Node& node, const MortonCode& code) const {
    NodeView v;
    v.code = code;
    v.value = node.value();
    v.state = classify(v.value);
    v.color = node.color();
    if (code.depth == 0) {
        v.kind = NodeKind::leaf;
    } else {
        v.kind = node.has_children() ? NodeKind::inner : NodeKind::inner_leaf;
        v.indicators = node.indicators();
    }
    return v;
}

NodeView OccupancyMap::get_node(const MortonCode& code) const {
    const Node* node = root_;
    int depth = depth_levels();
    while (depth > code.depth) {
        const Node* ch = node->visible_children();
        if (ch == nullptr) {
            break;
        }
        node = &ch[child_index(code, depth - 1)];
        --depth;
    }
    return view(*node, code.at_depth(depth));
}

NodeView OccupancyMap::get_node(const Vec3& c, int depth) const {
    return get_node(encode(coord_to_key(c, geometry_, depth)));
}

NodeState OccupancyMap::update_occupancy(const MortonCode& code, float delta,
                                         std::optional<Color> color) {
    if (code.depth != 0) {
        throw std::invalid_argument("update_occupancy requires a leaf-depth code");
    }
    std::array<Node*, kMaxDepthLevels + 1> path{};
    Node* node = root_;
    for (int depth = depth_levels(); depth > 0; --depth) {
        if (!node->has_children()) {
            expand(*node, depth);
        }
        path[depth] = node;
        node = &node->children_.load(std::memory_order_relaxed)[child_index(code, depth - 1)];
    }
    const float v = clamp(node->value() + delta);
    node->value_.store(v, std::memory_order_relaxed);
    if (color_ && color) {
        Color c = *color;
        const Color old = node->color();
        if (!old.empty()) {
            c = {static_cast<std::uint8_t>((old.r + c.r + 1) / 2),
                 static_cast<std::uint8_t>((old.g + c.g + 1) / 2),
                 static_cast<std::uint8_t>((old.b + c.b + 1) / 2)};
        }
        node->meta_.store(Node::pack_color(c), std::memory_order_relaxed);
    }
    for (int depth = 1; depth <= depth_levels(); ++depth) {
        Node& n = *path[depth];
        refresh(n, depth);
        if (auto_prune_ && (n.meta() & Node::kAllSame) != 0) {
            free_children(n);
            refresh_childless(n, depth);
        }
    }
    return classify(v);
}

template <class Rule>
int OccupancyMap::apply_rule(Node& node, int depth, Rule& rule) {
    if (classify(node.value()) != NodeState::occupied) {
        const float v = clamp(rule(node.value()));
        if (auto_prune_) {
            free_children(node);
            node.value_.store(v, std::memory_order_relaxed);
            refresh_childless(node, depth);
        } else {
            // Readers may be inside this subtree; keep the blocks and make them uniform.
            overwrite_subtree(node, depth, v, node.meta() & 0xffffff00u);
        }
        return depth;
    }
    if (depth == 0) {
        return 0;
    }
    if (!node.has_children()) {
        expand(node, depth);
    }
    Node* ch = node.children_.load(std::memory_order_relaxed);
    int finest = depth;
    for (int i = 0; i < 8; ++i) {
        finest = std::min(finest, apply_rule(ch[i], depth - 1, rule));
    }
    refresh(node, depth);
    if (auto_prune_ && (node.meta() & Node::kAllSame) != 0) {
        free_children(node);
        refresh_childless(node, depth);
    }
    return finest;
}

template <class Rule>
int OccupancyMap::apply_coarse(const MortonCode& code, Rule rule) {
    if (code.depth <= 0 || code.depth > depth_levels()) {
        throw std::invalid_argument("coarse writes require a depth in (0, depth_levels]");
    }
    std::array<Node*, kMaxDepthLevels + 1> path{};
    Node* node = root_;
    for (int depth = depth_levels(); depth > code.depth; --depth) {
        if (!node->has_children()) {
            expand(*node, depth);
        }
        path[depth] = node;
        node = &node->children_.load(std::memory_order_relaxed)[child_index(code, depth - 1)];
    }
    const int finest = apply_rule(*node, code.depth, rule);
    for (int depth = code.depth + 1; depth <= depth_levels(); ++depth) {
        Node& n = *path[depth];
        refresh(n, depth);
        if (auto_prune_ && (n.meta() & Node::kAllSame) != 0) {
            free_children(n);
            refresh_childless(n, depth);
        }
    }
    return finest;
}

int OccupancyMap::set_coarse(const MortonCode& code, float value) {
    return apply_coarse(code, [value](float) { return value; });
}

int OccupancyMap::update_coarse(const MortonCode& code, float delta) {
    return apply_coarse(code, [delta](float old) { return old + delta; });
}

void OccupancyMap::overwrite_subtree(Node& node, int depth, float value, std::uint32_t color) {
    if (Node* ch = node.children_.load(std::memory_order_relaxed); ch != nullptr) {
        for (int i = 0; i < 8; ++i) {
            overwrite_subtree(ch[i], depth - 1, value, color);
        }
    }
    node.value_.store(value, std::memory_order_relaxed);
    node.meta_.store(color, std::memory_order_relaxed);
    refresh(node, depth);
}

std::size_t OccupancyMap::prune_recursive(Node& node, int depth) {
    Node* ch = node.children_.load(std::memory_order_relaxed);
    if (ch == nullptr) {
        return 0;
    }
    std::size_t removed = 0;
    for (int i = 0; i < 8; ++i) {
        removed += prune_recursive(ch[i], depth - 1);
    }
    refresh(node, depth);
    if ((node.meta() & Node::kAllSame) != 0) {
        removed += free_children(node);
        refresh_childless(node, depth);
    }
    return removed;
}

std::size_t OccupancyMap::prune() { return prune_recursive(*root_, depth_levels()); }

namespace {

void count_nodes(const Node& node, int depth, TreeStats& stats) {
    if (depth == 0) {
        ++stats.leaf;
        return;
    }
    const Node* ch = node.children();
    if (ch == nullptr) {
        ++stats.inner_leaf;
        return;
    }
    ++stats.inner;
    for (int i = 0; i < 8; ++i) {
        count_nodes(ch[i], depth - 1, stats);
    }
}

bool same_subtree(const Node& a, const Node& b) {
    if (std::bit_cast<std::uint32_t>(a.value()) != std::bit_cast<std::uint32_t>(b.value()) ||
        a.color() != b.color()) {
        return false;
    }
    const Node* ca = a.children();
    const Node* cb = b.children();
    if ((ca == nullptr) != (cb == nullptr)) {
        return false;
    }
    if (ca == nullptr) {
        return true;
    }
    for (int i = 0; i < 8; ++i) {
        if (!same_subtree(ca[i], cb[i])) {
            return false;
        }
    }
    return true;
}

}  // namespace

TreeStats OccupancyMap::stats() const {
    TreeStats s;
    count_nodes(*root_, depth_levels(), s);
    return s;
}

bool OccupancyMap::same_tree(const OccupancyMap& other) const {
    return geometry_ == other.geometry_ && same_subtree(*root_, *other.root_);
}

}  // namespace omap
