#include "support.hpp"

#include "omap/io.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace omap;

namespace {

std::string bytes(const OccupancyMap& m) {
    std::ostringstream out;
    write_map(m, out);
    return out.str();
}

Scan random_scan(const TreeGeometry& geo, std::mt19937_64& rng, int points) {
    Scan s;
    s.origin = testing::random_point(geo, rng, geo.resolution());
    for (int i = 0; i < points; ++i) {
        s.points.push_back(testing::random_point(geo, rng, geo.resolution()));
    }
    return s;
}

IntegratorConfig method(IntegratorMethod m, int n = 0, int d = 0) {
    IntegratorConfig c;
    c.method = m;
    c.fast_n = n;
    c.fast_depth = d;
    return c;
}

}  // namespace

TEST_CASE("simple and discrete agree at cell centers") {
    const TreeGeometry geo(0.1, 8);
    Scan s;
    s.origin = {0.03, 0.01, -0.02};
    s.points = {key_to_coord(coord_to_key({1.23, -0.71, 0.4}, geo), geo)};
    OccupancyMap a(geo);
    OccupancyMap b(geo);
    integrate(a, s, method(IntegratorMethod::simple));
    integrate(b, s, method(IntegratorMethod::discrete));
    CHECK(a.same_tree(b));
}

TEST_CASE("fast with n=0 d=0 is the discrete integrator") {
    const TreeGeometry geo(0.1, 6);
    std::mt19937_64 rng(8);
    for (int i = 0; i < 20; ++i) {
        const Scan s = random_scan(geo, rng, 200);
        OccupancyMap a(geo);
        OccupancyMap b(geo);
        integrate(a, s, method(IntegratorMethod::discrete));
        integrate(b, s, method(IntegratorMethod::fast_discrete, 0, 0));
        CHECK(bytes(a) == bytes(b));
    }
}

TEST_CASE("discrete integration matches the dense oracle") {
    const TreeGeometry geo(0.1, 5);
    std::mt19937_64 rng(12);
    for (int i = 0; i < 10; ++i) {
        OccupancyMap m(geo);
        testing::DenseGrid grid(geo, m.config());
        for (int k = 0; k < 3; ++k) {
            const Scan s = random_scan(geo, rng, 100);
            integrate(m, s, method(IntegratorMethod::discrete));
            grid.integrate_discrete(s);
        }
        const auto got = testing::snapshot(m);
        bool same = true;
        grid.for_each_key([&](const VoxelKey& k) { same = same && grid.at(k) == got.at(k); });
        CHECK(same);
    }
}

TEST_CASE("integration is deterministic") {
    const TreeGeometry geo(0.1, 6);
    std::mt19937_64 rng(13);
    const Scan s = random_scan(geo, rng, 300);
    for (auto cfg : {method(IntegratorMethod::simple), method(IntegratorMethod::discrete),
                     method(IntegratorMethod::fast_discrete, 1, 2)}) {
        OccupancyMap a(geo);
        OccupancyMap b(geo);
        integrate(a, s, cfg);
        integrate(b, s, cfg);
        CHECK(bytes(a) == bytes(b));
    }
}

TEST_CASE("region restricts every update") {
    const TreeGeometry geo(0.1, 6);
    std::mt19937_64 rng(14);
    for (int i = 0; i < 10; ++i) {
        const Scan s = random_scan(geo, rng, 100);
        for (auto cfg : {method(IntegratorMethod::discrete), method(IntegratorMethod::fast_discrete, 1, 2)}) {
            cfg.region = Aabb{{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}};
            OccupancyMap m(geo);
            integrate(m, s, cfg);
            bool inside = true;
            testing::snapshot(m).for_each_key([&](const VoxelKey& k) {
                if (m.get_node(encode(k)).state != NodeState::unknown) {
                    inside = inside && cfg.region->contains(cell_box(k, geo));
                }
            });
            CHECK(inside);
        }
    }
}

TEST_CASE("max range keeps far points out") {
    const TreeGeometry geo(0.1, 6);
    Scan s;
    s.origin = {0.05, 0.05, 0.05};
    s.points = {{2.05, 0.05, 0.05}};
    IntegratorConfig cfg;
    cfg.max_range = 1.0;
    OccupancyMap m(geo);
    integrate(m, s, cfg);
    CHECK(m.get_node(Vec3(2.05, 0.05, 0.05)).state == NodeState::unknown);
    CHECK(m.get_node(Vec3(0.55, 0.05, 0.05)).state == NodeState::free);
}

TEST_CASE("malformed scans") {
    const TreeGeometry geo(0.1, 4);
    OccupancyMap m(geo);
    Scan s;
    s.points = {{0.1, 0.1, 0.1}};
    s.colors = {Color{1, 2, 3}, Color{4, 5, 6}};
    CHECK_THROWS_AS(integrate(m, s, {}), std::invalid_argument);
    s.colors.clear();
    s.origin = {10, 0, 0};
    CHECK_THROWS_AS(integrate(m, s, {}), std::domain_error);
    s.origin = {0, 0, 0};
    CHECK_THROWS_AS(integrate(m, s, method(IntegratorMethod::fast_discrete, 0, 4)), std::invalid_argument);
    CHECK_THROWS_AS(integrate(m, s, method(IntegratorMethod::fast_discrete, -1, 1)), std::invalid_argument);
}

TEST_CASE("points outside the extent clear toward the border") {
    const TreeGeometry geo(0.1, 4);
    OccupancyMap m(geo);
    Scan s;
    s.origin = {0.05, 0.05, 0.05};
    s.points = {{3.0, 0.05, 0.05}};
    CHECK_NOTHROW(integrate(m, s, {}));
    CHECK(m.get_node(Vec3(0.65, 0.05, 0.05)).state == NodeState::free);
}
