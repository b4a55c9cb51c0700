// Build maps from scan directories, benchmark queries on them, and inspect
// single cells.
//
// Exit codes: 0 success, 1 usage or config, 2 I/O or parse, 3 runtime
// precondition failure.

#include "omap/integrator.hpp"
#include "omap/io.hpp"
#include "omap/occupancy_map.hpp"
#include "omap/query.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace omap;

namespace {

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kPrecondition = 3 };

struct Failure {
    int code;
    std::string message;
};

struct BuildOptions {
    std::string scan_dir;
    std::string map_path;
    std::string csv_path;
    double resolution = 0.1;
    int levels = 16;
    std::string integrator = "discrete";
    int fast_n = 0;
    int fast_depth = 0;
    double hit = 0.7;
    double miss = 0.4;
    double clamp_min = 0.12;
    double clamp_max = 0.97;
    double t_free = 0.5;
    double t_occ = 0.5;
    std::string bbox;
    std::string auto_prune = "on";
    bool color = false;
};

struct BenchOptions {
    std::string map_path;
    std::string suite;
    std::string csv_path;
    std::size_t count = 1000;
    std::uint64_t seed = 1;
    double radius = 0.25;
};

struct QueryOptionsCli {
    std::string map_path;
    std::string point;
    int depth = 0;
};

std::vector<double> parse_list(const std::string& text, std::size_t expected, const char* what) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw Failure{kUsage, std::string("bad number in ") + what + ": '" + item + "'"};
        }
    }
    if (values.size() != expected) {
        throw Failure{kUsage, std::string(what) + " needs " + std::to_string(expected) +
                                  " comma-separated values"};
    }
    return values;
}

OccupancyMap load_or_fail(const std::string& path) {
    try {
        auto loaded = load_map(path);
        for (const auto& w : loaded.warnings) {
            std::cerr << path << ": warning: " << w << '\n';
        }
        return std::move(loaded.map);
    } catch (const ParseError& e) {
        throw Failure{kIo, path + ": " + e.what()};
    } catch (const std::ios_base::failure& e) {
        throw Failure{kIo, e.what()};
    }
}

int run_build(const BuildOptions& o) {
    OccupancyConfig cfg;
    std::optional<TreeGeometry> geo;
    IntegratorConfig icfg;
    try {
        cfg = OccupancyConfig::from_probabilities(o.hit, o.miss, o.clamp_min, o.clamp_max,
                                                  o.t_free, o.t_occ);
        geo.emplace(o.resolution, o.levels);
    } catch (const std::invalid_argument& e) {
        throw Failure{kUsage, e.what()};
    }
    if (o.integrator == "simple") {
        icfg.method = IntegratorMethod::simple;
    } else if (o.integrator == "discrete") {
        icfg.method = IntegratorMethod::discrete;
    } else {
        icfg.method = IntegratorMethod::fast_discrete;
    }
    icfg.fast_n = o.fast_n;
    icfg.fast_depth = o.fast_depth;
    if (o.fast_n < 0 || o.fast_depth < 0 || o.fast_depth >= o.levels) {
        throw Failure{kUsage, "--fast-n must be >= 0 and --fast-depth in [0, levels)"};
    }
    if (!o.bbox.empty()) {
        const auto v = parse_list(o.bbox, 6, "--bbox");
        Aabb box{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
        if (box.degenerate()) {
            throw Failure{kUsage, "--bbox must have min < max on every axis"};
        }
        icfg.region = box;
    }

    std::vector<fs::path> scans;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(o.scan_dir, ec)) {
        if (entry.is_regular_file()) {
            scans.push_back(entry.path());
        }
    }
    if (ec) {
        throw Failure{kIo, "cannot read scan directory " + o.scan_dir + ": " + ec.message()};
    }
    std::sort(scans.begin(), scans.end());

    OccupancyMap map(*geo, cfg, o.auto_prune == "on", o.color);
    std::vector<StatsRow> rows;
    for (const auto& path : scans) {
        Scan scan;
        try {
            scan = load_scan(path);
        } catch (const ParseError& e) {
            throw Failure{kIo, path.string() + ":" + std::to_string(e.position()) + ": " + e.what()};
        } catch (const std::ios_base::failure& e) {
            throw Failure{kIo, e.what()};
        }
        IntegrationResult r;
        try {
            r = integrate(map, scan, icfg);
        } catch (const std::domain_error& e) {
            throw Failure{kPrecondition, path.string() + ": " + e.what()};
        } catch (const std::invalid_argument& e) {
            throw Failure{kIo, path.string() + ": " + e.what()};
        }
        const TreeStats st = map.stats();
        rows.push_back({path.filename().string(), to_string(icfg.method),
                        r.raytrace_ms + r.insert_ms, r.raytrace_ms, r.insert_ms, r.cells_freed,
                        r.cells_occupied, st.total(), st.leaf, st.bytes_model()});
    }

    try {
        save_map(map, o.map_path);
        if (!o.csv_path.empty()) {
            std::ofstream csv(o.csv_path);
            if (!csv) {
                throw std::ios_base::failure("cannot open " + o.csv_path);
            }
            write_csv_stats(rows, csv);
        } else {
            write_csv_stats(rows, std::cout);
        }
    } catch (const std::ios_base::failure& e) {
        throw Failure{kIo, e.what()};
    }
    return kOk;
}

/// Bounds of the observed (free or occupied) part of the map.
std::optional<Aabb> known_bounds(const OccupancyMap& map) {
    const double h = map.geometry().half_extent();
    const Aabb all{Vec3::Constant(-h), Vec3::Constant(h)};
    StateFilter filter;
    filter.free = true;
    filter.occupied = true;
    std::optional<Aabb> bounds;
    for_each_node(map, all, filter, 0, [&](const NodeView& v) {
        const Aabb cell = cell_box(decode(v.code), map.geometry());
        if (!bounds) {
            bounds = cell;
        } else {
            bounds->min = bounds->min.cwiseMin(cell.min);
            bounds->max = bounds->max.cwiseMax(cell.max);
        }
    });
    return bounds;
}

Vec3 sample_in(const Aabb& box, std::mt19937_64& rng) {
    Vec3 p;
    for (int j = 0; j < 3; ++j) {
        std::uniform_real_distribution<double> d(box.min[j], box.max[j]);
        p[j] = d(rng);
    }
    return p;
}

std::optional<Vec3> sample_free(const OccupancyMap& map, const Aabb& box, std::mt19937_64& rng) {
    constexpr int kMaxAttempts = 1'000'000;
    for (int i = 0; i < kMaxAttempts; ++i) {
        const Vec3 p = sample_in(box, rng);
        if (map.geometry().contains(p) && map.get_node(p).state == NodeState::free) {
            return p;
        }
    }
    return std::nullopt;
}

template <class F>
auto timed(double& us, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto result = f();
    us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

int run_bench(const BenchOptions& o) {
    if (o.count == 0) {
        throw Failure{kUsage, "--count must be positive"};
    }
    const OccupancyMap map = load_or_fail(o.map_path);
    std::mt19937_64 rng(o.seed);
    std::ofstream file;
    if (!o.csv_path.empty()) {
        file.open(o.csv_path);
        if (!file) {
            throw Failure{kIo, "cannot open " + o.csv_path};
        }
    }
    std::ostream& out = o.csv_path.empty() ? std::cout : file;

    const auto bounds = known_bounds(map);
    if (o.suite == "collision") {
        if (!(o.radius > 0.0)) {
            throw Failure{kUsage, "--radius must be positive"};
        }
        out << "i,x,y,z,conservative,occupied_only,us_conservative,us_occupied_only\n";
        double total_us = 0.0;
        std::size_t collisions = 0;
        for (std::size_t i = 0; i < o.count; ++i) {
            const auto p = bounds ? sample_free(map, *bounds, rng) : std::nullopt;
            if (!p) {
                throw Failure{kPrecondition, "no pose with a free center cell could be sampled"};
            }
            const Sphere s{*p, o.radius};
            double us_c = 0.0;
            double us_o = 0.0;
            const bool c = timed(us_c, [&] { return region_collision(map, s, CollisionMode::conservative); });
            const bool oc = timed(us_o, [&] { return region_collision(map, s, CollisionMode::occupied_only); });
            total_us += us_c;
            collisions += c ? 1 : 0;
            out << i << ',' << p->x() << ',' << p->y() << ',' << p->z() << ',' << c << ',' << oc
                << ',' << us_c << ',' << us_o << '\n';
        }
        std::cerr << "collision: " << total_us / static_cast<double>(o.count) << " us/pose, "
                  << static_cast<double>(collisions) / static_cast<double>(o.count)
                  << " in collision\n";
    } else if (o.suite == "line") {
        if (!bounds) {
            throw Failure{kPrecondition, "map has no observed space to sample segments in"};
        }
        out << "i,x0,y0,z0,x1,y1,z1,conservative,occupied_only,us_conservative,us_occupied_only\n";
        double total_us = 0.0;
        for (std::size_t i = 0; i < o.count; ++i) {
            const Vec3 a = sample_in(*bounds, rng);
            const Vec3 b = sample_in(*bounds, rng);
            double us_c = 0.0;
            double us_o = 0.0;
            const bool c = timed(us_c, [&] { return line_collision(map, a, b, CollisionMode::conservative); });
            const bool oc = timed(us_o, [&] { return line_collision(map, a, b, CollisionMode::occupied_only); });
            total_us += us_c;
            out << i << ',' << a.x() << ',' << a.y() << ',' << a.z() << ',' << b.x() << ','
                << b.y() << ',' << b.z() << ',' << c << ',' << oc << ',' << us_c << ',' << us_o
                << '\n';
        }
        std::cerr << "line: " << total_us / static_cast<double>(o.count) << " us/line\n";
    } else {
        if (!bounds) {
            throw Failure{kPrecondition, "map has no observed space to place sensors in"};
        }
        out << "i,x,y,z,yaw,flat,exact,fast,us_flat,us_exact,us_fast\n";
        std::uniform_real_distribution<double> yaw_dist(-std::numbers::pi, std::numbers::pi);
        for (std::size_t i = 0; i < o.count; ++i) {
            Vec3 p = sample_in(*bounds, rng);
            if (auto free = sample_free(map, *bounds, rng)) {
                p = *free;
            }
            const double yaw = yaw_dist(rng);
            const SensorModel sensor{Pose::from_yaw_pitch(p, yaw), 115.0 * std::numbers::pi / 180.0,
                                     60.0 * std::numbers::pi / 180.0, 0.0, 6.5};
            double us[3] = {0.0, 0.0, 0.0};
            const auto flat = timed(us[0], [&] { return info_gain(map, sensor, InfoGainVariant::flat); });
            const auto exact = timed(us[1], [&] { return info_gain(map, sensor, InfoGainVariant::exact); });
            const auto fast = timed(us[2], [&] { return info_gain(map, sensor, InfoGainVariant::fast); });
            out << i << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << yaw << ',' << flat
                << ',' << exact << ',' << fast << ',' << us[0] << ',' << us[1] << ',' << us[2]
                << '\n';
        }
    }
    return kOk;
}

int run_query(const QueryOptionsCli& o) {
    const auto v = parse_list(o.point, 3, "--point");
    const OccupancyMap map = load_or_fail(o.map_path);
    if (o.depth < 0 || o.depth > map.depth_levels()) {
        throw Failure{kUsage, "--depth must be in [0, " + std::to_string(map.depth_levels()) + "]"};
    }
    const Vec3 p(v[0], v[1], v[2]);
    if (!map.geometry().contains(p)) {
        throw Failure{kIo, "point lies outside the map extent"};
    }
    const NodeView n = map.get_node(p, o.depth);
    std::cout << "state=" << to_string(n.state) << " p=" << n.probability()
              << " depth=" << n.depth() << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Occupancy octree builder, benchmark and query tool"};
    app.require_subcommand(1);

    BuildOptions build;
    auto* cmd_build = app.add_subcommand("build", "Integrate a directory of scans into a map");
    cmd_build->add_option("scan_dir", build.scan_dir, "Directory of scan files")->required();
    cmd_build->add_option("--map", build.map_path, "Output map file")->required();
    cmd_build->add_option("--csv", build.csv_path, "Per-scan stats CSV (stdout if omitted)");
    cmd_build->add_option("--resolution", build.resolution, "Leaf size in meters")->capture_default_str();
    cmd_build->add_option("--levels", build.levels, "Depth levels (1-21)")->capture_default_str();
    cmd_build->add_option("--integrator", build.integrator)
        ->check(CLI::IsMember({"simple", "discrete", "fast"}))
        ->capture_default_str();
    cmd_build->add_option("--fast-n", build.fast_n)->capture_default_str();
    cmd_build->add_option("--fast-depth", build.fast_depth)->capture_default_str();
    cmd_build->add_option("--hit", build.hit, "Hit probability")->capture_default_str();
    cmd_build->add_option("--miss", build.miss, "Miss probability")->capture_default_str();
    cmd_build->add_option("--clamp-min", build.clamp_min, "Lower clamp probability")->capture_default_str();
    cmd_build->add_option("--clamp-max", build.clamp_max, "Upper clamp probability")->capture_default_str();
    cmd_build->add_option("--tf", build.t_free, "Free threshold")->capture_default_str();
    cmd_build->add_option("--to", build.t_occ, "Occupied threshold")->capture_default_str();
    cmd_build->add_option("--bbox", build.bbox, "Integration region x0,y0,z0,x1,y1,z1");
    cmd_build->add_option("--auto-prune", build.auto_prune)
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    cmd_build->add_flag("--color", build.color, "Store per-voxel color");

    BenchOptions bench;
    auto* cmd_bench = app.add_subcommand("bench", "Time queries on a map");
    cmd_bench->add_option("--map", bench.map_path, "Map file")->required();
    cmd_bench->add_option("--suite", bench.suite)
        ->required()
        ->check(CLI::IsMember({"collision", "line", "gain"}));
    cmd_bench->add_option("--count", bench.count)->capture_default_str();
    cmd_bench->add_option("--seed", bench.seed)->capture_default_str();
    cmd_bench->add_option("--radius", bench.radius)->capture_default_str();
    cmd_bench->add_option("--csv", bench.csv_path, "Output CSV (stdout if omitted)");

    QueryOptionsCli query;
    auto* cmd_query = app.add_subcommand("query", "Print the state of one cell");
    cmd_query->add_option("--map", query.map_path, "Map file")->required();
    cmd_query->add_option("--point", query.point, "x,y,z")->required();
    cmd_query->add_option("--depth", query.depth)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (cmd_build->parsed()) {
            return run_build(build);
        }
        if (cmd_bench->parsed()) {
            return run_bench(bench);
        }
        return run_query(query);
    } catch (const Failure& f) {
        std::cerr << "error: " << f.message << '\n';
        return f.code;
    }
}
