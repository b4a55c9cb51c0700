#pragma once

#include "omap/integrator.hpp"
#include "omap/occupancy_map.hpp"

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace omap {

/// Malformed input. `position()` is a byte offset for map files and a
/// 1-based line number for scan files.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what), position_(position) {}
    [[nodiscard]] std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

inline constexpr char kMapMagic[5] = {'U', 'F', 'O', 'S', '1'};
inline constexpr std::size_t kMapHeaderSize = 5 + 8 + 1 + 4 * 4 + 1 + 8;

/// Writes the header followed by one record per node in Morton preorder.
/// Returns the number of bytes written; throws std::ios_base::failure when the
/// sink fails.
std::size_t write_map(const OccupancyMap& map, std::ostream& sink);

struct LoadedMap {
    OccupancyMap map;
    std::vector<std::string> warnings;
};

/// Rebuilds a map, recomputing inner values and indicators from the leaves.
/// Throws ParseError naming the byte offset of the problem.
[[nodiscard]] LoadedMap read_map(std::istream& source, bool auto_prune = true);

void save_map(const OccupancyMap& map, const std::filesystem::path& path);
[[nodiscard]] LoadedMap load_map(const std::filesystem::path& path, bool auto_prune = true);

/// "ORIGIN x y z" followed by "x y z" or "x y z r g b" lines. Throws
/// ParseError naming the line.
[[nodiscard]] Scan read_scan(std::istream& source);
[[nodiscard]] Scan load_scan(const std::filesystem::path& path);

struct StatsRow {
    std::string scan;
    std::string method;
    double total_ms = 0.0;
    double raytrace_ms = 0.0;
    double insert_ms = 0.0;
    std::size_t cells_freed = 0;
    std::size_t cells_occupied = 0;
    std::size_t nodes_total = 0;
    std::size_t nodes_leaf = 0;
    std::size_t bytes_model = 0;
};

inline constexpr const char* kStatsHeader =
    "scan,method,total_ms,raytrace_ms,insert_ms,cells_freed,cells_occupied,nodes_total,"
    "nodes_leaf,bytes_model";

void write_csv_stats(const std::vector<StatsRow>& rows, std::ostream& sink);

}  // namespace omap
