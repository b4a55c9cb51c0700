#include "omap/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace omap {

namespace {

template <class T>
void put_le(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    out.append(bytes.data(), bytes.size());
}

class ByteReader {
public:
    explicit ByteReader(std::istream& in) : in_(in) {}

    template <class T>
    T get(const char* what) {
        std::array<char, sizeof(T)> bytes;
        in_.read(bytes.data(), sizeof(T));
        if (in_.gcount() != static_cast<std::streamsize>(sizeof(T))) {
            throw ParseError(std::string("truncated map stream while reading ") + what +
                                 " at byte offset " + std::to_string(offset_),
                             offset_);
        }
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(bytes.begin(), bytes.end());
        }
        T value;
        std::memcpy(&value, bytes.data(), sizeof(T));
        offset_ += sizeof(T);
        return value;
    }

    [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

private:
    std::istream& in_;
    std::size_t offset_ = 0;
};

class RecordWriter {
public:
    RecordWriter(std::ostream& sink, bool color) : sink_(sink), color_(color) {
        buffer_.reserve(kChunk + 16);
    }

    void node(const Node& n, int depth) {
        const Node* ch = depth > 0 ? n.children() : nullptr;
        put_le(buffer_, n.value());
        buffer_.push_back(static_cast<char>(ch != nullptr ? 1 : 0));
        if (color_) {
            const Color c = n.color();
            buffer_.push_back(static_cast<char>(c.r));
            buffer_.push_back(static_cast<char>(c.g));
            buffer_.push_back(static_cast<char>(c.b));
        }
        if (buffer_.size() >= kChunk) {
            flush();
        }
        if (ch != nullptr) {
            for (int i = 0; i < 8; ++i) {
                node(ch[i], depth - 1);
            }
        }
    }

    void flush() {
        sink_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
        if (!sink_) {
            throw std::ios_base::failure("map sink write failed");
        }
        written_ += buffer_.size();
        buffer_.clear();
    }

    [[nodiscard]] std::size_t written() const noexcept { return written_; }

private:
    static constexpr std::size_t kChunk = 1 << 20;
    std::ostream& sink_;
    bool color_;
    std::string buffer_;
    std::size_t written_ = 0;
};

}  // namespace

std::size_t write_map(const OccupancyMap& map, std::ostream& sink) {
    const auto& cfg = map.config();
    std::string header;
    header.append(kMapMagic, sizeof(kMapMagic));
    put_le(header, map.geometry().resolution());
    put_le(header, static_cast<std::uint8_t>(map.depth_levels()));
    put_le(header, static_cast<float>(cfg.t_free));
    put_le(header, static_cast<float>(cfg.t_occ));
    put_le(header, cfg.clamp_min);
    put_le(header, cfg.clamp_max);
    put_le(header, static_cast<std::uint8_t>(map.color_enabled() ? 1 : 0));
    put_le(header, static_cast<std::uint64_t>(map.node_count()));

    sink.write(header.data(), static_cast<std::streamsize>(header.size()));
    if (!sink) {
        throw std::ios_base::failure("map sink write failed");
    }
    RecordWriter writer(sink, map.color_enabled());
    writer.node(map.root(), map.depth_levels());
    writer.flush();
    return header.size() + writer.written();
}

class MapBuilder {
public:
    MapBuilder(OccupancyMap& map, ByteReader& in, std::vector<std::string>& warnings)
        : map_(map), in_(in), warnings_(warnings) {}

    void node(Node& n, int depth) {
        const std::size_t at = in_.offset();
        const float value = in_.get<float>("node value");
        if (!std::isfinite(value)) {
            throw ParseError("non-finite node value at byte offset " + std::to_string(at), at);
        }
        const std::size_t flag_at = in_.offset();
        const auto flags = in_.get<std::uint8_t>("node flags");
        if ((flags & ~1u) != 0) {
            throw ParseError("unknown node flag bits at byte offset " + std::to_string(flag_at),
                             flag_at);
        }
        std::uint32_t color = 0;
        if (map_.color_enabled()) {
            const Color c{in_.get<std::uint8_t>("color"), in_.get<std::uint8_t>("color"),
                          in_.get<std::uint8_t>("color")};
            color = Node::pack_color(c);
        }
        ++records_;
        const bool has_children = (flags & 1u) != 0;
        if (has_children && depth == 0) {
            throw ParseError("leaf record claims children at byte offset " + std::to_string(at), at);
        }
        n.meta_.store(color, std::memory_order_relaxed);
        if (!has_children) {
            const float clamped = map_.clamp(value);
            if (clamped != value) {
                warnings_.push_back("value outside clamp bounds repaired at byte offset " +
                                    std::to_string(at));
            }
            n.value_.store(clamped, std::memory_order_relaxed);
            map_.refresh_childless(n, depth);
            return;
        }
        auto* block = new Node[8];
        n.children_.store(block, std::memory_order_release);
        map_.blocks_.fetch_add(1, std::memory_order_relaxed);
        for (int i = 0; i < 8; ++i) {
            node(block[i], depth - 1);
        }
        map_.refresh(n, depth);
        if (std::bit_cast<std::uint32_t>(n.value()) != std::bit_cast<std::uint32_t>(value)) {
            warnings_.push_back("inner value differs from max of children, repaired at byte offset " +
                                std::to_string(at));
        }
    }

    void build() { node(*map_.root_, map_.depth_levels()); }

    [[nodiscard]] std::uint64_t records() const noexcept { return records_; }

private:
    OccupancyMap& map_;
    ByteReader& in_;
    std::vector<std::string>& warnings_;
    std::uint64_t records_ = 0;
};

LoadedMap read_map(std::istream& source, bool auto_prune) {
    ByteReader in(source);
    std::array<char, sizeof(kMapMagic)> magic{};
    for (char& c : magic) {
        c = static_cast<char>(in.get<std::uint8_t>("magic"));
    }
    if (std::memcmp(magic.data(), kMapMagic, sizeof(kMapMagic)) != 0) {
        throw ParseError("bad magic at byte offset 0", 0);
    }
    const std::size_t res_at = in.offset();
    const auto resolution = in.get<double>("resolution");
    const std::size_t levels_at = in.offset();
    const auto levels = in.get<std::uint8_t>("depth levels");
    const std::size_t cfg_at = in.offset();
    OccupancyConfig cfg;
    cfg.t_free = in.get<float>("t_free");
    cfg.t_occ = in.get<float>("t_occ");
    cfg.clamp_min = in.get<float>("clamp_min");
    cfg.clamp_max = in.get<float>("clamp_max");
    const std::size_t flags_at = in.offset();
    const auto flags = in.get<std::uint8_t>("header flags");
    const auto node_count = in.get<std::uint64_t>("node count");

    if (!(resolution > 0.0) || !std::isfinite(resolution)) {
        throw ParseError("invalid resolution at byte offset " + std::to_string(res_at), res_at);
    }
    if (levels < 1 || levels > kMaxDepthLevels) {
        throw ParseError("invalid depth levels at byte offset " + std::to_string(levels_at),
                         levels_at);
    }
    if ((flags & ~1u) != 0) {
        throw ParseError("unknown header flag bits at byte offset " + std::to_string(flags_at),
                         flags_at);
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("invalid occupancy config at byte offset ") +
                             std::to_string(cfg_at) + ": " + e.what(),
                         cfg_at);
    }

    LoadedMap loaded{OccupancyMap(TreeGeometry(resolution, levels), cfg, auto_prune,
                                  (flags & 1u) != 0),
                     {}};
    const std::size_t body_at = in.offset();
    MapBuilder builder(loaded.map, in, loaded.warnings);
    builder.build();
    if (builder.records() != node_count) {
        throw ParseError("header node count " + std::to_string(node_count) + " disagrees with " +
                             std::to_string(builder.records()) + " records starting at byte offset " +
                             std::to_string(body_at),
                         body_at);
    }
    return loaded;
}

void save_map(const OccupancyMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::ios_base::failure("cannot open " + path.string() + " for writing");
    }
    write_map(map, out);
}

LoadedMap load_map(const std::filesystem::path& path, bool auto_prune) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::ios_base::failure("cannot open " + path.string());
    }
    return read_map(in, auto_prune);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
            ++i;
        }
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') {
            ++i;
        }
        if (i > start) {
            fields.push_back(line.substr(start, i - start));
        }
    }
    return fields;
}

double parse_double(std::string_view s, std::size_t line) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw ParseError("line " + std::to_string(line) + ": bad number '" + std::string(s) + "'",
                         line);
    }
    return v;
}

std::uint8_t parse_channel(std::string_view s, std::size_t line) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v < 0 || v > 255) {
        throw ParseError("line " + std::to_string(line) + ": bad color channel '" +
                             std::string(s) + "'",
                         line);
    }
    return static_cast<std::uint8_t>(v);
}

}  // namespace

Scan read_scan(std::istream& source) {
    Scan scan;
    bool have_origin = false;
    int colored = -1;
    std::string line;
    std::size_t number = 0;
    while (std::getline(source, line)) {
        ++number;
        const auto fields = split_fields(line);
        if (fields.empty() || fields[0].front() == '#') {
            continue;
        }
        if (!have_origin) {
            if (fields.size() != 4 || fields[0] != "ORIGIN") {
                throw ParseError("line " + std::to_string(number) + ": expected 'ORIGIN x y z'",
                                 number);
            }
            scan.origin = {parse_double(fields[1], number), parse_double(fields[2], number),
                           parse_double(fields[3], number)};
            have_origin = true;
            continue;
        }
        if (fields.size() != 3 && fields.size() != 6) {
            throw ParseError("line " + std::to_string(number) + ": expected 3 or 6 fields",
                             number);
        }
        const int has_color = fields.size() == 6 ? 1 : 0;
        if (colored >= 0 && colored != has_color) {
            throw ParseError("line " + std::to_string(number) + ": mixed colored and plain points",
                             number);
        }
        colored = has_color;
        scan.points.emplace_back(parse_double(fields[0], number), parse_double(fields[1], number),
                                 parse_double(fields[2], number));
        if (has_color) {
            scan.colors.push_back({parse_channel(fields[3], number),
                                   parse_channel(fields[4], number),
                                   parse_channel(fields[5], number)});
        }
    }
    if (!have_origin) {
        throw ParseError("line 1: missing ORIGIN line", 1);
    }
    return scan;
}

Scan load_scan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::ios_base::failure("cannot open " + path.string());
    }
    return read_scan(in);
}

void write_csv_stats(const std::vector<StatsRow>& rows, std::ostream& sink) {
    sink << kStatsHeader << '\n';
    for (const auto& r : rows) {
        sink << r.scan << ',' << r.method << ',' << r.total_ms << ',' << r.raytrace_ms << ','
             << r.insert_ms << ',' << r.cells_freed << ',' << r.cells_occupied << ','
             << r.nodes_total << ',' << r.nodes_leaf << ',' << r.bytes_model << '\n';
    }
    if (!sink) {
        throw std::ios_base::failure("stats sink write failed");
    }
}

}  // namespace omap
