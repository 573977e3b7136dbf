#include "scl/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "scl/error.hpp"

namespace scl {

namespace {

bool spans_overlap(int a0, int a1, int b0, int b1) { return a0 < b1 && b0 < a1; }
bool spans_touch_or_overlap(int a0, int a1, int b0, int b1) { return a0 <= b1 && b0 <= a1; }

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    throw UnknownLabel("split_name: invalid split value");
}

Split split_from_string(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw UnknownLabel("unknown split tag '" + name + "'");
}

int TrajectoryMap::vertex_at(int row, int col) const {
    std::array<int, 2> key{row, col};
    auto it = std::lower_bound(vertex_coords.begin(), vertex_coords.end(), key);
    if (it == vertex_coords.end() || *it != key) return -1;
    return static_cast<int>(it - vertex_coords.begin());
}

TrajectoryMap build_two_hole_map(const TriangularGridSpec& spec) {
    const int rows = spec.rows;
    const int cols = spec.cols;
    if (rows < 1 || cols < 1)
        throw IndexOutOfRange("build_two_hole_map: grid must have at least one cell");

    for (const auto& h : spec.holes) {
        if (h.height < 1 || h.width < 1)
            throw InvalidHolePlacement("hole with non-positive extent");
        if (h.row < 1 || h.col < 1 || h.row + h.height > rows - 1 || h.col + h.width > cols - 1)
            throw InvalidHolePlacement("hole at (" + std::to_string(h.row) + ", " +
                                       std::to_string(h.col) +
                                       ") must be strictly interior to the grid");
    }
    for (std::size_t i = 0; i < spec.holes.size(); ++i) {
        for (std::size_t j = i + 1; j < spec.holes.size(); ++j) {
            const auto& a = spec.holes[i];
            const auto& b = spec.holes[j];
            const bool rows_ov = spans_overlap(a.row, a.row + a.height, b.row, b.row + b.height);
            const bool cols_ov = spans_overlap(a.col, a.col + a.width, b.col, b.col + b.width);
            const bool rows_tc = spans_touch_or_overlap(a.row, a.row + a.height, b.row, b.row + b.height);
            const bool cols_tc = spans_touch_or_overlap(a.col, a.col + a.width, b.col, b.col + b.width);
            // Sharing a cell or a cell edge merges the holes into one; only
            // corner contact keeps their cycles independent.
            if ((rows_ov && cols_tc) || (rows_tc && cols_ov))
                throw InvalidHolePlacement("holes " + std::to_string(i) + " and " +
                                           std::to_string(j) + " overlap or share a cell edge");
        }
    }

    std::vector<std::vector<bool>> hole(static_cast<std::size_t>(rows),
                                        std::vector<bool>(static_cast<std::size_t>(cols), false));
    for (const auto& h : spec.holes)
        for (int r = h.row; r < h.row + h.height; ++r)
            for (int c = h.col; c < h.col + h.width; ++c)
                hole[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = true;

    auto cell_intact = [&](int r, int c) {
        return r >= 0 && r < rows && c >= 0 && c < cols &&
               !hole[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    };
    const int vcols = cols + 1;
    auto vid = [&](int r, int c) { return r * vcols + c; };

    std::vector<std::array<int, 2>> raw_edges;
    // Horizontal edges keep the cell below (same row) or above them alive.
    for (int r = 0; r <= rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (cell_intact(r, c) || cell_intact(r - 1, c))
                raw_edges.push_back({vid(r, c), vid(r, c + 1)});
    // Vertical edges: cell to the right (same col) or to the left.
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c <= cols; ++c)
            if (cell_intact(r, c) || cell_intact(r, c - 1))
                raw_edges.push_back({vid(r, c), vid(r + 1, c)});
    // Anti-diagonals exist only inside their own cell.
    std::vector<std::array<int, 3>> raw_triangles;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (!cell_intact(r, c)) continue;
            raw_edges.push_back({vid(r, c + 1), vid(r + 1, c)});
            raw_triangles.push_back({vid(r, c), vid(r, c + 1), vid(r + 1, c)});
            raw_triangles.push_back({vid(r, c + 1), vid(r + 1, c), vid(r + 1, c + 1)});
        }
    }

    // Renumber surviving vertices in (row, col) order; vertices interior to
    // a hole lose all their edges and disappear.
    std::vector<int> remap(static_cast<std::size_t>((rows + 1) * vcols), -1);
    for (const auto& e : raw_edges) {
        remap[static_cast<std::size_t>(e[0])] = 0;
        remap[static_cast<std::size_t>(e[1])] = 0;
    }
    TrajectoryMap map;
    map.spec = spec;
    int next = 0;
    for (int r = 0; r <= rows; ++r) {
        for (int c = 0; c <= vcols - 1; ++c) {
            if (remap[static_cast<std::size_t>(vid(r, c))] == 0) {
                remap[static_cast<std::size_t>(vid(r, c))] = next++;
                map.vertex_coords.push_back({r, c});
            }
        }
    }
    for (auto& e : raw_edges)
        for (int& v : e) v = remap[static_cast<std::size_t>(v)];
    for (auto& t : raw_triangles)
        for (int& v : t) v = remap[static_cast<std::size_t>(v)];

    map.complex = build_complex(next, std::move(raw_edges), std::move(raw_triangles));

    map.neighbors.assign(static_cast<std::size_t>(next), {});
    for (const auto& e : map.complex.edges) {
        map.neighbors[static_cast<std::size_t>(e[0])].push_back(e[1]);
        map.neighbors[static_cast<std::size_t>(e[1])].push_back(e[0]);
    }
    return map;
}

namespace {

// Shortest path under the given per-edge weights.
std::vector<int> dijkstra_path(const TrajectoryMap& map, const std::vector<double>& edge_weight,
                               int from, int to) {
    const int n = map.complex.num_vertices;
    std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    std::vector<int> prev(static_cast<std::size_t>(n), -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> queue;
    dist[static_cast<std::size_t>(from)] = 0.0;
    queue.push({0.0, from});
    while (!queue.empty()) {
        auto [d, u] = queue.top();
        queue.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        if (u == to) break;
        for (int v : map.neighbors[static_cast<std::size_t>(u)]) {
            const int e = map.complex.edge_index(u, v);
            const double nd = d + edge_weight[static_cast<std::size_t>(e)];
            if (nd < dist[static_cast<std::size_t>(v)]) {
                dist[static_cast<std::size_t>(v)] = nd;
                prev[static_cast<std::size_t>(v)] = u;
                queue.push({nd, v});
            }
        }
    }
    if (!std::isfinite(dist[static_cast<std::size_t>(to)]))
        throw NoPath("no route between vertices " + std::to_string(from) + " and " +
                     std::to_string(to));
    std::vector<int> path;
    for (int v = to; v != -1; v = prev[static_cast<std::size_t>(v)]) path.push_back(v);
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace

LabeledFlow generate_trajectory(const TrajectoryMap& map, int class_id, Rng& rng) {
    if (class_id != 0 && class_id != 1)
        throw UnknownLabel("generate_trajectory: class must be 0 or 1, got " +
                           std::to_string(class_id));
    if (map.spec.holes.size() != 2)
        throw InvalidHolePlacement("trajectory routing expects exactly two holes");

    auto holes = map.spec.holes;
    std::sort(holes.begin(), holes.end(),
              [](const HoleRect& a, const HoleRect& b) { return a.col < b.col; });
    const HoleRect& left = holes.front();
    const HoleRect& right = holes.back();

    const int rows = map.spec.rows;
    const int cols = map.spec.cols;

    auto pick_existing = [&](int row, int col_lo, int col_hi) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            const int c = col_lo + static_cast<int>(rng.uniform_index(
                                       static_cast<std::size_t>(col_hi - col_lo + 1)));
            const int v = map.vertex_at(row, c);
            if (v >= 0) return v;
        }
        throw NoPath("no available vertex on row " + std::to_string(row));
    };

    const int start = pick_existing(0, 0, cols);
    const int goal = pick_existing(rows, 0, cols);
    const int wp_row = class_id == 0 ? left.row + left.height / 2 : right.row + right.height / 2;
    const int waypoint = class_id == 0 ? pick_existing(wp_row, 0, left.col)
                                       : pick_existing(wp_row, right.col + right.width, cols);

    // Fresh random weights per trajectory make the routes wander. The spread
    // has to be large: near-uniform weights give near-geodesic paths whose raw
    // flows are trivially separable, and the walk detours they cause are the
    // gradient and curl clutter the encoders are supposed to strip away.
    std::vector<double> weight(static_cast<std::size_t>(map.complex.num_edges()));
    for (double& w : weight) w = 1.0 + 4.0 * rng.uniform();

    std::vector<int> verts = dijkstra_path(map, weight, start, waypoint);
    std::vector<int> second = dijkstra_path(map, weight, waypoint, goal);
    verts.insert(verts.end(), second.begin() + 1, second.end());

    // Splice out loops so that the walk is a simple path.
    std::vector<int> simple;
    std::vector<int> pos(static_cast<std::size_t>(map.complex.num_vertices), -1);
    for (int v : verts) {
        if (pos[static_cast<std::size_t>(v)] >= 0) {
            while (static_cast<int>(simple.size()) > pos[static_cast<std::size_t>(v)] + 1) {
                pos[static_cast<std::size_t>(simple.back())] = -1;
                simple.pop_back();
            }
        } else {
            pos[static_cast<std::size_t>(v)] = static_cast<int>(simple.size());
            simple.push_back(v);
        }
    }

    LabeledFlow out;
    out.label = class_id;
    out.flow = EdgeFlow::Zero(map.complex.num_edges());
    for (std::size_t i = 0; i + 1 < simple.size(); ++i) {
        const int u = simple[i];
        const int v = simple[i + 1];
        const int e = map.complex.edge_index(u, v);
        if (e < 0) throw NoPath("path uses a missing edge");  // cannot happen
        out.flow(e) = u < v ? 1.0 : -1.0;
    }
    return out;
}

std::vector<LabeledFlow> generate_dataset(const TrajectoryMap& map, int n_train, int n_val,
                                          int n_test, Rng& rng) {
    if (n_train < 0 || n_val < 0 || n_test < 0)
        throw IndexOutOfRange("generate_dataset: negative split size");
    std::vector<LabeledFlow> flows;
    flows.reserve(static_cast<std::size_t>(n_train + n_val + n_test));
    const std::pair<Split, int> plan[] = {{Split::Train, n_train}, {Split::Val, n_val},
                                          {Split::Test, n_test}};
    for (const auto& [split, count] : plan) {
        Rng stream = rng.derive(split_name(split) + "-flows");
        for (int k = 0; k < count; ++k) {
            LabeledFlow f = generate_trajectory(map, k % 2, stream);
            f.split = split;
            flows.push_back(std::move(f));
        }
    }
    return flows;
}

void save_dataset(const std::string& path, const SimplicialComplex2& complex,
                  const std::vector<LabeledFlow>& flows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open dataset for writing: " + path);
    out << complex_to_json(complex) << '\n';
    for (const auto& f : flows) {
        if (f.flow.size() != complex.num_edges())
            throw DimensionMismatch("save_dataset: flow has " + std::to_string(f.flow.size()) +
                                    " entries, complex " + std::to_string(complex.num_edges()) +
                                    " edges");
        out << R"({"flow":[)";
        for (Eigen::Index i = 0; i < f.flow.size(); ++i) {
            if (i) out << ',';
            out << format_double(f.flow(i));
        }
        out << R"(],"label":)" << f.label << R"(,"split":")" << split_name(f.split) << "\"}\n";
    }
}

LoadedDataset load_external_flows(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open dataset: " + path);

    LoadedDataset data;
    std::string line;
    int line_no = 0;
    bool have_complex = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (!have_complex) {
            data.complex = complex_from_json(line);
            have_complex = true;
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
        LabeledFlow f;
        try {
            auto values = j.at("flow").get<std::vector<double>>();
            f.flow = Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
            f.label = j.at("label").get<int>();
            f.split = split_from_string(j.at("split").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
        if (f.label != 0 && f.label != 1)
            throw UnknownLabel("dataset line " + std::to_string(line_no) + ": label " +
                               std::to_string(f.label));
        if (f.flow.size() != data.complex.num_edges())
            throw DimensionMismatch("dataset line " + std::to_string(line_no) + ": flow has " +
                                    std::to_string(f.flow.size()) + " entries, complex " +
                                    std::to_string(data.complex.num_edges()) + " edges");
        data.flows.push_back(std::move(f));
    }
    if (!have_complex) throw ParseError("dataset file " + path + " is empty");
    return data;
}

std::vector<int> indices_of_split(const std::vector<LabeledFlow>& flows, Split split) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < flows.size(); ++i)
        if (flows[i].split == split) idx.push_back(static_cast<int>(i));
    return idx;
}

}  // namespace scl
