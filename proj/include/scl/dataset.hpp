#pragma once

#include <array>
#include <string>
#include <vector>

#include "scl/rng.hpp"
#include "scl/simplicial.hpp"

namespace scl {

// Axis-aligned block of grid cells removed from the map. Coordinates are
// cell coordinates; a hole spans cell rows [row, row+height) and cell
// columns [col, col+width).
struct HoleRect {
    int row = 0;
    int col = 0;
    int height = 1;
    int width = 1;
};

// A rows x cols grid of unit cells, each split into two triangles along its
// anti-diagonal, with rectangular holes knocked out. Every hole contributes
// one independent harmonic dimension.
struct TriangularGridSpec {
    int rows = 0;
    int cols = 0;
    std::vector<HoleRect> holes;
};

enum class Split { Train, Val, Test };

std::string split_name(Split s);
Split split_from_string(const std::string& name);

struct LabeledFlow {
    EdgeFlow flow;
    int label = 0;
    Split split = Split::Train;
};

// The complex plus the vertex geometry needed to route trajectories.
struct TrajectoryMap {
    TriangularGridSpec spec;
    SimplicialComplex2 complex;
    std::vector<std::array<int, 2>> vertex_coords;     // (row, col) per vertex
    std::vector<std::vector<int>> neighbors;           // adjacency over surviving edges
    int vertex_at(int row, int col) const;             // -1 when absent
};

// Builds the holed grid complex. Holes must be strictly interior, at least
// one intact cell away from the boundary and from each other; otherwise
// InvalidHolePlacement.
TrajectoryMap build_two_hole_map(const TriangularGridSpec& spec);

// One simple path from the bottom row to the top row, detouring through a
// waypoint left of the left hole (class 0) or right of the right hole
// (class 1). The flow is +-1 on traversed edges, signed by edge
// orientation, so its divergence is +1 at the endpoint, -1 at the start
// and 0 elsewhere.
LabeledFlow generate_trajectory(const TrajectoryMap& map, int class_id, Rng& rng);

// Balanced trajectory datasets with per-split class alternation.
std::vector<LabeledFlow> generate_dataset(const TrajectoryMap& map, int n_train, int n_val,
                                          int n_test, Rng& rng);

// JSONL dataset files: the first line is the complex, each further line one
// flow record {"flow": [...], "label": 0|1, "split": "train"|"val"|"test"}.
void save_dataset(const std::string& path, const SimplicialComplex2& complex,
                  const std::vector<LabeledFlow>& flows);

struct LoadedDataset {
    SimplicialComplex2 complex;
    std::vector<LabeledFlow> flows;
};

// Reads a dataset produced by save_dataset or by an external tool following
// the same schema; validates labels, split tags and flow lengths.
LoadedDataset load_external_flows(const std::string& path);

std::vector<int> indices_of_split(const std::vector<LabeledFlow>& flows, Split split);

}  // namespace scl
