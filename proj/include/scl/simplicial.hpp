#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <string>
#include <vector>

namespace scl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

// A signed value per oriented edge of a complex.
using EdgeFlow = Eigen::VectorXd;

// Oriented simplicial complex of dimension <= 2. Edges are stored as
// (tail, head) with tail < head, triangles as strictly increasing triples;
// both lists are kept sorted lexicographically, so simplex indices are
// canonical for a given vertex numbering.
struct SimplicialComplex2 {
    int num_vertices = 0;
    std::vector<std::array<int, 2>> edges;
    std::vector<std::array<int, 3>> triangles;

    int num_edges() const { return static_cast<int>(edges.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }

    // Index of the edge {u, v} in either vertex order, or -1 if absent.
    int edge_index(int u, int v) const;
};

struct IncidenceMatrices {
    SpMat b1;  // num_vertices x num_edges, -1 at tail / +1 at head
    SpMat b2;  // num_edges x num_triangles, +1 +1 -1 on (ij, jk, ik)
};

struct HodgeLaplacians {
    SpMat l0;      // B1 B1^T
    SpMat l1_low;  // B1^T B1
    SpMat l1_up;   // B2 B2^T
    SpMat l1;      // l1_low + l1_up
    SpMat l2;      // B2^T B2
};

// Canonicalizes, sorts and validates the given simplices. Vertices inside a
// simplex must be distinct, simplices must be unique, and every edge of
// every triangle must itself be listed.
SimplicialComplex2 build_complex(int num_vertices,
                                 std::vector<std::array<int, 2>> edges,
                                 std::vector<std::array<int, 3>> triangles);

IncidenceMatrices incidence_matrices(const SimplicialComplex2& sc);

HodgeLaplacians hodge_laplacians(const IncidenceMatrices& inc);

// JSON round trip: {"num_vertices": n, "edges": [[t,h],...], "triangles": [...]}.
// Serialization is byte-stable for a given complex.
std::string complex_to_json(const SimplicialComplex2& sc);
SimplicialComplex2 complex_from_json(const std::string& text);

}  // namespace scl
