#include "scl/simplicial.hpp"

#include <algorithm>
#include <utility>

#include <json.hpp>

#include "scl/error.hpp"

namespace scl {

int SimplicialComplex2::edge_index(int u, int v) const {
    if (u > v) std::swap(u, v);
    std::array<int, 2> key{u, v};
    auto it = std::lower_bound(edges.begin(), edges.end(), key);
    if (it == edges.end() || *it != key) return -1;
    return static_cast<int>(it - edges.begin());
}

SimplicialComplex2 build_complex(int num_vertices,
                                 std::vector<std::array<int, 2>> edges,
                                 std::vector<std::array<int, 3>> triangles) {
    if (num_vertices < 0) throw IndexOutOfRange("negative vertex count");

    auto check_vertex = [&](int v) {
        if (v < 0 || v >= num_vertices)
            throw IndexOutOfRange("vertex " + std::to_string(v) + " out of range [0, " +
                                  std::to_string(num_vertices) + ")");
    };

    for (auto& e : edges) {
        check_vertex(e[0]);
        check_vertex(e[1]);
        if (e[0] == e[1]) throw DuplicateSimplex("edge with repeated vertex " + std::to_string(e[0]));
        if (e[0] > e[1]) std::swap(e[0], e[1]);
    }
    std::sort(edges.begin(), edges.end());
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (edges[i] == edges[i - 1])
            throw DuplicateSimplex("duplicate edge (" + std::to_string(edges[i][0]) + ", " +
                                   std::to_string(edges[i][1]) + ")");
    }

    for (auto& t : triangles) {
        for (int v : t) check_vertex(v);
        std::sort(t.begin(), t.end());
        if (t[0] == t[1] || t[1] == t[2])
            throw DuplicateSimplex("triangle with repeated vertex " + std::to_string(t[1]));
    }
    std::sort(triangles.begin(), triangles.end());
    for (std::size_t i = 1; i < triangles.size(); ++i) {
        if (triangles[i] == triangles[i - 1])
            throw DuplicateSimplex("duplicate triangle (" + std::to_string(triangles[i][0]) + ", " +
                                   std::to_string(triangles[i][1]) + ", " +
                                   std::to_string(triangles[i][2]) + ")");
    }

    SimplicialComplex2 sc;
    sc.num_vertices = num_vertices;
    sc.edges = std::move(edges);
    sc.triangles = std::move(triangles);

    for (const auto& t : sc.triangles) {
        for (auto [u, v] : {std::pair{t[0], t[1]}, std::pair{t[1], t[2]}, std::pair{t[0], t[2]}}) {
            if (sc.edge_index(u, v) < 0)
                throw MissingFace("triangle (" + std::to_string(t[0]) + ", " + std::to_string(t[1]) +
                                  ", " + std::to_string(t[2]) + ") lacks edge (" + std::to_string(u) +
                                  ", " + std::to_string(v) + ")");
        }
    }
    return sc;
}

IncidenceMatrices incidence_matrices(const SimplicialComplex2& sc) {
    const int n0 = sc.num_vertices;
    const int n1 = sc.num_edges();
    const int n2 = sc.num_triangles();

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(2 * n1));
    for (int e = 0; e < n1; ++e) {
        trip.emplace_back(sc.edges[e][0], e, -1.0);
        trip.emplace_back(sc.edges[e][1], e, 1.0);
    }
    IncidenceMatrices inc;
    inc.b1.resize(n0, n1);
    inc.b1.setFromTriplets(trip.begin(), trip.end());

    trip.clear();
    trip.reserve(static_cast<std::size_t>(3 * n2));
    for (int t = 0; t < n2; ++t) {
        const auto& tri = sc.triangles[t];
        trip.emplace_back(sc.edge_index(tri[0], tri[1]), t, 1.0);
        trip.emplace_back(sc.edge_index(tri[1], tri[2]), t, 1.0);
        trip.emplace_back(sc.edge_index(tri[0], tri[2]), t, -1.0);
    }
    inc.b2.resize(n1, n2);
    inc.b2.setFromTriplets(trip.begin(), trip.end());
    return inc;
}

HodgeLaplacians hodge_laplacians(const IncidenceMatrices& inc) {
    HodgeLaplacians lap;
    lap.l0 = inc.b1 * SpMat(inc.b1.transpose());
    lap.l1_low = SpMat(inc.b1.transpose()) * inc.b1;
    lap.l1_up = inc.b2 * SpMat(inc.b2.transpose());
    lap.l1 = lap.l1_low + lap.l1_up;
    lap.l2 = SpMat(inc.b2.transpose()) * inc.b2;
    lap.l0.makeCompressed();
    lap.l1_low.makeCompressed();
    lap.l1_up.makeCompressed();
    lap.l1.makeCompressed();
    lap.l2.makeCompressed();
    return lap;
}

std::string complex_to_json(const SimplicialComplex2& sc) {
    nlohmann::json j;
    j["num_vertices"] = sc.num_vertices;
    j["edges"] = sc.edges;
    j["triangles"] = sc.triangles;
    return j.dump();
}

SimplicialComplex2 complex_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("complex JSON: ") + e.what());
    }
    try {
        int n = j.at("num_vertices").get<int>();
        auto edges = j.at("edges").get<std::vector<std::array<int, 2>>>();
        auto triangles = j.at("triangles").get<std::vector<std::array<int, 3>>>();
        return build_complex(n, std::move(edges), std::move(triangles));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("complex JSON fields: ") + e.what());
    }
}

}  // namespace scl
