#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "scl/dataset.hpp"
#include "scl/error.hpp"
#include "scl/hodge.hpp"
#include "scl/rng.hpp"
#include "scl/simplicial.hpp"
#include "scl/svm.hpp"

using namespace scl;
using scl::testing::dense;
using scl::testing::rational_rank;

namespace {

TriangularGridSpec two_hole_spec() { return {6, 6, {{2, 1, 1, 1}, {2, 4, 1, 1}}}; }

int harmonic_dimension_by_rank(const SimplicialComplex2& sc) {
    const IncidenceMatrices inc = incidence_matrices(sc);
    const int n1 = sc.num_edges();
    return n1 - rational_rank(dense(inc.b1)) - rational_rank(dense(inc.b2));
}

}  // namespace

TEST_CASE("split names round trip") {
    for (Split s : {Split::Train, Split::Val, Split::Test})
        CHECK(split_from_string(split_name(s)) == s);
    CHECK(split_name(Split::Train) == "train");
    CHECK(split_name(Split::Val) == "val");
    CHECK(split_name(Split::Test) == "test");
    CHECK_THROWS_AS(split_from_string("validation"), UnknownLabel);
}

TEST_CASE("one harmonic dimension per hole") {
    const TrajectoryMap none = build_two_hole_map({3, 3, {}});
    const TrajectoryMap one = build_two_hole_map({5, 5, {{2, 2, 1, 1}}});
    const TrajectoryMap two = build_two_hole_map(two_hole_spec());

    for (const auto* m : {&none, &one, &two}) {
        const HodgeBasis basis = hodge_basis(hodge_laplacians(incidence_matrices(m->complex)));
        const int holes = static_cast<int>(m->spec.holes.size());
        CHECK(basis.dim_harm() == holes);
        CHECK(harmonic_dimension_by_rank(m->complex) == holes);
    }
}

TEST_CASE("a full grid has the expected simplex counts") {
    const TrajectoryMap map = build_two_hole_map({2, 3, {}});
    // (rows+1)(cols+1) vertices; horizontal + vertical + one diagonal per cell.
    CHECK(map.complex.num_vertices == 12);
    CHECK(map.complex.num_edges() == 3 * 3 + 2 * 4 + 6);
    CHECK(map.complex.num_triangles() == 2 * 6);
}

TEST_CASE("hole placement is validated") {
    CHECK_THROWS_AS(build_two_hole_map({0, 4, {}}), IndexOutOfRange);
    // Holes touching the outer boundary.
    CHECK_THROWS_AS(build_two_hole_map({6, 6, {{0, 2, 1, 1}}}), InvalidHolePlacement);
    CHECK_THROWS_AS(build_two_hole_map({6, 6, {{2, 0, 1, 1}}}), InvalidHolePlacement);
    CHECK_THROWS_AS(build_two_hole_map({6, 6, {{4, 2, 2, 1}}}), InvalidHolePlacement);
    CHECK_THROWS_AS(build_two_hole_map({6, 6, {{2, 4, 1, 2}}}), InvalidHolePlacement);
    // Degenerate extent.
    CHECK_THROWS_AS(build_two_hole_map({6, 6, {{2, 2, 0, 1}}}), InvalidHolePlacement);
    // Overlapping and edge-sharing hole pairs.
    CHECK_THROWS_AS(build_two_hole_map({8, 8, {{2, 2, 2, 2}, {3, 3, 2, 2}}}),
                    InvalidHolePlacement);
    CHECK_THROWS_AS(build_two_hole_map({6, 6, {{2, 1, 1, 1}, {2, 2, 1, 1}}}),
                    InvalidHolePlacement);
    // Corner contact keeps the cycles independent and is allowed.
    const TrajectoryMap corner = build_two_hole_map({6, 6, {{1, 1, 1, 1}, {2, 2, 1, 1}}});
    const HodgeBasis basis = hodge_basis(hodge_laplacians(incidence_matrices(corner.complex)));
    CHECK(basis.dim_harm() == 2);
}

TEST_CASE("vertex lookup agrees with the stored coordinates") {
    const TrajectoryMap map = build_two_hole_map({6, 6, {{2, 2, 2, 2}}});
    for (int v = 0; v < map.complex.num_vertices; ++v)
        CHECK(map.vertex_at(map.vertex_coords[static_cast<std::size_t>(v)][0],
                            map.vertex_coords[static_cast<std::size_t>(v)][1]) == v);
    CHECK(map.vertex_at(-1, 0) == -1);
    CHECK(map.vertex_at(0, 99) == -1);
    // The single vertex strictly inside the 2x2 hole is gone.
    CHECK(map.vertex_at(3, 3) == -1);
}

TEST_CASE("trajectories are unit-flow simple paths from bottom to top") {
    const TrajectoryMap map = build_two_hole_map(two_hole_spec());
    const IncidenceMatrices inc = incidence_matrices(map.complex);
    Rng rng(5);
    for (int k = 0; k < 40; ++k) {
        const int cls = k % 2;
        const LabeledFlow f = generate_trajectory(map, cls, rng);
        CHECK(f.label == cls);
        REQUIRE(f.flow.size() == map.complex.num_edges());

        int nonzero = 0;
        for (Eigen::Index e = 0; e < f.flow.size(); ++e) {
            const double v = f.flow(e);
            CHECK((v == 0.0 || v == 1.0 || v == -1.0));
            if (v != 0.0) ++nonzero;
        }
        CHECK(nonzero >= map.spec.rows);

        // A simple path's divergence is +1 at its endpoint, -1 at its start,
        // zero elsewhere; the entries are small integers, so exact.
        const Vec div = dense(inc.b1) * f.flow;
        int plus = 0;
        int minus = 0;
        for (int v = 0; v < map.complex.num_vertices; ++v) {
            if (div(v) == 1.0) {
                ++plus;
                CHECK(map.vertex_coords[static_cast<std::size_t>(v)][0] == map.spec.rows);
            } else if (div(v) == -1.0) {
                ++minus;
                CHECK(map.vertex_coords[static_cast<std::size_t>(v)][0] == 0);
            } else {
                CHECK(div(v) == 0.0);
            }
        }
        CHECK(plus == 1);
        CHECK(minus == 1);
    }
}

TEST_CASE("trajectory generation validates its inputs") {
    const TrajectoryMap no_holes = build_two_hole_map({4, 4, {}});
    Rng rng(6);
    CHECK_THROWS_AS(generate_trajectory(no_holes, 0, rng), InvalidHolePlacement);
    const TrajectoryMap map = build_two_hole_map(two_hole_spec());
    CHECK_THROWS_AS(generate_trajectory(map, 2, rng), UnknownLabel);
    CHECK_THROWS_AS(generate_trajectory(map, -1, rng), UnknownLabel);
}

TEST_CASE("same seed reproduces the same trajectory") {
    const TrajectoryMap map = build_two_hole_map(two_hole_spec());
    Rng a(77);
    Rng b(77);
    for (int k = 0; k < 5; ++k) {
        const LabeledFlow fa = generate_trajectory(map, k % 2, a);
        const LabeledFlow fb = generate_trajectory(map, k % 2, b);
        CHECK(fa.flow == fb.flow);
    }
}

TEST_CASE("harmonic projections separate the two classes") {
    const TrajectoryMap map = build_two_hole_map(two_hole_spec());
    const HodgeBasis basis = hodge_basis(hodge_laplacians(incidence_matrices(map.complex)));
    REQUIRE(basis.dim_harm() == 2);

    Rng rng(2);
    const int per_class = 100;
    std::vector<Vec> train_z, test_z;
    std::vector<int> train_y, test_y;
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < per_class; ++i) {
            const LabeledFlow f = generate_trajectory(map, c, rng);
            Vec e = basis.u_harm.transpose() * f.flow;
            REQUIRE(e.norm() > 1e-12);
            e /= e.norm();
            if (i < per_class / 2) {
                train_z.push_back(e);
                train_y.push_back(c);
            } else {
                test_z.push_back(e);
                test_y.push_back(c);
            }
        }
    }
    Rng fit_rng(2007);
    const LinearSvmModel model = fit_linear_svm(train_z, train_y, 10.0, fit_rng);
    CHECK(svm_accuracy(model, train_z, train_y) >= 0.9);
    CHECK(svm_accuracy(model, test_z, test_y) >= 0.8);
}

TEST_CASE("datasets are balanced per split with alternating labels") {
    const TrajectoryMap map = build_two_hole_map(two_hole_spec());
    Rng rng(8);
    const auto flows = generate_dataset(map, 200, 100, 100, rng);
    REQUIRE(flows.size() == 400);

    for (const auto [split, count] : {std::pair{Split::Train, 200}, {Split::Val, 100},
                                      {Split::Test, 100}}) {
        const auto idx = indices_of_split(flows, split);
        REQUIRE(static_cast<int>(idx.size()) == count);
        int per_class[2] = {0, 0};
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto& f = flows[static_cast<std::size_t>(idx[k])];
            CHECK(f.split == split);
            CHECK(f.label == static_cast<int>(k % 2));
            ++per_class[f.label];
        }
        CHECK(per_class[0] == count / 2);
        CHECK(per_class[1] == count / 2);
    }
}

TEST_CASE("dataset generation is seed-deterministic and seed-sensitive") {
    const TrajectoryMap map = build_two_hole_map(two_hole_spec());
    Rng a(9);
    Rng b(9);
    Rng c(10);
    const auto fa = generate_dataset(map, 10, 4, 4, a);
    const auto fb = generate_dataset(map, 10, 4, 4, b);
    const auto fc = generate_dataset(map, 10, 4, 4, c);
    REQUIRE(fa.size() == fb.size());
    bool all_equal = true;
    bool any_differs_from_c = false;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        all_equal = all_equal && fa[i].flow == fb[i].flow;
        any_differs_from_c = any_differs_from_c || fa[i].flow != fc[i].flow;
    }
    CHECK(all_equal);
    CHECK(any_differs_from_c);
    CHECK_THROWS_AS(generate_dataset(map, -1, 0, 0, a), IndexOutOfRange);
}

TEST_CASE("dataset files round trip exactly") {
    const TrajectoryMap map = build_two_hole_map({4, 4, {{1, 1, 1, 1}, {2, 2, 1, 1}}});
    Rng rng(11);
    const auto flows = generate_dataset(map, 6, 2, 2, rng);
    const std::string path =
        (std::filesystem::temp_directory_path() / "scl_dataset_roundtrip.jsonl").string();
    save_dataset(path, map.complex, flows);
    const LoadedDataset loaded = load_external_flows(path);
    std::remove(path.c_str());

    CHECK(loaded.complex.num_vertices == map.complex.num_vertices);
    CHECK(loaded.complex.edges == map.complex.edges);
    CHECK(loaded.complex.triangles == map.complex.triangles);
    REQUIRE(loaded.flows.size() == flows.size());
    for (std::size_t i = 0; i < flows.size(); ++i) {
        CHECK(loaded.flows[i].flow == flows[i].flow);
        CHECK(loaded.flows[i].label == flows[i].label);
        CHECK(loaded.flows[i].split == flows[i].split);
    }
}

TEST_CASE("saving rejects flows that do not match the complex") {
    const TrajectoryMap map = build_two_hole_map({3, 3, {}});
    std::vector<LabeledFlow> flows(1);
    flows[0].flow = EdgeFlow::Zero(map.complex.num_edges() + 1);
    const std::string path =
        (std::filesystem::temp_directory_path() / "scl_dataset_badsave.jsonl").string();
    CHECK_THROWS_AS(save_dataset(path, map.complex, flows), DimensionMismatch);
    std::remove(path.c_str());
}

TEST_CASE("loading validates records and reports line numbers") {
    CHECK_THROWS_AS(load_external_flows("/nonexistent/dir/data.jsonl"), ParseError);

    const TrajectoryMap map = build_two_hole_map({2, 2, {}});
    const std::string header = complex_to_json(map.complex);
    const int n = map.complex.num_edges();
    const std::string path =
        (std::filesystem::temp_directory_path() / "scl_dataset_bad.jsonl").string();

    auto write_file = [&](const std::vector<std::string>& lines) {
        std::ofstream out(path);
        for (const auto& l : lines) out << l << '\n';
    };
    auto flow_json = [&](int entries) {
        std::string s = R"({"flow":[)";
        for (int i = 0; i < entries; ++i) s += (i ? ",0" : "0");
        return s;
    };

    write_file({});
    CHECK_THROWS_AS(load_external_flows(path), ParseError);

    write_file({header, "not json"});
    try {
        load_external_flows(path);
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    write_file({header, flow_json(n) + R"(],"label":2,"split":"train"})"});
    CHECK_THROWS_AS(load_external_flows(path), UnknownLabel);

    write_file({header, flow_json(n) + R"(],"label":0,"split":"holdout"})"});
    CHECK_THROWS_AS(load_external_flows(path), UnknownLabel);

    write_file({header, flow_json(n - 1) + R"(],"label":0,"split":"train"})"});
    CHECK_THROWS_AS(load_external_flows(path), DimensionMismatch);

    write_file({header, R"({"label":0,"split":"train"})"});
    CHECK_THROWS_AS(load_external_flows(path), ParseError);

    std::remove(path.c_str());
}

TEST_CASE("split index extraction") {
    std::vector<LabeledFlow> flows(5);
    flows[0].split = Split::Train;
    flows[1].split = Split::Test;
    flows[2].split = Split::Train;
    flows[3].split = Split::Val;
    flows[4].split = Split::Test;
    CHECK(indices_of_split(flows, Split::Train) == std::vector<int>{0, 2});
    CHECK(indices_of_split(flows, Split::Val) == std::vector<int>{3});
    CHECK(indices_of_split(flows, Split::Test) == std::vector<int>{1, 4});
}
