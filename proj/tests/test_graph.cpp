#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "gatecircuits/analytic.hpp"
#include "gatecircuits/graph.hpp"

using namespace gatecircuits;

namespace {

Circuit make_circuit(const ComputationalGraph& g, std::initializer_list<EdgeIndex> members) {
    return Circuit(g, std::vector<EdgeIndex>(members));
}

Circuit random_circuit(const ComputationalGraph& g, Rng& rng) {
    std::vector<EdgeIndex> members;
    for (std::size_t e = 0; e < g.edge_count(); ++e)
        if (rng.uniform() < 0.5) members.push_back(static_cast<EdgeIndex>(e));
    return Circuit(g, std::move(members));
}

}  // namespace

TEST_CASE("toy graph has the expected nodes and edges") {
    auto toy = AnalyticModel::gate_toy(GateKind::And);
    const auto& g = toy->graph();
    CHECK(g.node_count() == 5);
    CHECK(g.edge_count() == 5);
    std::set<std::string> names;
    for (const auto& e : g.edges()) names.insert(edge_name(e));
    CHECK(names == std::set<std::string>{"input->a0.0", "input->a0.1", "a0.0->m0", "a0.1->m0", "m0->output"});
}

TEST_CASE("empty gate network spec is rejected") {
    GateNetworkSpec spec;
    CHECK_THROWS_WITH_AS(AnalyticModel::gate_network(spec), "gate network: no output node",
                         std::invalid_argument);
}

TEST_CASE("two-gate adder network wires sources, gates, and trunk") {
    auto net = make_fig2_network();
    const auto& g = net->graph();
    // 4 source edges, 2 adder edges into the sink, and the sink->output trunk
    CHECK(g.edge_count() == 7);
    CHECK(g.node_count() == 8);
    CHECK(net->planted_gates().size() == 3);
    CHECK(g.edges()[net->trunk_edge()].receiver.kind == NodeKind::Output);
    // canonical names resolvable both ways
    auto c = Circuit::full(g);
    auto names = circuit_edge_names(g, c);
    CHECK(circuit_from_edge_names(g, names) == c);
}

TEST_CASE("graph construction rejects cycles and dead nodes") {
    NodeId a{NodeKind::Input, 0, 0};
    NodeId b{NodeKind::GateNode, 1, 0};
    NodeId c{NodeKind::GateNode, 1, 1};
    NodeId out{NodeKind::Output, 2, 0};
    SUBCASE("cycle") {
        CHECK_THROWS_AS(ComputationalGraph({a, b, c, out}, {{a, b}, {b, c}, {c, b}, {b, out}}),
                        std::invalid_argument);
    }
    SUBCASE("unreachable non-input node") {
        CHECK_THROWS_AS(ComputationalGraph({a, b, c, out}, {{a, b}, {b, out}, {c, out}}),
                        std::invalid_argument);
    }
    SUBCASE("node that cannot reach output") {
        NodeId d{NodeKind::GateNode, 1, 2};
        CHECK_THROWS_AS(ComputationalGraph({a, b, d, out}, {{a, b}, {b, out}, {a, d}}),
                        std::invalid_argument);
    }
    SUBCASE("no output") {
        CHECK_THROWS_AS(ComputationalGraph({a, b}, {{a, b}}), std::invalid_argument);
    }
    SUBCASE("self edge") {
        CHECK_THROWS_AS(ComputationalGraph({a, b, out}, {{a, b}, {b, b}, {b, out}}), std::invalid_argument);
    }
}

TEST_CASE("build is deterministic for a given spec") {
    auto g1 = make_fig2_network();
    auto g2 = make_fig2_network();
    CHECK(g1->graph().id() == g2->graph().id());
    REQUIRE(g1->graph().edge_count() == g2->graph().edge_count());
    for (std::size_t e = 0; e < g1->graph().edge_count(); ++e)
        CHECK(edge_name(g1->graph().edges()[e]) == edge_name(g2->graph().edges()[e]));
}

TEST_CASE("circuit set algebra") {
    auto net = make_fig2_network();
    const auto& g = net->graph();
    auto a = make_circuit(g, {0, 1, 2});
    auto b = make_circuit(g, {1, 2, 3});
    CHECK(circuit_difference(a, b).members() == std::vector<EdgeIndex>{0});
    CHECK(circuit_intersection(a, b).members() == std::vector<EdgeIndex>{1, 2});
    CHECK(circuit_union(a, b).members() == std::vector<EdgeIndex>{0, 1, 2, 3});
    CHECK(circuit_difference(a, a).size() == 0);
    CHECK(circuit_complement(g, Circuit::full(g)).size() == 0);

    auto other = AnalyticModel::gate_toy(GateKind::And);
    CHECK_THROWS_AS(circuit_union(a, Circuit::full(other->graph())), std::invalid_argument);
}

TEST_CASE("difference/intersection/difference partition the union") {
    auto net = make_fig2_network();
    const auto& g = net->graph();
    Rng rng(41);
    for (int rep = 0; rep < 200; ++rep) {
        auto a = random_circuit(g, rng);
        auto b = random_circuit(g, rng);
        auto d1 = circuit_difference(a, b);
        auto inter = circuit_intersection(a, b);
        auto d2 = circuit_difference(b, a);
        auto u = circuit_union(a, b);
        CHECK(d1.size() + inter.size() + d2.size() == u.size());
        CHECK(circuit_union(circuit_union(d1, inter), d2) == u);
        CHECK(circuit_intersection(d1, inter).size() == 0);
        CHECK(circuit_intersection(d1, d2).size() == 0);
        CHECK(circuit_intersection(inter, d2).size() == 0);
    }
}

TEST_CASE("hamming distance") {
    auto net = make_fig2_network();
    const auto& g = net->graph();
    auto a = make_circuit(g, {0, 1});
    auto b = make_circuit(g, {1, 2});
    CHECK(hamming_distance(a, a) == 0);
    CHECK(hamming_distance(a, b) == 2);
    CHECK(hamming_distance(make_circuit(g, {0}), Circuit::empty(g)) == 1);

    Rng rng(7);
    for (int rep = 0; rep < 200; ++rep) {
        auto x = random_circuit(g, rng);
        auto y = random_circuit(g, rng);
        auto z = random_circuit(g, rng);
        std::size_t xy = hamming_distance(x, y);
        CHECK(xy == hamming_distance(y, x));
        CHECK(xy == x.size() + y.size() - 2 * circuit_intersection(x, y).size());
        CHECK(xy <= hamming_distance(x, z) + hamming_distance(z, y));
        CHECK((xy == 0) == (x == y));
    }
}

TEST_CASE("random subcircuit sampling") {
    auto net = make_fig2_network();
    const auto& g = net->graph();
    std::vector<EdgeIndex> ten;
    for (EdgeIndex e = 0; e < 7; ++e) ten.push_back(e);
    Circuit c(g, ten);

    SUBCASE("deterministic under a fixed seed and size in range") {
        Rng r1(7), r2(7);
        auto s1 = random_subcircuit(c, 2, 5, r1);
        auto s2 = random_subcircuit(c, 2, 5, r2);
        CHECK(s1 == s2);
        CHECK(s1.size() >= 2);
        CHECK(s1.size() <= 5);
        for (EdgeIndex e : s1.members()) CHECK(c.contains(e));
    }
    SUBCASE("zero size range") {
        Rng r(3);
        CHECK(random_subcircuit(c, 0, 0, r).size() == 0);
    }
    SUBCASE("range above circuit size") {
        Rng r(3);
        CHECK_THROWS_AS(random_subcircuit(c, 8, 9, r), std::invalid_argument);
    }
}

TEST_CASE("circuit serialization is canonical") {
    auto net = make_fig2_network();
    const auto& g = net->graph();
    auto a = make_circuit(g, {4, 0, 2});
    auto names = circuit_edge_names(g, a);
    CHECK(std::is_sorted(a.members().begin(), a.members().end()));
    CHECK(names.size() == 3);
    // same members in any construction order serialize identically
    auto b = make_circuit(g, {2, 4, 0});
    CHECK(circuit_edge_names(g, b) == names);
}
