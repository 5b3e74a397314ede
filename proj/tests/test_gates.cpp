#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gatecircuits/evaluation.hpp"

using namespace gatecircuits;

namespace {

// Two AND gates, one OR gate, adder sink: rich enough for misalignment tests.
std::unique_ptr<AnalyticModel> planted_net() {
    GateNetworkSpec spec;
    spec.gates = {{"B1", GateKind::And, {"S1", "S2", "S3"}},
                  {"B2", GateKind::And, {"S4", "S5", "S6"}},
                  {"B3", GateKind::Or, {"S7", "S8", "S9"}},
                  {"C", GateKind::Adder, {"B1", "B2", "B3"}}};
    spec.sink = "C";
    return AnalyticModel::gate_network(spec);
}

Circuit planted_label_set(const AnalyticModel& m, GateKind kind) {
    std::vector<EdgeIndex> members;
    for (const auto& pg : m.planted_gates())
        if (pg.kind == kind)
            for (EdgeIndex e : pg.member_edges) members.push_back(e);
    return Circuit(m.graph(), std::move(members));
}

}  // namespace

TEST_CASE("classification is the set-operation definition") {
    auto net = make_fig2_network();
    const auto& g = net->graph();
    Circuit a(g, {0, 1, 2});
    Circuit b(g, {1, 2, 3});
    auto lab = classify_gates(a, b);
    CHECK(lab.and_edges.members() == std::vector<EdgeIndex>{0});
    CHECK(lab.adder_edges.members() == std::vector<EdgeIndex>{1, 2});
    CHECK(lab.or_edges.members() == std::vector<EdgeIndex>{3});

    auto same = classify_gates(a, a);
    CHECK(same.and_edges.size() == 0);
    CHECK(same.or_edges.size() == 0);
    CHECK(same.adder_edges == a);
}

TEST_CASE("mismatched graphs are rejected; unequal sizes only warn") {
    auto net = make_fig2_network();
    auto toy = AnalyticModel::gate_toy(GateKind::And);
    CHECK_THROWS_AS(classify_gates(Circuit::full(net->graph()), Circuit::full(toy->graph())),
                    std::invalid_argument);
    auto lab = classify_gates(Circuit(net->graph(), {0, 1, 2}), Circuit(net->graph(), {2}));
    CHECK(lab.size_mismatch);
}

TEST_CASE("partition and symmetry properties") {
    auto net = planted_net();
    const auto& g = net->graph();
    Rng rng(19);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<EdgeIndex> ma, mb;
        for (EdgeIndex e = 0; e < g.edge_count(); ++e) {
            if (rng.uniform() < 0.5) ma.push_back(e);
            if (rng.uniform() < 0.5) mb.push_back(e);
        }
        Circuit a(g, ma), b(g, mb);
        auto lab = classify_gates(a, b);
        // the three label sets partition the union
        CHECK(lab.all() == circuit_union(a, b));
        CHECK(lab.and_edges.size() + lab.or_edges.size() + lab.adder_edges.size() ==
              circuit_union(a, b).size());
        CHECK(circuit_intersection(lab.and_edges, lab.or_edges).size() == 0);
        CHECK(circuit_intersection(lab.and_edges, lab.adder_edges).size() == 0);
        // swapping arguments swaps AND and OR and fixes ADDER
        auto swapped = classify_gates(b, a);
        CHECK(swapped.and_edges == lab.or_edges);
        CHECK(swapped.or_edges == lab.and_edges);
        CHECK(swapped.adder_edges == lab.adder_edges);
    }
}

TEST_CASE("oracle-discovered pair on the two-gate network classifies exactly") {
    auto net = make_fig2_network();
    auto ctx = build_context(*net, gate_canonical_dataset(*net));
    auto faithful = minimal_subset_oracle(ctx, Metric::SinkAbsDiff, OracleMode::Faithful);
    auto complete = minimal_subset_oracle(ctx, Metric::SinkAbsDiff, OracleMode::Complete);
    // cores: the edges present in every tied minimal subset
    auto lab = classify_gates(faithful.core, complete.core);
    CHECK(lab.and_edges.members() ==
          std::vector<EdgeIndex>{net->edge("A1", "B1"), net->edge("A2", "B1")});
    CHECK(lab.or_edges.members() ==
          std::vector<EdgeIndex>{net->edge("A3", "B2"), net->edge("A4", "B2")});
    CHECK(lab.adder_edges.contains(net->edge("B1", "C")));
    CHECK(lab.adder_edges.contains(net->edge("B2", "C")));
    CHECK(lab.adder_edges.contains(net->trunk_edge()));
}

TEST_CASE("group_gates") {
    auto net = make_fig2_network();
    const auto& g = net->graph();
    SUBCASE("two AND edges into one receiver form one gate") {
        GateLabeling lab;
        lab.and_edges = Circuit(g, {net->edge("A1", "B1"), net->edge("A2", "B1")});
        lab.or_edges = Circuit::empty(g);
        lab.adder_edges = Circuit::empty(g);
        auto gates = group_gates(lab, g);
        REQUIRE(gates.size() == 1);
        CHECK(gates[0].label == GateLabel::And);
        CHECK(gates[0].members.size() == 2);
        CHECK(gates[0].receiver == net->node("B1"));
    }
    SUBCASE("singleton gates are permitted") {
        GateLabeling lab;
        lab.and_edges = Circuit::empty(g);
        lab.or_edges = Circuit::empty(g);
        lab.adder_edges = Circuit(g, {net->trunk_edge()});
        auto gates = group_gates(lab, g);
        REQUIRE(gates.size() == 1);
        CHECK(gates[0].members.size() == 1);
    }
    SUBCASE("mixed labels at one receiver split into distinct gates") {
        GateLabeling lab;
        lab.and_edges = Circuit(g, {net->edge("B1", "C")});
        lab.adder_edges = Circuit(g, {net->edge("B2", "C")});
        lab.or_edges = Circuit::empty(g);
        auto gates = group_gates(lab, g);
        CHECK(gates.size() == 2);
    }
}

TEST_CASE("oracle cores reproduce planted labels on random networks") {
    Rng rng(77);
    int done = 0;
    for (std::uint64_t attempt = 0; done < 3 && attempt < 20; ++attempt) {
        PlantedNetworkConfig cfg;
        cfg.and_gates = 1;
        cfg.or_gates = 1 + static_cast<int>(rng.uniform_index(2));
        cfg.max_gate_size = 3;
        auto net = make_planted_network(cfg, rng);
        if (net->graph().edge_count() > 12) continue;
        auto ctx = build_context(*net, gate_canonical_dataset(*net));
        auto faithful = minimal_subset_oracle(ctx, Metric::SinkAbsDiff, OracleMode::Faithful);
        auto complete = minimal_subset_oracle(ctx, Metric::SinkAbsDiff, OracleMode::Complete);
        auto lab = classify_gates(faithful.core, complete.core);
        for (const auto& pg : net->planted_gates()) {
            for (EdgeIndex e : pg.member_edges) {
                if (pg.kind == GateKind::And && lab.all().contains(e)) CHECK(lab.and_edges.contains(e));
                if (pg.kind == GateKind::Or && lab.all().contains(e)) CHECK(lab.or_edges.contains(e));
                if (pg.kind == GateKind::Adder && lab.all().contains(e)) CHECK(lab.adder_edges.contains(e));
            }
        }
        ++done;
    }
    CHECK(done == 3);
}

TEST_CASE("pure planted AND set scores near zero misalignment") {
    auto net = planted_net();
    auto ctx = build_context(*net, gate_canonical_dataset(*net));
    SamplerConfig sampler;
    sampler.samples = 20;
    sampler.size_min = 2;
    sampler.size_max = 4;
    auto c_and = planted_label_set(*net, GateKind::And);
    double pure = misalignment_and(ctx, c_and, sampler, Metric::SinkAbsDiff);
    CHECK(std::abs(pure) < 0.05);

    SUBCASE("single-edge set is rejected") {
        Circuit one(net->graph(), {c_and.members()[0]});
        CHECK_THROWS_AS(misalignment_and(ctx, one, sampler, Metric::SinkAbsDiff), std::invalid_argument);
    }
    SUBCASE("adder pollution raises the score strictly") {
        auto polluted = circuit_union(c_and, planted_label_set(*net, GateKind::Adder));
        double dirty = misalignment_and(ctx, polluted, sampler, Metric::SinkAbsDiff);
        CHECK(dirty > pure + 1e-6);
    }
}

TEST_CASE("pure planted OR set scores about m") {
    // Gate sizes exceed the sampler budget plus a pair, so no removal in the
    // statistic ever silences a gate and the two expectations cancel exactly.
    GateNetworkSpec spec;
    spec.gates = {{"B1", GateKind::Or, {"S1", "S2", "S3", "S4", "S5", "S6"}},
                  {"B2", GateKind::Or, {"T1", "T2", "T3", "T4", "T5", "T6"}},
                  {"C", GateKind::Adder, {"B1", "B2"}}};
    spec.sink = "C";
    auto net = AnalyticModel::gate_network(spec);
    auto ctx = build_context(*net, gate_canonical_dataset(*net));
    SamplerConfig sampler;
    sampler.samples = 20;
    sampler.size_min = 2;
    sampler.size_max = 3;
    auto c_or = planted_label_set(*net, GateKind::Or);

    double with_m = misalignment_or(ctx, c_or, sampler, Metric::SinkAbsDiff, 1.5);
    double without = misalignment_or(ctx, c_or, sampler, Metric::SinkAbsDiff, 0.0);
    CHECK(with_m - without == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(with_m == doctest::Approx(1.5).epsilon(0.05));
}

TEST_CASE("adder pollution raises the OR misalignment score strictly") {
    // Smaller OR gates: single removals stay free but pair removals are not,
    // which is the regime where misfiled adder edges register.
    GateNetworkSpec spec;
    spec.gates = {{"B1", GateKind::Or, {"S1", "S2", "S3"}},
                  {"B2", GateKind::Or, {"S4", "S5", "S6"}},
                  {"B3", GateKind::And, {"S7", "S8"}},
                  {"B4", GateKind::And, {"S9", "S10"}},
                  {"C", GateKind::Adder, {"B1", "B2", "B3", "B4", "S11", "S12"}}};
    spec.sink = "C";
    auto net = AnalyticModel::gate_network(spec);
    auto ctx = build_context(*net, gate_canonical_dataset(*net));
    SamplerConfig sampler;
    sampler.samples = 30;
    sampler.size_min = 2;
    sampler.size_max = 3;
    sampler.seed = 1;
    auto c_or = planted_label_set(*net, GateKind::Or);
    double pure = misalignment_or(ctx, c_or, sampler, Metric::SinkAbsDiff, 1.5);

    std::vector<EdgeIndex> members = c_or.members();
    members.push_back(net->edge("B1", "C"));
    members.push_back(net->edge("B2", "C"));
    double dirty = misalignment_or(ctx, Circuit(net->graph(), members), sampler, Metric::SinkAbsDiff, 1.5);
    CHECK(dirty > pure + 0.1);
}
