#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gatecircuits/analytic.hpp"
#include "gatecircuits/intervention.hpp"

using namespace gatecircuits;

namespace {

// Output of a toy with the given head edges ablated (frozen-zero Ns patch).
double toy_output(const AnalyticModel& m, bool ablate_a1, bool ablate_a2) {
    auto ctx = build_context(m, toy_dataset(m));
    std::vector<EdgeIndex> members;
    for (EdgeIndex e = 0; e < m.graph().edge_count(); ++e) {
        if (e == m.edge("A1", "m") && ablate_a1) continue;
        if (e == m.edge("A2", "m") && ablate_a2) continue;
        members.push_back(e);
    }
    Circuit retained(m.graph(), std::move(members));
    return patched_output(ctx, ctx.pairs[0], retained, Strategy::Ns)[0];
}

}  // namespace

TEST_CASE("AND toy truth table") {
    auto m = AnalyticModel::gate_toy(GateKind::And);
    CHECK(toy_output(*m, false, false) == doctest::Approx(1.0));
    CHECK(toy_output(*m, true, false) == doctest::Approx(0.0));
    CHECK(toy_output(*m, false, true) == doctest::Approx(0.0));
    CHECK(toy_output(*m, true, true) == doctest::Approx(0.0));
}

TEST_CASE("OR toy truth table") {
    auto m = AnalyticModel::gate_toy(GateKind::Or);
    CHECK(toy_output(*m, false, false) == doctest::Approx(1.0));
    CHECK(toy_output(*m, true, false) == doctest::Approx(1.0));
    CHECK(toy_output(*m, false, true) == doctest::Approx(1.0));
    CHECK(toy_output(*m, true, true) == doctest::Approx(0.0));
}

TEST_CASE("ADDER toy outputs 2.5 / 1.5 / 1.0 / 0.0") {
    auto m = AnalyticModel::gate_toy(GateKind::Adder);
    CHECK(toy_output(*m, false, false) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(toy_output(*m, true, false) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(toy_output(*m, false, true) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(toy_output(*m, true, true) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("toy forward: zero input makes head outputs equal biases") {
    auto m = AnalyticModel::gate_toy(GateKind::And);
    auto cache = m->forward(m->example_all(0.0));
    // m-node input is bias1 + bias2 = 2, output relu(2-1) = 1
    CHECK(cache.edge_values[m->edge("A1", "m")][0] == doctest::Approx(1.0));
    CHECK(cache.edge_values[m->edge("A2", "m")][0] == doctest::Approx(1.0));
    CHECK(cache.logits[0] == doctest::Approx(1.0));
}

TEST_CASE("gate network semantics on the two-gate adder network") {
    auto net = make_fig2_network();
    const auto& g = net->graph();
    auto ctx = build_context(*net, gate_canonical_dataset(*net));
    const auto& pc = ctx.pairs[0];

    SUBCASE("all sources clean: B1=1, B2=1, C=2") {
        auto cache = net->forward(net->example_all(1.0));
        CHECK(cache.node_values[g.topo_pos(net->node("B1"))][0] == doctest::Approx(1.0));
        CHECK(cache.node_values[g.topo_pos(net->node("B2"))][0] == doctest::Approx(1.0));
        CHECK(cache.node_values[g.topo_pos(net->node("C"))][0] == doctest::Approx(2.0));
        CHECK(cache.logits[0] == doctest::Approx(2.0));
    }
    SUBCASE("ablating one OR edge keeps B2 and C intact") {
        auto retained = circuit_difference(Circuit::full(g), Circuit(g, {net->edge("A3", "B2")}));
        CHECK(patched_output(ctx, pc, retained, Strategy::Ns)[0] == doctest::Approx(2.0));
    }
    SUBCASE("ablating one AND edge kills B1: C drops to 1") {
        auto retained = circuit_difference(Circuit::full(g), Circuit(g, {net->edge("A1", "B1")}));
        CHECK(patched_output(ctx, pc, retained, Strategy::Ns)[0] == doctest::Approx(1.0));
    }
    SUBCASE("all sources corrupted: every node value is 0") {
        auto cache = net->forward(net->example_all(0.0));
        for (const auto& nv : cache.node_values) CHECK(nv[0] == doctest::Approx(0.0));
    }
}

TEST_CASE("adder nodes count clean parents") {
    GateNetworkSpec spec;
    spec.gates = {{"B", GateKind::Adder, {"S1", "S2", "S3", "S4"}}};
    auto net = AnalyticModel::gate_network(spec);
    Rng rng(11);
    for (int rep = 0; rep < 16; ++rep) {
        Example in;
        int clean = 0;
        for (int i = 0; i < 4; ++i) {
            double v = rng.uniform() < 0.5 ? 1.0 : 0.0;
            clean += v > 0.5;
            in.values.push_back(v);
        }
        auto cache = net->forward(in);
        CHECK(cache.node_values[net->graph().topo_pos(net->node("B"))][0] == doctest::Approx(clean));
    }
}

TEST_CASE("gate truth table enumerates all source assignments") {
    auto net = make_fig2_network();
    auto ds = gate_truth_table_dataset(*net);
    CHECK(ds.pairs.size() == 16);
    for (const auto& pair : ds.pairs) CHECK(pair.clean_label != pair.corrupted_label);
}

TEST_CASE("analytic cache satisfies the combination invariant") {
    auto net = make_fig2_network();
    const auto& g = net->graph();
    auto cache = net->forward(net->example_all(1.0));
    for (const auto& pg : net->planted_gates()) {
        int pos = g.topo_pos(pg.receiver);
        double expect = pg.kind == GateKind::And ? 1e300 : (pg.kind == GateKind::Or ? -1e300 : 0.0);
        for (EdgeIndex e : g.in_edges(pos)) {
            double v = cache.edge_values[e][0];
            if (pg.kind == GateKind::And) expect = std::min(expect, v);
            else if (pg.kind == GateKind::Or) expect = std::max(expect, v);
            else expect += v;
        }
        CHECK(cache.node_values[pos][0] == doctest::Approx(expect));
    }
}

TEST_CASE("analytic edge gradients follow the one-sided convention") {
    SUBCASE("ADDER toy, loss = output value, clean run: head-edge grads are 1") {
        auto m = AnalyticModel::gate_toy(GateKind::Adder);
        auto ctx = build_context(*m, toy_dataset(*m));
        auto grads = m->edge_gradients_at(ns_plan(ctx, ctx.pairs[0]), Circuit::full(m->graph()),
                                          LossSpec{LossSpec::Kind::SinkValue, -1, -1}, GradSide::Decrease);
        CHECK(grads.grads[m->edge("A1", "m")][0] == doctest::Approx(1.0));
        CHECK(grads.grads[m->edge("A2", "m")][0] == doctest::Approx(1.0));
    }
    SUBCASE("OR toy at the clean point has zero head-edge grads (saturated)") {
        auto m = AnalyticModel::gate_toy(GateKind::Or);
        auto ctx = build_context(*m, toy_dataset(*m));
        auto grads = m->edge_gradients_at(ns_plan(ctx, ctx.pairs[0]), Circuit::full(m->graph()),
                                          LossSpec{LossSpec::Kind::SinkValue, -1, -1}, GradSide::Decrease);
        CHECK(grads.grads[m->edge("A1", "m")][0] == doctest::Approx(0.0));
        CHECK(grads.grads[m->edge("A2", "m")][0] == doctest::Approx(0.0));
    }
    SUBCASE("constant-output model has all-zero gradients") {
        // AND toy with one head already ablated is constant in the other head
        auto m = AnalyticModel::gate_toy(GateKind::And);
        auto ctx = build_context(*m, toy_dataset(*m));
        auto retained = circuit_difference(Circuit::full(m->graph()), Circuit(m->graph(), {m->edge("A1", "m")}));
        auto grads = m->edge_gradients_at(ns_plan(ctx, ctx.pairs[0]), retained,
                                          LossSpec{LossSpec::Kind::SinkValue, -1, -1}, GradSide::Decrease);
        CHECK(grads.grads[m->edge("A2", "m")][0] == doctest::Approx(0.0));
    }
}
