#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "gatecircuits/analytic.hpp"
#include "gatecircuits/discovery.hpp"

using namespace gatecircuits;

namespace {

struct ToyLab {
    std::unique_ptr<AnalyticModel> model;
    EvalContext ctx;
    EdgeIndex a1, a2;

    explicit ToyLab(GateKind kind) : model(AnalyticModel::gate_toy(kind)) {
        ctx = build_context(*model, toy_dataset(*model));
        a1 = model->edge("A1", "m");
        a2 = model->edge("A2", "m");
    }

    DiscoveryConfig config(DiscoveryAlgorithm algo, Strategy strategy, std::uint64_t seed = 0) const {
        DiscoveryConfig cfg;
        cfg.algorithm = algo;
        cfg.strategy = strategy;
        cfg.metric = Metric::SinkAbsDiff;
        cfg.seed = seed;
        cfg.candidates = std::vector<EdgeIndex>{a1, a2};
        return cfg;
    }

    int heads_in(const Circuit& c) const { return (c.contains(a1) ? 1 : 0) + (c.contains(a2) ? 1 : 0); }
};

int greedy_heads(GateKind kind, Strategy s, std::uint64_t seed = 0) {
    ToyLab lab(kind);
    auto cfg = lab.config(DiscoveryAlgorithm::Greedy, s, seed);
    cfg.tau = 0.1;
    return lab.heads_in(greedy_discover(lab.ctx, cfg).circuit);
}

int linear_heads(GateKind kind, Strategy s) {
    ToyLab lab(kind);
    auto cfg = lab.config(DiscoveryAlgorithm::Linear, s);
    auto scores = linear_scores(lab.ctx, cfg);
    return (std::abs(scores.values[lab.a1]) >= 0.1 ? 1 : 0) + (std::abs(scores.values[lab.a2]) >= 0.1 ? 1 : 0);
}

int mask_heads(GateKind kind, Strategy s, std::uint64_t seed = 0) {
    ToyLab lab(kind);
    auto cfg = lab.config(DiscoveryAlgorithm::Mask, s, seed);
    return lab.heads_in(mask_discover(lab.ctx, cfg).circuit);
}

}  // namespace

TEST_CASE("greedy on the toys recovers the expected gate structure") {
    SUBCASE("Ns: both AND edges") { CHECK(greedy_heads(GateKind::And, Strategy::Ns) == 2); }
    SUBCASE("Ns: exactly one OR edge") { CHECK(greedy_heads(GateKind::Or, Strategy::Ns) == 1); }
    SUBCASE("Ns: both ADDER edges") { CHECK(greedy_heads(GateKind::Adder, Strategy::Ns) == 2); }
    SUBCASE("Dn: exactly one AND edge") { CHECK(greedy_heads(GateKind::And, Strategy::Dn) == 1); }
    SUBCASE("Dn: both OR edges") { CHECK(greedy_heads(GateKind::Or, Strategy::Dn) == 2); }
    SUBCASE("Dn: both ADDER edges") { CHECK(greedy_heads(GateKind::Adder, Strategy::Dn) == 2); }
    SUBCASE("which OR edge survives depends on the visit order") {
        std::set<int> kept;
        for (std::uint64_t seed = 0; seed < 16; ++seed) {
            ToyLab lab(GateKind::Or);
            auto cfg = lab.config(DiscoveryAlgorithm::Greedy, Strategy::Ns, seed);
            cfg.tau = 0.1;
            auto c = greedy_discover(lab.ctx, cfg).circuit;
            REQUIRE(lab.heads_in(c) == 1);
            kept.insert(c.contains(lab.a1) ? 1 : 2);
        }
        CHECK(kept.size() == 2);  // both outcomes occur across seeds
    }
}

TEST_CASE("linear estimation on the toys") {
    SUBCASE("Ns: both AND edges") { CHECK(linear_heads(GateKind::And, Strategy::Ns) == 2); }
    SUBCASE("Ns: no OR edge scores high") { CHECK(linear_heads(GateKind::Or, Strategy::Ns) == 0); }
    SUBCASE("Ns: both ADDER edges") { CHECK(linear_heads(GateKind::Adder, Strategy::Ns) == 2); }
    SUBCASE("Dn: no AND edge scores high") { CHECK(linear_heads(GateKind::And, Strategy::Dn) == 0); }
    SUBCASE("Dn: both OR edges") { CHECK(linear_heads(GateKind::Or, Strategy::Dn) == 2); }
    SUBCASE("Dn: both ADDER edges") { CHECK(linear_heads(GateKind::Adder, Strategy::Dn) == 2); }

    SUBCASE("ADDER Ns scores carry the bias magnitudes") {
        ToyLab lab(GateKind::Adder);
        auto scores = linear_scores(lab.ctx, lab.config(DiscoveryAlgorithm::Linear, Strategy::Ns));
        CHECK(std::abs(scores.values[lab.a1]) == doctest::Approx(1.0));
        CHECK(std::abs(scores.values[lab.a2]) == doctest::Approx(1.5));
    }
    SUBCASE("accuracy metric is rejected") {
        ToyLab lab(GateKind::And);
        auto cfg = lab.config(DiscoveryAlgorithm::Linear, Strategy::Ns);
        cfg.metric = Metric::AccuracyDelta;
        CHECK_THROWS_AS(linear_scores(lab.ctx, cfg), std::invalid_argument);
    }
}

TEST_CASE("differentiable mask on the toys") {
    SUBCASE("Ns: both AND edges near 1") {
        ToyLab lab(GateKind::And);
        auto res = mask_discover(lab.ctx, lab.config(DiscoveryAlgorithm::Mask, Strategy::Ns));
        CHECK(res.scores.values[lab.a1] > 0.9);
        CHECK(res.scores.values[lab.a2] > 0.9);
    }
    SUBCASE("Ns: exactly one OR edge survives thresholding") {
        CHECK(mask_heads(GateKind::Or, Strategy::Ns) == 1);
    }
    SUBCASE("Ns: both ADDER edges") { CHECK(mask_heads(GateKind::Adder, Strategy::Ns) == 2); }
    SUBCASE("Dn: exactly one AND edge") { CHECK(mask_heads(GateKind::And, Strategy::Dn) == 1); }
    SUBCASE("Dn: both OR edges") { CHECK(mask_heads(GateKind::Or, Strategy::Dn) == 2); }
    SUBCASE("Dn: both ADDER edges") { CHECK(mask_heads(GateKind::Adder, Strategy::Dn) == 2); }

    SUBCASE("lambda = 0 drives the Ns distance below 1e-3 on every toy") {
        for (GateKind kind : {GateKind::And, GateKind::Or, GateKind::Adder}) {
            ToyLab lab(kind);
            auto cfg = lab.config(DiscoveryAlgorithm::Mask, Strategy::Ns);
            cfg.mask.sparsity_penalty = 0.0;
            auto res = mask_discover(lab.ctx, cfg);
            auto eff = circuit_union(res.circuit, Circuit(lab.model->graph(),
                                                          {lab.model->edge("input", "A1"),
                                                           lab.model->edge("input", "A2"),
                                                           lab.model->edge("m", "output")}));
            CHECK(circuit_distance(lab.ctx, eff, Strategy::Ns, Metric::SinkAbsDiff) < 1e-3);
        }
    }
    SUBCASE("NsDn scores average the two sides") {
        ToyLab lab(GateKind::And);
        auto ns = mask_discover(lab.ctx, lab.config(DiscoveryAlgorithm::Mask, Strategy::Ns)).scores;
        auto dn = mask_discover(lab.ctx, lab.config(DiscoveryAlgorithm::Mask, Strategy::Dn)).scores;
        auto both = mask_discover(lab.ctx, lab.config(DiscoveryAlgorithm::Mask, Strategy::NsDn)).scores;
        for (EdgeIndex e : {lab.a1, lab.a2})
            CHECK(both.values[e] == doctest::Approx(0.5 * (ns.values[e] + dn.values[e])).epsilon(1e-12));
    }
    SUBCASE("divergence raises with diagnostics") {
        ToyLab lab(GateKind::And);
        auto cfg = lab.config(DiscoveryAlgorithm::Mask, Strategy::Ns);
        cfg.mask.lr = std::numeric_limits<double>::infinity();  // force non-finite updates
        CHECK_THROWS_AS(mask_discover(lab.ctx, cfg), std::runtime_error);
    }
}

TEST_CASE("select_top_k") {
    auto net = make_fig2_network();
    const auto& g = net->graph();
    EdgeScores scores;
    scores.values.assign(g.edge_count(), 0.0);
    scores.values[0] = 0.9;
    scores.values[1] = -0.8;
    scores.values[2] = 0.1;

    CHECK(select_top_k(g, scores, 2).members() == std::vector<EdgeIndex>{0, 1});
    CHECK(select_top_k(g, scores, 0).size() == 0);
    CHECK(select_top_k(g, scores, static_cast<int>(g.edge_count())) == Circuit::full(g));
    CHECK_THROWS_AS(select_top_k(g, scores, static_cast<int>(g.edge_count()) + 1), std::invalid_argument);
}

TEST_CASE("greedy trace respects the threshold rule and replays") {
    auto net = make_fig2_network();
    auto ctx = build_context(*net, gate_canonical_dataset(*net));
    DiscoveryConfig cfg;
    cfg.algorithm = DiscoveryAlgorithm::Greedy;
    cfg.strategy = Strategy::Ns;
    cfg.metric = Metric::SinkAbsDiff;
    cfg.tau = 0.5;
    cfg.seed = 4;
    auto res = greedy_discover(ctx, cfg);
    // every recorded decision matches the tau rule
    for (const auto& step : res.trace) CHECK(step.removed == (step.delta < cfg.tau));
    // replay: walking the trace again reproduces each delta
    std::vector<char> kept(net->graph().edge_count(), 1);
    double dist = 0.0;
    for (const auto& step : res.trace) {
        kept[step.edge] = 0;
        std::vector<EdgeIndex> members;
        for (EdgeIndex e = 0; e < net->graph().edge_count(); ++e)
            if (kept[e]) members.push_back(e);
        double trial = circuit_distance(ctx, Circuit(net->graph(), std::move(members)), Strategy::Ns,
                                        Metric::SinkAbsDiff);
        CHECK(trial - dist == doctest::Approx(step.delta).epsilon(1e-12));
        if (step.removed)
            dist = trial;
        else
            kept[step.edge] = 1;
    }
}

TEST_CASE("greedy on the two-gate network under Ns keeps the faithful-minimal set") {
    auto net = make_fig2_network();
    auto ctx = build_context(*net, gate_canonical_dataset(*net));
    DiscoveryConfig cfg;
    cfg.algorithm = DiscoveryAlgorithm::Greedy;
    cfg.metric = Metric::SinkAbsDiff;
    cfg.tau = 0.5;

    SUBCASE("Ns: both AND edges, one OR edge, both adder edges, trunk") {
        cfg.strategy = Strategy::Ns;
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            cfg.seed = seed;
            auto c = greedy_discover(ctx, cfg).circuit;
            CHECK(c.size() == 6);
            CHECK(c.contains(net->edge("A1", "B1")));
            CHECK(c.contains(net->edge("A2", "B1")));
            CHECK((c.contains(net->edge("A3", "B2")) ^ c.contains(net->edge("A4", "B2"))));
            CHECK(c.contains(net->edge("B1", "C")));
            CHECK(c.contains(net->edge("B2", "C")));
            CHECK(c.contains(net->trunk_edge()));
        }
    }
    SUBCASE("Dn: both OR edges, one AND edge, both adder edges, trunk") {
        cfg.strategy = Strategy::Dn;
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            cfg.seed = seed;
            auto c = greedy_discover(ctx, cfg).circuit;
            CHECK(c.size() == 6);
            CHECK(c.contains(net->edge("A3", "B2")));
            CHECK(c.contains(net->edge("A4", "B2")));
            CHECK((c.contains(net->edge("A1", "B1")) ^ c.contains(net->edge("A2", "B1"))));
            CHECK(c.contains(net->edge("B1", "C")));
            CHECK(c.contains(net->edge("B2", "C")));
            CHECK(c.contains(net->trunk_edge()));
        }
    }
}

TEST_CASE("exact-k sizing") {
    auto net = make_fig2_network();
    auto ctx = build_context(*net, gate_canonical_dataset(*net));
    DiscoveryConfig cfg;
    cfg.algorithm = DiscoveryAlgorithm::Greedy;
    cfg.strategy = Strategy::Ns;
    cfg.metric = Metric::SinkAbsDiff;
    cfg.seed = 1;

    SUBCASE("greedy pair at k=5 keeps the gate cores") {
        auto [ns, dn] = discover_pair(ctx, cfg, 5);
        CHECK(ns.size() == 5);
        CHECK(dn.size() == 5);
        CHECK(ns.contains(net->edge("A1", "B1")));
        CHECK(ns.contains(net->edge("A2", "B1")));
        CHECK(dn.contains(net->edge("A3", "B2")));
        CHECK(dn.contains(net->edge("A4", "B2")));
    }
    SUBCASE("k = 0 gives empty circuits") {
        auto [ns, dn] = discover_pair(ctx, cfg, 0);
        CHECK(ns.size() == 0);
        CHECK(dn.size() == 0);
    }
    SUBCASE("k above the edge count is rejected") {
        CHECK_THROWS_AS(discover_at_k(ctx, cfg, 99), std::invalid_argument);
    }
    SUBCASE("all algorithms hit the exact k") {
        for (auto algo : {DiscoveryAlgorithm::Greedy, DiscoveryAlgorithm::Linear, DiscoveryAlgorithm::Mask}) {
            cfg.algorithm = algo;
            for (int k : {2, 4, 7}) CHECK(static_cast<int>(discover_at_k(ctx, cfg, k).size()) == k);
        }
    }
    SUBCASE("trim mode also hits k") {
        cfg.greedy_k_mode = GreedyKMode::Trim;
        CHECK(greedy_discover_k(ctx, cfg, 4).size() == 4);
    }
}

TEST_CASE("toy pair at k=2 recovers both adder heads") {
    for (auto algo : {DiscoveryAlgorithm::Greedy, DiscoveryAlgorithm::Linear, DiscoveryAlgorithm::Mask}) {
        ToyLab lab(GateKind::Adder);
        auto cfg = lab.config(algo, Strategy::Ns, 2);
        auto [ns, dn] = discover_pair(lab.ctx, cfg, 2);
        CHECK(lab.heads_in(ns) == 2);
        CHECK(lab.heads_in(dn) == 2);
    }
}

TEST_CASE("linear scores are independent of pair order") {
    auto net = make_fig2_network();
    auto data = gate_truth_table_dataset(*net);
    auto ctx = build_context(*net, data);
    DiscoveryConfig cfg;
    cfg.algorithm = DiscoveryAlgorithm::Linear;
    cfg.strategy = Strategy::NsDn;
    cfg.metric = Metric::SinkAbsDiff;
    auto base = linear_scores(ctx, cfg);

    TaskDataset shuffled = data;
    Rng rng(5);
    rng.shuffle(shuffled.pairs);
    auto ctx2 = build_context(*net, shuffled);
    auto perm = linear_scores(ctx2, cfg);
    for (std::size_t e = 0; e < base.values.size(); ++e)
        CHECK(std::abs(base.values[e] - perm.values[e]) < 1e-9);
}

TEST_CASE("discovery config validation") {
    DiscoveryConfig cfg;
    cfg.tau = -1;
    cfg.k = -1;
    CHECK_THROWS_AS(cfg.validate_target(), std::invalid_argument);
    cfg.tau = 0.5;
    cfg.k = 3;
    CHECK_THROWS_AS(cfg.validate_target(), std::invalid_argument);
    cfg.k = -1;
    CHECK_NOTHROW(cfg.validate_target());
}
