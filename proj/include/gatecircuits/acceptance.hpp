// The acceptance suite: one function per criterion, each returning a pass/fail
// verdict with a one-line detail. `verify` in the CLI and the acceptance test
// binary both run these.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "gatecircuits/harness.hpp"

namespace gatecircuits {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

namespace acceptance {

// ---------------------------------------------------------------------------
// Criterion 1: the 18-cell recovery matrix on the three one-layer toys.
// ---------------------------------------------------------------------------
struct Table1Cell {
    DiscoveryAlgorithm algorithm;
    Strategy strategy;
    GateKind gate;
    int expected;
    int found = -1;
};

inline int toy_heads_found(const AnalyticModel& toy, DiscoveryAlgorithm algo, Strategy strategy,
                           std::uint64_t seed) {
    auto ctx = build_context(toy, toy_dataset(toy));
    EdgeIndex a1 = toy.edge("A1", "m"), a2 = toy.edge("A2", "m");
    DiscoveryConfig cfg;
    cfg.algorithm = algo;
    cfg.strategy = strategy;
    cfg.metric = Metric::SinkAbsDiff;
    cfg.seed = seed;
    cfg.candidates = std::vector<EdgeIndex>{a1, a2};
    switch (algo) {
        case DiscoveryAlgorithm::Greedy: {
            cfg.tau = 0.1;
            auto c = greedy_discover(ctx, cfg).circuit;
            return (c.contains(a1) ? 1 : 0) + (c.contains(a2) ? 1 : 0);
        }
        case DiscoveryAlgorithm::Linear: {
            auto scores = linear_scores(ctx, cfg);
            return (std::abs(scores.values[a1]) >= 0.1 ? 1 : 0) + (std::abs(scores.values[a2]) >= 0.1 ? 1 : 0);
        }
        case DiscoveryAlgorithm::Mask: {
            auto c = mask_discover(ctx, cfg).circuit;
            return (c.contains(a1) ? 1 : 0) + (c.contains(a2) ? 1 : 0);
        }
    }
    return -1;
}

// Expected recovery per (algorithm, strategy, gate); the toys may be swapped
// for corrupted variants to exercise the negative control.
inline std::vector<Table1Cell> table1_matrix(
    const std::function<std::unique_ptr<AnalyticModel>(GateKind)>& make_toy, std::uint64_t seed = 0) {
    auto expected = [](DiscoveryAlgorithm algo, Strategy s, GateKind gate) {
        bool partial_side = (s == Strategy::Ns && gate == GateKind::Or) ||
                            (s == Strategy::Dn && gate == GateKind::And);
        if (gate == GateKind::Adder) return 2;
        if (!partial_side) return 2;
        return algo == DiscoveryAlgorithm::Linear ? 0 : 1;
    };
    std::vector<Table1Cell> cells;
    for (auto algo : {DiscoveryAlgorithm::Greedy, DiscoveryAlgorithm::Linear, DiscoveryAlgorithm::Mask})
        for (auto strategy : {Strategy::Ns, Strategy::Dn})
            for (auto gate : {GateKind::And, GateKind::Or, GateKind::Adder}) {
                Table1Cell cell{algo, strategy, gate, expected(algo, strategy, gate)};
                auto toy = make_toy(gate);
                cell.found = toy_heads_found(*toy, algo, strategy, seed);
                cells.push_back(cell);
            }
    return cells;
}

inline CriterionResult criterion1_table1(std::uint64_t seed) {
    auto cells = table1_matrix([](GateKind k) { return AnalyticModel::gate_toy(k); }, seed);
    int bad = 0;
    std::ostringstream detail;
    for (const auto& c : cells) {
        if (c.found != c.expected) {
            ++bad;
            detail << " [" << algorithm_name(c.algorithm) << "/" << strategy_name(c.strategy) << "/"
                   << gate_kind_name(c.gate) << ": got " << c.found << " want " << c.expected << "]";
        }
    }
    CriterionResult r;
    r.id = 1;
    r.name = "recovery matrix on the one-layer toys (18 cells)";
    r.pass = bad == 0;
    r.detail = r.pass ? "18/18 cells match" : std::to_string(18 - bad) + "/18 cells match;" + detail.str();
    return r;
}

// ---------------------------------------------------------------------------
// Criterion 2: ADDER toy patched outputs 2.5 / 1.5 / 1.0 / 0.0 within 1e-9.
// ---------------------------------------------------------------------------
inline CriterionResult criterion2_adder_outputs() {
    auto toy = AnalyticModel::gate_toy(GateKind::Adder);
    auto ctx = build_context(*toy, toy_dataset(*toy));
    EdgeIndex a1 = toy->edge("A1", "m"), a2 = toy->edge("A2", "m");
    auto output_with = [&](bool drop1, bool drop2) {
        std::vector<EdgeIndex> members;
        for (EdgeIndex e = 0; e < toy->graph().edge_count(); ++e) {
            if ((e == a1 && drop1) || (e == a2 && drop2)) continue;
            members.push_back(e);
        }
        return patched_output(ctx, ctx.pairs[0], Circuit(toy->graph(), members), Strategy::Ns)[0];
    };
    double vals[4] = {output_with(false, false), output_with(true, false), output_with(false, true),
                      output_with(true, true)};
    double want[4] = {2.5, 1.5, 1.0, 0.0};
    CriterionResult r;
    r.id = 2;
    r.name = "ADDER toy ablation outputs (2.5 / 1.5 / 1.0 / 0.0)";
    r.pass = true;
    std::ostringstream detail;
    for (int i = 0; i < 4; ++i) {
        if (std::abs(vals[i] - want[i]) > 1e-9) r.pass = false;
        detail << (i ? " / " : "") << vals[i];
    }
    r.detail = detail.str();
    return r;
}

// ---------------------------------------------------------------------------
// Criterion 3: Corollary oracle on the two-gate network and random planted
// networks (<= 12 edges, at least one gate of each kind).
// ---------------------------------------------------------------------------
inline CriterionResult criterion3_corollary(std::uint64_t seed) {
    CriterionResult r;
    r.id = 3;
    r.name = "minimal-subset oracle matches the gate corollary";
    int checked = 0;
    std::ostringstream detail;
    auto run = [&](const AnalyticModel& net, const std::string& tag) {
        auto check = check_corollary(net);
        if (!check.ok) {
            r.pass = false;
            detail << " [" << tag << ": " << check.failure << "]";
        }
        ++checked;
    };
    r.pass = true;
    run(*make_fig2_network(), "fig2");
    Rng rng(derive_seed(seed, 0, "c3"));
    int planted = 0;
    for (std::uint64_t attempt = 0; planted < 5 && attempt < 40; ++attempt) {
        PlantedNetworkConfig cfg;
        cfg.and_gates = 1 + static_cast<int>(rng.uniform_index(2));
        cfg.or_gates = 1;
        cfg.max_gate_size = 3;
        cfg.extra_adder_sources = static_cast<int>(rng.uniform_index(2));
        auto net = make_planted_network(cfg, rng);
        if (net->graph().edge_count() > 12) continue;
        run(*net, "planted-" + std::to_string(planted));
        ++planted;
    }
    if (planted < 5) {
        r.pass = false;
        detail << " [could not generate 5 planted networks]";
    }
    r.detail = r.pass ? std::to_string(checked) + " networks agree (ties included)" : detail.str();
    return r;
}

// ---------------------------------------------------------------------------
// Criterion 4: analytic edge gradients vs central finite differences on >= 100
// random edges of a trained toy transformer, relative error < 1e-4.
// ---------------------------------------------------------------------------
inline CriterionResult criterion4_gradients(std::uint64_t seed) {
    TransformerSpec spec;
    spec.layers = 3;
    spec.heads = 4;
    spec.model_dim = 24;
    spec.mlp_dim = 48;
    spec.vocab = 12;
    spec.max_seq = 12;
    spec.seed = derive_seed(seed, 0, "c4-model");
    TransformerModel model(spec);
    TaskConfig tc;
    tc.vocab = 12;
    tc.length = 10;
    tc.count = 2048;
    auto data = make_induction_task(tc, derive_seed(seed, 1, "c4-task"));
    TrainConfig train;
    train.steps = 3000;
    train.batch = 32;
    train.lr = 3e-3;
    train.accuracy_floor = 0.9;
    train.seed = derive_seed(seed, 2, "c4-train");
    auto res = model.train(data, train);

    auto ctx = build_context(model, TaskDataset{{data.pairs[0], data.pairs[1]}});
    const auto& g = model.graph();
    const auto& pc = ctx.pairs[0];
    LossSpec loss{LossSpec::Kind::LogitDiff, pc.pair->clean_label, pc.pair->corrupted_label};
    auto grads = model.edge_gradients_at(ns_plan(ctx, pc), Circuit::full(g), loss, GradSide::Decrease);

    auto loss_of = [&](const std::vector<std::vector<double>>& frozen, const Circuit& retained) {
        PatchPlan plan{&pc.pair->clean, &frozen, true};
        auto logits = model.patched_logits(plan, retained);
        return logits[pc.pair->clean_label] - logits[pc.pair->corrupted_label];
    };

    Rng rng(derive_seed(seed, 3, "c4-sample"));
    std::vector<EdgeIndex> order(g.edge_count());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<EdgeIndex>(i);
    rng.shuffle(order);

    int checked = 0;
    double worst = 0.0;
    for (EdgeIndex e : order) {
        if (checked >= 100) break;
        std::size_t dim = rng.uniform_index(pc.clean_edges[e].size());
        double scale = std::max(1.0, std::abs(pc.clean_edges[e][dim]));
        double h = 1e-4 * scale;
        auto frozen = pc.clean_edges;
        auto retained = circuit_difference(Circuit::full(g), Circuit(g, {e}));
        frozen[e][dim] += h;
        double up = loss_of(frozen, retained);
        frozen[e][dim] -= 2 * h;
        double down = loss_of(frozen, retained);
        double fd = (up - down) / (2 * h);
        double an = grads.grads[e][dim];
        if (std::abs(fd) < 1e-8 && std::abs(an) < 1e-8) continue;
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-12}));
        ++checked;
    }
    CriterionResult r;
    r.id = 4;
    r.name = "edge gradients vs central finite differences (>= 100 edges)";
    r.pass = checked >= 100 && worst < 1e-4;
    std::ostringstream detail;
    detail << checked << " edges checked, worst relative error " << worst << ", train acc " << res.accuracy;
    r.detail = detail.str();
    return r;
}

// ---------------------------------------------------------------------------
// Criterion 5: one-vs-two-edge ablation pattern on planted gate networks.
// ---------------------------------------------------------------------------
inline CriterionResult criterion5_ablation_pattern(std::uint64_t seed) {
    CriterionResult r;
    r.id = 5;
    r.name = "gate ablation pattern (30 repeats per receiver)";
    r.pass = true;
    std::ostringstream detail;
    Rng rng(derive_seed(seed, 0, "c5"));
    for (int net_ix = 0; net_ix < 3; ++net_ix) {
        PlantedNetworkConfig cfg;
        cfg.and_gates = 1 + static_cast<int>(rng.uniform_index(2));
        cfg.or_gates = 1 + static_cast<int>(rng.uniform_index(2));
        cfg.max_gate_size = 2;  // pairs exhaust OR gates, which is the telling case
        cfg.extra_adder_sources = 1;
        auto net = make_planted_network(cfg, rng);
        auto ctx = build_context(*net, gate_canonical_dataset(*net));
        std::vector<Gate> gates;
        for (const auto& pg : net->planted_gates()) {
            GateLabel label = pg.kind == GateKind::And ? GateLabel::And
                              : pg.kind == GateKind::Or ? GateLabel::Or
                                                        : GateLabel::Adder;
            gates.push_back(Gate{pg.receiver, label, pg.member_edges});
        }
        auto rows = gate_ablation_deltas(ctx, gates, 30, derive_seed(seed, net_ix, "c5-rows"),
                                         Metric::SinkAbsDiff);
        std::map<GateLabel, std::pair<double, double>> sums;
        std::map<GateLabel, int> counts;
        for (const auto& row : rows) {
            if (row.removed == 1) sums[row.label].first += row.delta;
            else sums[row.label].second += row.delta;
            counts[row.label] += row.removed == 1;
        }
        auto mean1 = [&](GateLabel l) { return sums[l].first / counts[l]; };
        auto mean2 = [&](GateLabel l) { return sums[l].second / counts[l]; };
        bool ok = mean1(GateLabel::And) >= 0.9 * mean2(GateLabel::And) &&
                  mean1(GateLabel::Or) <= 0.05 * mean2(GateLabel::Or) &&
                  mean2(GateLabel::Adder) >= 1.5 * mean1(GateLabel::Adder) &&
                  mean1(GateLabel::Adder) > 0.0;
        if (!ok) {
            r.pass = false;
            detail << " [net " << net_ix << " violates the pattern]";
        }
    }
    r.detail = r.pass ? "AND d1~d2, OR d1~0, ADDER d2>=1.5*d1 on 3 planted networks" : detail.str();
    return r;
}

// ---------------------------------------------------------------------------
// Criterion 6: directional orderings on the trained induction transformer.
// ---------------------------------------------------------------------------
struct C6Protocol {
    int k = 14;
    int seeds = 10;
    int need = 8;
    int discovery_pairs = 12;
    int randomness_runs = 30;
    MaskHparams mask;  // transformer-tuned; k-targeted runs adapt the penalty
    C6Protocol() {
        mask.steps = 500;
        mask.sparsity_penalty = 0.01;
        mask.lr = 0.1;
        mask.adapt_to_k = true;
    }
};

// Trained with head dropout so redundant (backup) heads form; without them
// the Ns and Dn sides of an interchange task find the same mechanism and
// there is no gate asymmetry to measure.
inline const TransformerModel& c6_model(std::uint64_t seed) {
    static std::map<std::uint64_t, std::unique_ptr<TransformerModel>> cache;
    auto it = cache.find(seed);
    if (it != cache.end()) return *it->second;
    TransformerSpec spec;
    spec.layers = 2;
    spec.heads = 4;
    spec.model_dim = 32;
    spec.mlp_dim = 64;
    spec.vocab = 20;
    spec.max_seq = 16;
    spec.seed = derive_seed(seed, 0, "c6-model");
    auto model = std::make_unique<TransformerModel>(spec);
    TaskConfig tc;
    tc.vocab = 20;
    tc.length = 12;
    tc.count = 4096;
    auto data = make_induction_task(tc, derive_seed(seed, 1, "c6-train-task"));
    TrainConfig train;
    train.steps = 12000;
    train.batch = 32;
    train.lr = 3e-3;
    train.accuracy_floor = 0.95;
    train.head_dropout = 0.25;
    train.mlp_dropout = 0.25;
    train.seed = derive_seed(seed, 2, "c6-train");
    auto res = model->train(data, train);
    if (!res.reached_floor)
        throw std::runtime_error("criterion 6: training missed the accuracy floor (" +
                                 std::to_string(res.accuracy) + ")");
    return *cache.emplace(seed, std::move(model)).first->second;
}

// (a) removal completeness is judged per algorithm; (b) faithfulness is
// judged on the three-algorithm average per seed, which is how the source
// analysis aggregates its faithfulness claim; (c) randomness covers greedy
// and mask (linear is deterministic). Discovery uses a fresh small dataset
// per root seed; evaluation uses one larger fixed dataset.
inline CriterionResult criterion6_directional(std::uint64_t seed, const C6Protocol& proto = {}) {
    const TransformerModel& model = c6_model(seed);
    CriterionResult r;
    r.id = 6;
    r.name = "directional completeness/faithfulness/randomness on the trained transformer";

    TaskConfig etc_;
    etc_.vocab = 20;
    etc_.length = 12;
    etc_.count = 64;
    auto eval_data = make_induction_task(etc_, derive_seed(seed, 777, "c6-eval"));
    auto ectx = build_context(model, eval_data);

    std::vector<DiscoveryAlgorithm> algos{DiscoveryAlgorithm::Greedy, DiscoveryAlgorithm::Linear,
                                          DiscoveryAlgorithm::Mask};
    std::map<DiscoveryAlgorithm, int> win_removal;
    int win_ratio_avg = 0, win_dn_avg = 0;

    for (int s = 0; s < proto.seeds; ++s) {
        TaskConfig tc;
        tc.vocab = 20;
        tc.length = 12;
        tc.count = proto.discovery_pairs;
        auto data = make_induction_task(tc, derive_seed(seed, 100 + s, "c6-data"));
        auto ctx = build_context(model, data);
        double sum_ns = 0, sum_dn = 0, sum_nsdn = 0;
        for (auto algo : algos) {
            DiscoveryConfig dc;
            dc.algorithm = algo;
            dc.metric = Metric::KlDivergence;
            dc.mask = proto.mask;
            dc.seed = derive_seed(seed, 200 + s, "c6-disc");
            dc.strategy = Strategy::Ns;
            Circuit ns = discover_at_k(ctx, dc, proto.k);
            dc.strategy = Strategy::Dn;
            Circuit dn = discover_at_k(ctx, dc, proto.k);
            dc.strategy = Strategy::NsDn;
            Circuit nsdn = discover_at_k(ctx, dc, proto.k);

            double rem_ns = completeness(ectx, ns, Metric::KlDivergence).kl_of_removal;
            double rem_nsdn = completeness(ectx, nsdn, Metric::KlDivergence).kl_of_removal;
            win_removal[algo] += rem_nsdn > rem_ns;
            sum_ns += circuit_distance(ectx, ns, Strategy::Ns, Metric::KlDivergence);
            sum_dn += circuit_distance(ectx, dn, Strategy::Ns, Metric::KlDivergence);
            sum_nsdn += circuit_distance(ectx, nsdn, Strategy::Ns, Metric::KlDivergence);
        }
        win_ratio_avg += sum_nsdn <= 1.2 * sum_ns;
        win_dn_avg += sum_dn > sum_ns;
    }

    // (c) randomness over seeded runs at one dataset
    TaskConfig tc;
    tc.vocab = 20;
    tc.length = 12;
    tc.count = proto.discovery_pairs;
    auto data = make_induction_task(tc, derive_seed(seed, 999, "c6-rand-data"));
    auto ctx = build_context(model, data);
    std::vector<std::uint64_t> run_seeds;
    for (int i = 0; i < proto.randomness_runs; ++i)
        run_seeds.push_back(derive_seed(seed, 3000 + i, "c6-rand"));
    std::map<DiscoveryAlgorithm, std::pair<double, double>> rand_result;  // (ns, nsdn)
    for (auto algo : {DiscoveryAlgorithm::Greedy, DiscoveryAlgorithm::Mask}) {
        DiscoveryConfig dc;
        dc.algorithm = algo;
        dc.metric = Metric::KlDivergence;
        dc.mask = proto.mask;
        dc.strategy = Strategy::Ns;
        double ns = randomness(ctx, dc, proto.k, run_seeds).mean_hamming;
        dc.strategy = Strategy::NsDn;
        double nsdn = randomness(ctx, dc, proto.k, run_seeds).mean_hamming;
        rand_result[algo] = {ns, nsdn};
    }

    bool pass = true;
    std::ostringstream detail;
    for (auto algo : algos) {
        bool ok = win_removal[algo] >= proto.need;
        pass = pass && ok;
        detail << algorithm_name(algo) << "-removal " << win_removal[algo] << "/" << proto.seeds << " ";
    }
    pass = pass && win_ratio_avg >= proto.need && win_dn_avg >= proto.need;
    detail << "| faith ratio " << win_ratio_avg << "/" << proto.seeds << ", dn>ns " << win_dn_avg << "/"
           << proto.seeds << " | ";
    for (auto algo : {DiscoveryAlgorithm::Greedy, DiscoveryAlgorithm::Mask}) {
        bool ok = rand_result[algo].first > rand_result[algo].second;
        pass = pass && ok;
        detail << algorithm_name(algo) << "-hamming(ns " << rand_result[algo].first << " vs nsdn "
               << rand_result[algo].second << ") ";
    }
    r.pass = pass;
    r.detail = detail.str();
    return r;
}

// ---------------------------------------------------------------------------
// Criterion 7: misalignment sweep shape on a planted network.
// ---------------------------------------------------------------------------
struct C7Protocol {
    int k_ns = 13;
    std::vector<int> k_dn_grid{9, 10, 11, 12, 13, 14, 15, 16, 17};  // about +-40% of k_ns
    int samples = 60;
};

inline std::unique_ptr<AnalyticModel> c7_network() {
    GateNetworkSpec spec;
    spec.gates = {{"B1", GateKind::Or, {"S1", "S2", "S3"}},
                  {"B2", GateKind::Or, {"S4", "S5", "S6"}},
                  {"B3", GateKind::And, {"S7", "S8", "S9"}},
                  {"B4", GateKind::And, {"S10", "S11", "S12"}},
                  {"C", GateKind::Adder, {"B1", "B2", "B3", "B4"}}};
    spec.sink = "C";
    return AnalyticModel::gate_network(spec);
}

inline CriterionResult criterion7_misalignment_sweep(std::uint64_t seed, const C7Protocol& proto = {}) {
    auto net = c7_network();
    auto ctx = build_context(*net, gate_canonical_dataset(*net));
    DiscoveryConfig dc;
    dc.algorithm = DiscoveryAlgorithm::Greedy;
    dc.metric = Metric::SinkAbsDiff;
    dc.seed = derive_seed(seed, 0, "c7");
    SamplerConfig sampler;
    sampler.samples = proto.samples;
    sampler.seed = derive_seed(seed, 1, "c7-sampler");

    auto sweep = ratio_sweep(ctx, dc, proto.k_ns, proto.k_dn_grid, sampler, Metric::SinkAbsDiff);
    CriterionResult r;
    r.id = 7;
    r.name = "misalignment sweep shape (and-score low k, or-score high k, matched minimum)";

    // and-score is judged over rows where it is defined, or-score likewise;
    // the summed minimum is taken over jointly valid rows.
    int and_lo = -1, and_argmax = -1, or_hi = -1, or_argmax = -1;
    for (std::size_t i = 0; i < sweep.reports.size(); ++i) {
        const auto& rep = sweep.reports[i];
        if (rep.and_valid) {
            if (and_lo < 0) and_lo = static_cast<int>(i);
            if (and_argmax < 0 || rep.and_score > sweep.reports[and_argmax].and_score + 1e-9)
                and_argmax = static_cast<int>(i);
        }
        if (rep.or_valid) {
            or_hi = static_cast<int>(i);
            if (or_argmax < 0 || rep.or_score > sweep.reports[or_argmax].or_score + 1e-9)
                or_argmax = static_cast<int>(i);
        }
    }
    std::ostringstream detail;
    bool pass = and_lo >= 0 && or_hi >= 0 && sweep.best_index >= 0;
    if (pass) {
        bool and_peak_low =
            sweep.reports[and_lo].and_score >= sweep.reports[and_argmax].and_score - 1e-9;
        bool or_peak_high = sweep.reports[or_hi].or_score >= sweep.reports[or_argmax].or_score - 1e-9;
        double best_ratio = sweep.reports[sweep.best_index].ratio_tested;
        bool ratio_ok = best_ratio >= 0.8 && best_ratio <= 1.25;
        pass = and_peak_low && or_peak_high && ratio_ok;
        detail << "and-score " << sweep.reports[and_lo].and_score << " at k_dn=" << sweep.reports[and_lo].k_dn
               << (and_peak_low ? " is the maximum" : " is NOT the maximum") << "; or-score "
               << sweep.reports[or_hi].or_score << " at k_dn=" << sweep.reports[or_hi].k_dn
               << (or_peak_high ? " is the maximum" : " is NOT the maximum") << "; summed minimum at ratio "
               << best_ratio << (ratio_ok ? " (in [0.8,1.25])" : " (OUT of [0.8,1.25])");
    } else {
        detail << "sweep produced no valid rows";
    }
    r.pass = pass;
    r.detail = detail.str();
    return r;
}

// ---------------------------------------------------------------------------
// Criterion 8: variance ordering of the completeness metrics.
// ---------------------------------------------------------------------------
inline CriterionResult criterion8_variance(std::uint64_t seed) {
    const TransformerModel& model = c6_model(seed);
    TaskConfig tc;
    tc.vocab = 20;
    tc.length = 12;
    tc.count = 24;
    auto data = make_induction_task(tc, derive_seed(seed, 0, "c8-data"));
    auto ctx = build_context(model, data);

    std::vector<double> inc5, inc30, removal;
    for (int s = 0; s < 5; ++s) {
        DiscoveryConfig dc;
        dc.algorithm = DiscoveryAlgorithm::Greedy;
        dc.metric = Metric::KlDivergence;
        dc.seed = derive_seed(seed, 10 + s, "c8-disc");
        dc.strategy = Strategy::Ns;
        Circuit circuit = discover_at_k(ctx, dc, 14);
        inc5.push_back(incompleteness_sampled(ctx, circuit, 5, 2, 5, derive_seed(seed, 20 + s, "c8-k5"),
                                              Metric::KlDivergence)
                           .mean);
        inc30.push_back(incompleteness_sampled(ctx, circuit, 30, 2, 5, derive_seed(seed, 30 + s, "c8-k30"),
                                               Metric::KlDivergence)
                            .mean);
        removal.push_back(completeness(ctx, circuit, Metric::KlDivergence).kl_of_removal);
    }
    auto stddev = [](const std::vector<double>& v) {
        double mean = 0;
        for (double x : v) mean += x;
        mean /= v.size();
        double ss = 0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::sqrt(ss / (v.size() - 1));
    };
    double s5 = stddev(inc5), s30 = stddev(inc30), sr = stddev(removal);
    CriterionResult r;
    r.id = 8;
    r.name = "variance ordering: sampled incompleteness (5) >= (30) >= removal metric";
    r.pass = s5 >= s30 && s30 >= sr;
    std::ostringstream detail;
    detail << "std@5=" << s5 << " std@30=" << s30 << " std(removal)=" << sr;
    r.detail = detail.str();
    return r;
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical reports under a fixed seed.
// ---------------------------------------------------------------------------
inline json c9_config(std::uint64_t seed) {
    json cfg;
    cfg["version"] = 1;
    cfg["seed"] = seed;
    cfg["model"] = json{{"family", "fig2"}};
    cfg["task"] = json{{"kind", "gate-canonical"}};
    cfg["algorithms"] = json::array({json{{"algorithm", "greedy"}, {"metric", "sink"}},
                                     json{{"algorithm", "linear"}, {"metric", "sink"}},
                                     json{{"algorithm", "mask"}, {"metric", "sink"}}});
    cfg["k_grid"] = json::array({4, 6});
    cfg["strategies"] = json::array({"ns", "dn", "nsdn"});
    cfg["evaluations"] =
        json::array({"faithfulness", "completeness", "incompleteness-sampled", "gates", "misalignment", "oracle"});
    return cfg;
}

inline CriterionResult criterion9_determinism(std::uint64_t seed) {
    auto cfg = parse_experiment_config(c9_config(seed));
    std::string a = run_experiment(cfg).dump(2);
    std::string b = run_experiment(cfg).dump(2);
    CriterionResult r;
    r.id = 9;
    r.name = "byte-identical reports under a fixed seed";
    r.pass = a == b;
    r.detail = r.pass ? "two runs produced identical " + std::to_string(a.size()) + "-byte reports"
                      : "reports differ";
    return r;
}

}  // namespace acceptance

// Runs every criterion; prints one line per criterion to `out` when given.
inline std::vector<CriterionResult> verify_paper_suite(std::uint64_t seed = 0, std::FILE* out = nullptr) {
    using Clock = std::chrono::steady_clock;
    std::vector<std::function<CriterionResult()>> steps{
        [&] { return acceptance::criterion1_table1(seed); },
        [&] { return acceptance::criterion2_adder_outputs(); },
        [&] { return acceptance::criterion3_corollary(seed); },
        [&] { return acceptance::criterion4_gradients(seed); },
        [&] { return acceptance::criterion5_ablation_pattern(seed); },
        [&] { return acceptance::criterion6_directional(seed); },
        [&] { return acceptance::criterion7_misalignment_sweep(seed); },
        [&] { return acceptance::criterion8_variance(seed); },
        [&] { return acceptance::criterion9_determinism(seed); },
    };
    std::vector<CriterionResult> results;
    for (auto& step : steps) {
        auto t0 = Clock::now();
        CriterionResult r;
        try {
            r = step();
        } catch (const std::exception& e) {
            r.id = static_cast<int>(results.size()) + 1;
            r.name = "criterion " + std::to_string(r.id);
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        if (out)
            std::fprintf(out, "[%s] criterion %d: %s (%s) [%.1fs]\n", r.pass ? "PASS" : "FAIL", r.id,
                         r.name.c_str(), r.detail.c_str(), r.seconds);
        results.push_back(std::move(r));
    }
    return results;
}

inline json acceptance_report(const std::vector<CriterionResult>& results, bool timings = false) {
    json out;
    out["version"] = 1;
    out["engine_version"] = kEngineVersion;
    json rows = json::array();
    bool all = true;
    for (const auto& r : results) {
        json row{{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}};
        if (timings) row["seconds"] = r.seconds;
        rows.push_back(std::move(row));
        all = all && r.pass;
    }
    out["criteria"] = std::move(rows);
    out["all_pass"] = all;
    return out;
}

}  // namespace gatecircuits
