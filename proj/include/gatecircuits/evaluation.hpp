// Evaluation quantities: faithfulness, completeness (removal-based and
// sampled), discovery randomness, gate/edge effects, label proportions, and
// the exhaustive minimal-subset oracle.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gatecircuits/analytic.hpp"
#include "gatecircuits/gates.hpp"

namespace gatecircuits {

struct FaithfulnessResult {
    double kl = 0.0;  // circuit distance under Ns with the chosen metric
    std::optional<double> accuracy;
};

inline FaithfulnessResult faithfulness(const EvalContext& ctx, const Circuit& circuit, Metric metric) {
    FaithfulnessResult r;
    r.kl = circuit_distance(ctx, circuit, Strategy::Ns, metric);
    if (ctx.model->is_token_model()) r.accuracy = circuit_accuracy(ctx, circuit, Strategy::Ns);
    return r;
}

struct CompletenessResult {
    double kl_of_removal = 0.0;  // distance of the complement run; higher = more complete
    std::optional<double> accuracy_of_removal;
};

inline CompletenessResult completeness(const EvalContext& ctx, const Circuit& circuit, Metric metric) {
    Circuit rest = circuit_complement(ctx.graph(), circuit);
    CompletenessResult r;
    r.kl_of_removal = circuit_distance(ctx, rest, Strategy::Ns, metric);
    if (ctx.model->is_token_model()) r.accuracy_of_removal = circuit_accuracy(ctx, rest, Strategy::Ns);
    return r;
}

struct SampledIncompleteness {
    double mean = 0.0;
    double std = 0.0;
    int samples = 0;
};

// D(C \ K || G \ K) over sampled knockouts K: compare the two patched runs
// directly, pair by pair, and aggregate over samples.
inline SampledIncompleteness incompleteness_sampled(const EvalContext& ctx, const Circuit& circuit,
                                                    int n_samples, std::size_t size_min, std::size_t size_max,
                                                    std::uint64_t seed, Metric metric) {
    if (circuit.size() < size_max) throw std::invalid_argument("incompleteness: circuit too small for size range");
    if (n_samples < 1) throw std::invalid_argument("incompleteness: need at least one sample");
    Rng rng(derive_seed(seed, 0, "incompleteness"));
    const Circuit full = Circuit::full(ctx.graph());
    std::vector<double> vals;
    vals.reserve(n_samples);
    for (int s = 0; s < n_samples; ++s) {
        Circuit k = random_subcircuit(circuit, size_min, size_max, rng);
        Circuit c_minus = circuit_difference(circuit, k);
        Circuit g_minus = circuit_difference(full, k);
        vals.push_back(circuits_output_distance(ctx, c_minus, g_minus, Strategy::Ns, metric));
    }
    SampledIncompleteness out;
    out.samples = n_samples;
    for (double v : vals) out.mean += v;
    out.mean /= vals.size();
    if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) ss += (v - out.mean) * (v - out.mean);
        out.std = std::sqrt(ss / (vals.size() - 1));
    }
    return out;
}

struct RandomnessResult {
    double mean_hamming = 0.0;
    double std = 0.0;
    int run_count = 0;
};

// Re-run discovery at fixed k under the given seeds and summarize the pairwise
// Hamming distances between the resulting circuits.
inline RandomnessResult randomness(const EvalContext& ctx, const DiscoveryConfig& base, int k,
                                   const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2) throw std::invalid_argument("randomness: need at least two runs");
    for (std::size_t i = 0; i < seeds.size(); ++i)
        for (std::size_t j = i + 1; j < seeds.size(); ++j)
            if (seeds[i] == seeds[j]) throw std::invalid_argument("randomness: seeds must differ");

    std::vector<Circuit> circuits;
    circuits.reserve(seeds.size());
    DiscoveryConfig cfg = base;
    for (std::uint64_t s : seeds) {
        cfg.seed = s;
        circuits.push_back(discover_at_k(ctx, cfg, k));
    }
    std::vector<double> dists;
    for (std::size_t i = 0; i < circuits.size(); ++i)
        for (std::size_t j = i + 1; j < circuits.size(); ++j)
            dists.push_back(static_cast<double>(hamming_distance(circuits[i], circuits[j])));
    RandomnessResult out;
    out.run_count = static_cast<int>(seeds.size());
    for (double d : dists) out.mean_hamming += d;
    out.mean_hamming /= dists.size();
    if (dists.size() > 1) {
        double ss = 0.0;
        for (double d : dists) ss += (d - out.mean_hamming) * (d - out.mean_hamming);
        out.std = std::sqrt(ss / (dists.size() - 1));
    }
    return out;
}

struct GateEffect {
    Gate gate;
    double gate_effect = 0.0;  // output change when the whole gate is ablated (Ns run)
    double edge_effect = 0.0;  // gate effect split equally across member edges
};

inline std::vector<GateEffect> gate_effects(const EvalContext& ctx, const std::vector<Gate>& gates,
                                            Metric metric) {
    if (gates.empty()) throw std::invalid_argument("gate_effects: empty gate list");
    const Circuit full = Circuit::full(ctx.graph());
    std::vector<GateEffect> out;
    out.reserve(gates.size());
    for (const auto& gate : gates) {
        Circuit removed(ctx.graph().id(), std::vector<EdgeIndex>(gate.members.begin(), gate.members.end()));
        GateEffect ge;
        ge.gate = gate;
        ge.gate_effect = circuit_distance(ctx, circuit_difference(full, removed), Strategy::Ns, metric);
        ge.edge_effect = ge.gate_effect / static_cast<double>(gate.members.size());
        out.push_back(std::move(ge));
    }
    return out;
}

struct Proportions {
    int and_count = 0;
    int or_count = 0;
    int adder_count = 0;
};

inline Proportions proportions(const GateLabeling& labeling) {
    return Proportions{static_cast<int>(labeling.and_edges.size()),
                       static_cast<int>(labeling.or_edges.size()),
                       static_cast<int>(labeling.adder_edges.size())};
}

// One-or-two-edge ablation deltas per gate, repeated with fresh random picks.
// Feeds the box-plot data and the gate-pattern checks.
struct AblationDelta {
    NodeId receiver;
    GateLabel label = GateLabel::Adder;
    int removed = 1;  // 1 or 2 edges
    double delta = 0.0;
};

inline std::vector<AblationDelta> gate_ablation_deltas(const EvalContext& ctx, const std::vector<Gate>& gates,
                                                       int repeats, std::uint64_t seed, Metric metric) {
    const Circuit full = Circuit::full(ctx.graph());
    std::vector<AblationDelta> out;
    for (const auto& gate : gates) {
        if (gate.members.size() < 2) continue;
        Rng rng(derive_seed(seed, hash_str(node_name(gate.receiver)), "gate-ablation"));
        for (int r = 0; r < repeats; ++r) {
            std::size_t i = rng.uniform_index(gate.members.size());
            std::size_t j = rng.uniform_index(gate.members.size() - 1);
            if (j >= i) ++j;
            Circuit one(ctx.graph().id(), {gate.members[i]});
            std::vector<EdgeIndex> both{gate.members[i], gate.members[j]};
            std::sort(both.begin(), both.end());
            Circuit two(ctx.graph().id(), std::move(both));
            out.push_back({gate.receiver, gate.label, 1,
                           circuit_distance(ctx, circuit_difference(full, one), Strategy::Ns, metric)});
            out.push_back({gate.receiver, gate.label, 2,
                           circuit_distance(ctx, circuit_difference(full, two), Strategy::Ns, metric)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exhaustive minimal-subset oracle.
//
// Faithful mode: the smallest edge subsets whose noising run stays within eps
// of the full clean output. Complete mode is the denoising mirror: the
// smallest subsets whose removal leaves the output at the fully corrupted
// reference even when everything else is restored — i.e. removal achieves the
// maximal degradation. Ties are enumerated: their count and intersection
// (core) are part of the result.
// ---------------------------------------------------------------------------
struct OracleResult {
    Circuit minimal;           // lexicographically first by canonical edge order
    Circuit core;              // intersection of all tied minimal subsets
    std::vector<Circuit> ties;
    long long tie_count = 0;
    double achieved = 0.0;
};

enum class OracleMode { Faithful, Complete };

inline OracleResult minimal_subset_oracle(const EvalContext& ctx, Metric metric, OracleMode mode,
                                          double eps = 1e-9) {
    const auto& g = ctx.graph();
    const std::size_t n = g.edge_count();
    if (n > 14) throw std::invalid_argument("minimal_subset_oracle: graph too large for enumeration");

    Strategy side = mode == OracleMode::Faithful ? Strategy::Ns : Strategy::Dn;
    OracleResult out;
    for (std::size_t size = 0; size <= n; ++size) {
        // combinations of `size` edge indices in lexicographic order
        std::vector<EdgeIndex> combo(size);
        for (std::size_t i = 0; i < size; ++i) combo[i] = static_cast<EdgeIndex>(i);
        bool done = size == 0;
        while (true) {
            Circuit c(g.id(), combo);
            double d = circuit_distance(ctx, c, side, metric);
            if (d <= eps) {
                if (out.ties.empty()) out.achieved = d;
                out.ties.push_back(c);
            }
            if (size == 0 || done) break;
            // advance combination
            int i = static_cast<int>(size) - 1;
            while (i >= 0 && combo[i] == static_cast<EdgeIndex>(n - size + i)) --i;
            if (i < 0) break;
            ++combo[i];
            for (std::size_t j = i + 1; j < size; ++j) combo[j] = combo[j - 1] + 1;
        }
        if (!out.ties.empty()) break;
    }
    out.tie_count = static_cast<long long>(out.ties.size());
    out.minimal = out.ties.front();
    out.core = out.ties.front();
    for (const auto& t : out.ties) out.core = circuit_intersection(out.core, t);
    return out;
}

// Full evaluation bundle for one circuit (sections filled on demand).
struct EvalReport {
    std::optional<FaithfulnessResult> faithfulness;
    std::optional<CompletenessResult> completeness;
    std::optional<SampledIncompleteness> incompleteness;
    std::optional<RandomnessResult> randomness;
    std::vector<GateEffect> gate_stats;
    std::optional<Proportions> label_proportions;
};

// ---------------------------------------------------------------------------
// Oracle-vs-gate-structure agreement on a planted analytic network: the
// minimal faithful subsets consist of all AND and ADDER edges, exactly one
// edge per OR gate, and the trunk; the minimal complete subsets mirror them
// with AND and OR swapped. Tie counts equal the product of the free gates'
// sizes.
// ---------------------------------------------------------------------------
struct CorollaryCheck {
    bool ok = true;
    std::string failure;
    long long faithful_ties = 0;
    long long complete_ties = 0;
};

inline CorollaryCheck check_corollary(const AnalyticModel& net, Metric metric = Metric::SinkAbsDiff,
                                      double eps = 1e-9) {
    auto ctx = build_context(net, gate_canonical_dataset(net));
    const auto& g = net.graph();
    CorollaryCheck out;
    auto fail = [&](const std::string& why) {
        out.ok = false;
        if (out.failure.empty()) out.failure = why;
    };

    std::vector<EdgeIndex> and_edges, or_edges, adder_edges;
    std::vector<const PlantedGate*> and_gates, or_gates;
    for (const auto& pg : net.planted_gates()) {
        if (pg.kind == GateKind::And) {
            and_gates.push_back(&pg);
            for (auto e : pg.member_edges) and_edges.push_back(e);
        } else if (pg.kind == GateKind::Or) {
            or_gates.push_back(&pg);
            for (auto e : pg.member_edges) or_edges.push_back(e);
        } else {
            for (auto e : pg.member_edges) adder_edges.push_back(e);
        }
    }
    auto contains_all = [&](const Circuit& c, const std::vector<EdgeIndex>& need) {
        for (EdgeIndex e : need)
            if (!c.contains(e)) return false;
        return true;
    };
    auto count_in = [&](const Circuit& c, const std::vector<EdgeIndex>& pool) {
        int n = 0;
        for (EdgeIndex e : pool) n += c.contains(e);
        return n;
    };

    auto faithful = minimal_subset_oracle(ctx, metric, OracleMode::Faithful, eps);
    long long expect_f = 1;
    for (auto* gate : or_gates) expect_f *= static_cast<long long>(gate->member_edges.size());
    out.faithful_ties = faithful.tie_count;
    if (faithful.tie_count != expect_f) fail("faithful tie count != product of OR gate sizes");
    if (!contains_all(faithful.core, and_edges) || !contains_all(faithful.core, adder_edges) ||
        !faithful.core.contains(net.trunk_edge()))
        fail("faithful core misses AND/ADDER/trunk edges");
    for (const auto& tie : faithful.ties) {
        if (!contains_all(tie, and_edges) || !contains_all(tie, adder_edges)) fail("faithful tie misses forced edges");
        for (auto* gate : or_gates)
            if (count_in(tie, gate->member_edges) != 1) fail("faithful tie does not keep exactly one OR edge");
    }

    auto complete = minimal_subset_oracle(ctx, metric, OracleMode::Complete, eps);
    long long expect_c = 1;
    for (auto* gate : and_gates) expect_c *= static_cast<long long>(gate->member_edges.size());
    out.complete_ties = complete.tie_count;
    if (complete.tie_count != expect_c) fail("complete tie count != product of AND gate sizes");
    if (!contains_all(complete.core, or_edges) || !contains_all(complete.core, adder_edges) ||
        !complete.core.contains(net.trunk_edge()))
        fail("complete core misses OR/ADDER/trunk edges");
    for (const auto& tie : complete.ties) {
        if (!contains_all(tie, or_edges) || !contains_all(tie, adder_edges)) fail("complete tie misses forced edges");
        for (auto* gate : and_gates)
            if (count_in(tie, gate->member_edges) != 1) fail("complete tie does not keep exactly one AND edge");
    }
    (void)g;
    return out;
}

}  // namespace gatecircuits
