// Ablation modes, clean/corrupted run orchestration, and circuit distances.
//
// Strategy conventions (matching the patched-run contract in model.hpp):
//   Ns   — clean run is live; non-circuit edges carry frozen corrupted values;
//          distance measured against the full clean output.
//   Dn   — the corrupted state is the reference. With input-driven corruption
//          (interchange, gate-network source zeroing) the corrupted run is
//          live and non-circuit edges carry frozen clean values. With
//          synthetic ablation (zero/noise) the corruption itself is the frozen
//          side, so circuit edges stay frozen and everything else recomputes
//          from the clean input.
//   NsDn — the sum of both distances, per pair.

#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "gatecircuits/model.hpp"
#include "gatecircuits/rng.hpp"

namespace gatecircuits {

enum class Strategy { Ns, Dn, NsDn };

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Ns: return "ns";
        case Strategy::Dn: return "dn";
        case Strategy::NsDn: return "nsdn";
    }
    return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "ns" || s == "Ns") return Strategy::Ns;
    if (s == "dn" || s == "Dn") return Strategy::Dn;
    if (s == "nsdn" || s == "NsDn" || s == "ns+dn") return Strategy::NsDn;
    throw std::invalid_argument("unknown strategy: " + s);
}

struct AblationMode {
    enum class Kind { Zero, Noise, Interchange };
    Kind kind = Kind::Interchange;
    double noise_mean = 0.0;
    double noise_std = 0.0;

    static AblationMode zero() { return {Kind::Zero, 0.0, 0.0}; }
    static AblationMode noise(double mean, double std) {
        if (std < 0) throw std::invalid_argument("noise std must be >= 0");
        return {Kind::Noise, mean, std};
    }
    static AblationMode interchange() { return {Kind::Interchange, 0.0, 0.0}; }
};

// Default per family: interchange for input-driven models, zero ablation for
// the frozen-edge toys.
inline AblationMode default_ablation(const Model& model) {
    return model.edge_frozen_corruption() ? AblationMode::zero() : AblationMode::interchange();
}

// Corrupted activations for one pair. Zero/noise caches carry synthetic edge
// values (node values are not defined for them and are left zero-shaped);
// interchange runs the corrupted input through the model.
inline ActivationCache corrupted_cache(const Model& model, const TaskPair& pair, const AblationMode& mode,
                                       std::uint64_t seed = 0, std::size_t pair_index = 0) {
    const auto& g = model.graph();
    if (mode.kind == AblationMode::Kind::Interchange) {
        if (pair.corrupted.tokens.empty() && pair.corrupted.values.empty())
            throw std::invalid_argument("interchange ablation requested but pair lacks corrupted input");
        return model.forward(pair.corrupted);
    }
    ActivationCache clean = model.forward(pair.clean);
    ActivationCache cache;
    cache.edge_values.resize(g.edge_count());
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        cache.edge_values[e].assign(clean.edge_values[e].size(), 0.0);
        if (mode.kind == AblationMode::Kind::Noise) {
            Rng rng(derive_seed(derive_seed(seed, pair_index, "noise"), 0, edge_name(g.edges()[e])));
            for (auto& v : cache.edge_values[e]) v = rng.normal(mode.noise_mean, mode.noise_std);
        }
    }
    cache.node_values.resize(g.node_count());
    for (std::size_t p = 0; p < g.node_count(); ++p) cache.node_values[p].assign(clean.node_values[p].size(), 0.0);
    // Reference output of the fully ablated state.
    PatchPlan plan{&pair.clean, &cache.edge_values, true};
    cache.logits = model.patched_logits(plan, Circuit::empty(g));
    return cache;
}

// Precomputed per-pair state for repeated patched evaluations.
struct PairContext {
    const TaskPair* pair = nullptr;
    std::vector<std::vector<double>> clean_edges;
    std::vector<std::vector<double>> corrupted_edges;
    std::vector<double> ns_ref;  // full clean output
    std::vector<double> dn_ref;  // fully corrupted output
    MetricLabels labels;
};

struct EvalContext {
    const Model* model = nullptr;
    AblationMode mode;
    std::shared_ptr<const TaskDataset> data;  // owned so pair pointers stay valid
    std::vector<PairContext> pairs;
    bool dn_live_corrupted = false;  // corrupted side is a real input run

    const ComputationalGraph& graph() const { return model->graph(); }
};

inline EvalContext build_context(const Model& model, const TaskDataset& data, const AblationMode& mode,
                                 std::uint64_t seed = 0) {
    if (data.pairs.empty()) throw std::invalid_argument("empty dataset");
    EvalContext ctx;
    ctx.model = &model;
    ctx.mode = mode;
    ctx.data = std::make_shared<const TaskDataset>(data);
    ctx.dn_live_corrupted = (mode.kind == AblationMode::Kind::Interchange) && !model.edge_frozen_corruption();
    ctx.pairs.reserve(ctx.data->pairs.size());
    for (std::size_t i = 0; i < ctx.data->pairs.size(); ++i) {
        const TaskPair& pair = ctx.data->pairs[i];
        PairContext pc;
        pc.pair = &pair;
        ActivationCache clean = model.forward(pair.clean);
        pc.ns_ref = clean.logits;
        pc.clean_edges = std::move(clean.edge_values);
        ActivationCache corr = corrupted_cache(model, pair, mode, seed, i);
        pc.dn_ref = corr.logits;
        pc.corrupted_edges = std::move(corr.edge_values);
        pc.labels = MetricLabels{pair.clean_label, pair.corrupted_label};
        ctx.pairs.push_back(std::move(pc));
    }
    return ctx;
}

inline EvalContext build_context(const Model& model, const TaskDataset& data, std::uint64_t seed = 0) {
    return build_context(model, data, default_ablation(model), seed);
}

// Patch plans for one pair under one strategy side (Ns or Dn).
inline PatchPlan ns_plan(const EvalContext&, const PairContext& pc) {
    return PatchPlan{&pc.pair->clean, &pc.corrupted_edges, true};
}

inline PatchPlan dn_plan(const EvalContext& ctx, const PairContext& pc) {
    if (ctx.dn_live_corrupted) return PatchPlan{&pc.pair->corrupted, &pc.clean_edges, true};
    return PatchPlan{&pc.pair->clean, &pc.corrupted_edges, false};
}

inline const std::vector<double>& strategy_ref(const EvalContext&, const PairContext& pc, Strategy side) {
    return side == Strategy::Ns ? pc.ns_ref : pc.dn_ref;
}

inline std::vector<double> patched_output(const EvalContext& ctx, const PairContext& pc,
                                          const Circuit& retained, Strategy side) {
    if (side == Strategy::NsDn) throw std::invalid_argument("patched_output takes a single side (Ns or Dn)");
    PatchPlan plan = side == Strategy::Ns ? ns_plan(ctx, pc) : dn_plan(ctx, pc);
    return ctx.model->patched_logits(plan, retained);
}

// Mean distance between the strategy reference and the circuit's patched
// output. NsDn is exactly the Ns + Dn sum, per pair.
inline double circuit_distance(const EvalContext& ctx, const Circuit& circuit, Strategy strategy, Metric metric) {
    if (ctx.pairs.empty()) throw std::invalid_argument("empty dataset");
    double total = 0.0;
    for (const auto& pc : ctx.pairs) {
        if (strategy == Strategy::Ns || strategy == Strategy::NsDn)
            total += metric_distance(metric, pc.ns_ref, patched_output(ctx, pc, circuit, Strategy::Ns), pc.labels);
        if (strategy == Strategy::Dn || strategy == Strategy::NsDn)
            total += metric_distance(metric, pc.dn_ref, patched_output(ctx, pc, circuit, Strategy::Dn), pc.labels);
    }
    return total / static_cast<double>(ctx.pairs.size());
}

// Fraction of pairs whose patched-run argmax matches the clean label (Ns) or
// the corrupted label (Dn). NsDn averages the two sides.
inline double circuit_accuracy(const EvalContext& ctx, const Circuit& circuit, Strategy strategy) {
    if (!ctx.model->is_token_model())
        throw std::invalid_argument("accuracy is undefined for models without label semantics");
    double total = 0.0;
    for (const auto& pc : ctx.pairs) {
        double acc = 0.0;
        int sides = 0;
        if (strategy == Strategy::Ns || strategy == Strategy::NsDn) {
            acc += (argmax(patched_output(ctx, pc, circuit, Strategy::Ns)) == pc.pair->clean_label) ? 1.0 : 0.0;
            ++sides;
        }
        if (strategy == Strategy::Dn || strategy == Strategy::NsDn) {
            acc += (argmax(patched_output(ctx, pc, circuit, Strategy::Dn)) == pc.pair->corrupted_label) ? 1.0 : 0.0;
            ++sides;
        }
        total += acc / sides;
    }
    return total / static_cast<double>(ctx.pairs.size());
}

// Mean distance between two circuits' patched outputs on the same side.
inline double circuits_output_distance(const EvalContext& ctx, const Circuit& a, const Circuit& b,
                                       Strategy side, Metric metric) {
    if (ctx.pairs.empty()) throw std::invalid_argument("empty dataset");
    double total = 0.0;
    for (const auto& pc : ctx.pairs) {
        auto va = patched_output(ctx, pc, a, side);
        auto vb = patched_output(ctx, pc, b, side);
        total += metric_distance(metric, va, vb, pc.labels);
    }
    return total / static_cast<double>(ctx.pairs.size());
}

}  // namespace gatecircuits
