// Gate extraction from a granularity-aligned (C_Ns, C_Dn) pair, plus the
// misalignment scores that validate the alignment.
//
// Labels are pure set operations: AND = Ns-only, OR = Dn-only, ADDER = shared.
// The misalignment statistics ablate one or two same-receiver edges from the
// full graph (noising side) and compare patched outputs directly.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gatecircuits/discovery.hpp"
#include "gatecircuits/intervention.hpp"

namespace gatecircuits {

enum class GateLabel { And, Or, Adder };

inline std::string gate_label_name(GateLabel l) {
    switch (l) {
        case GateLabel::And: return "and";
        case GateLabel::Or: return "or";
        case GateLabel::Adder: return "adder";
    }
    return "?";
}

struct GateLabeling {
    Circuit and_edges;
    Circuit or_edges;
    Circuit adder_edges;
    bool size_mismatch = false;  // |C_Ns| != |C_Dn| (warning, not an error)

    std::size_t size() const { return and_edges.size() + or_edges.size() + adder_edges.size(); }
    Circuit all() const { return circuit_union(circuit_union(and_edges, or_edges), adder_edges); }
};

inline GateLabeling classify_gates(const Circuit& c_ns, const Circuit& c_dn) {
    require_same_graph(c_ns, c_dn);
    GateLabeling out;
    out.and_edges = circuit_difference(c_ns, c_dn);
    out.or_edges = circuit_difference(c_dn, c_ns);
    out.adder_edges = circuit_intersection(c_ns, c_dn);
    out.size_mismatch = c_ns.size() != c_dn.size();
    return out;
}

struct Gate {
    NodeId receiver;
    GateLabel label = GateLabel::Adder;
    std::vector<EdgeIndex> members;  // nonempty, same receiver, same label
};

// Group labeled edges by (receiver, label); a receiver with mixed labels
// yields one gate per label. Singleton gates are permitted.
inline std::vector<Gate> group_gates(const GateLabeling& labeling, const ComputationalGraph& g) {
    std::map<std::pair<int, int>, Gate> groups;  // (receiver topo pos, label)
    auto add = [&](const Circuit& c, GateLabel label) {
        require_graph(g, c);
        for (EdgeIndex e : c.members()) {
            int pos = g.topo_pos(g.edges()[e].receiver);
            auto key = std::make_pair(pos, static_cast<int>(label));
            auto it = groups.find(key);
            if (it == groups.end())
                it = groups.emplace(key, Gate{g.edges()[e].receiver, label, {}}).first;
            it->second.members.push_back(e);
        }
    };
    add(labeling.and_edges, GateLabel::And);
    add(labeling.or_edges, GateLabel::Or);
    add(labeling.adder_edges, GateLabel::Adder);
    std::vector<Gate> out;
    out.reserve(groups.size());
    for (auto& kv : groups) out.push_back(std::move(kv.second));
    return out;
}

struct SamplerConfig {
    int samples = 30;
    std::size_t size_min = 2;
    std::size_t size_max = 5;
    std::uint64_t seed = 0;
    int exhaustive_pair_limit = 200;  // enumerate pairs exactly below this count
};

struct MisalignmentReport {
    double and_score = 0.0;
    double or_score = 0.0;
    bool and_valid = false;
    bool or_valid = false;
    double constant_m = 1.5;
    int sample_count = 0;
    double ratio_tested = 1.0;  // |C_Ns| : |C_Dn|
    int k_dn = 0;
};

namespace detail {

// All unordered same-receiver pairs within a labeled edge set.
inline std::vector<std::pair<EdgeIndex, EdgeIndex>> same_receiver_pairs(const ComputationalGraph& g,
                                                                        const Circuit& c) {
    std::map<int, std::vector<EdgeIndex>> by_receiver;
    for (EdgeIndex e : c.members()) by_receiver[g.topo_pos(g.edges()[e].receiver)].push_back(e);
    std::vector<std::pair<EdgeIndex, EdgeIndex>> pairs;
    for (const auto& kv : by_receiver)
        for (std::size_t i = 0; i < kv.second.size(); ++i)
            for (std::size_t j = i + 1; j < kv.second.size(); ++j)
                pairs.push_back({kv.second[i], kv.second[j]});
    return pairs;
}

template <typename T>
std::vector<T> cap_sample(std::vector<T> items, int limit, Rng& rng) {
    if (static_cast<int>(items.size()) <= limit) return items;
    rng.shuffle(items);
    items.resize(limit);
    return items;
}

inline Circuit graph_minus(const EvalContext& ctx, std::initializer_list<EdgeIndex> removed) {
    std::vector<char> keep(ctx.graph().edge_count(), 1);
    for (EdgeIndex e : removed) keep[e] = 0;
    std::vector<EdgeIndex> members;
    for (EdgeIndex e = 0; e < ctx.graph().edge_count(); ++e)
        if (keep[e]) members.push_back(e);
    return Circuit(ctx.graph().id(), std::move(members));
}

// Draw K subset of `pool` such that the remainder still holds a same-receiver
// pair; resamples a bounded number of times.
inline Circuit draw_k_with_pairs(const EvalContext& ctx, const Circuit& pool, const SamplerConfig& cfg,
                                 Rng& rng) {
    std::size_t hi = std::min(cfg.size_max, pool.size() >= 2 ? pool.size() - 2 : 0);
    if (cfg.size_min > hi)
        throw std::invalid_argument("misalignment sampler: set too small for the requested subset sizes");
    for (int attempt = 0; attempt < 200; ++attempt) {
        Circuit k = random_subcircuit(pool, cfg.size_min, hi, rng);
        Circuit rest = circuit_difference(pool, k);
        if (!same_receiver_pairs(ctx.graph(), rest).empty()) return k;
    }
    throw std::runtime_error("misalignment sampler: no subset leaves a same-receiver pair");
}

}  // namespace detail

// Misalignment of AND (higher = more ADDER edges misfiled as AND): the mean
// extra output change from removing a second same-receiver edge, on the full
// set minus the same statistic on randomly thinned versions of the set.
inline double misalignment_and(const EvalContext& ctx, const Circuit& c_and, const SamplerConfig& cfg,
                               Metric metric) {
    const auto& g = ctx.graph();
    auto pairs = detail::same_receiver_pairs(g, c_and);
    if (pairs.empty()) throw std::invalid_argument("misalignment_and: no same-receiver pair available");
    Rng rng(derive_seed(cfg.seed, 0, "misalign-and"));

    auto pair_stat = [&](const std::vector<std::pair<EdgeIndex, EdgeIndex>>& ps,
                         const Circuit& removed_context) {
        double total = 0.0;
        for (const auto& [i, j] : ps) {
            Circuit a = circuit_difference(detail::graph_minus(ctx, {i}), removed_context);
            Circuit b = circuit_difference(detail::graph_minus(ctx, {i, j}), removed_context);
            total += circuits_output_distance(ctx, a, b, Strategy::Ns, metric);
        }
        return total / ps.size();
    };

    double term1 = pair_stat(detail::cap_sample(pairs, cfg.exhaustive_pair_limit, rng), Circuit::empty(g));

    double term2 = 0.0;
    for (int s = 0; s < cfg.samples; ++s) {
        Circuit k = detail::draw_k_with_pairs(ctx, c_and, cfg, rng);
        auto star_pairs = detail::same_receiver_pairs(g, circuit_difference(c_and, k));
        term2 += pair_stat(detail::cap_sample(star_pairs, cfg.exhaustive_pair_limit, rng), k);
    }
    term2 /= cfg.samples;
    return term1 - term2;
}

// Misalignment of OR (higher = more ADDER edges misfiled as OR): single-edge
// removals should be free for true OR gates, so the difference-in-differences
// against pair removals cancels up to the constant m.
inline double misalignment_or(const EvalContext& ctx, const Circuit& c_or, const SamplerConfig& cfg,
                              Metric metric, double m = 1.5) {
    const auto& g = ctx.graph();
    auto pairs = detail::same_receiver_pairs(g, c_or);
    if (pairs.empty()) throw std::invalid_argument("misalignment_or: no same-receiver pair available");
    Rng rng(derive_seed(cfg.seed, 0, "misalign-or"));

    double term1 = 0.0, term2 = 0.0;
    int combos = 0;
    for (int s = 0; s < cfg.samples; ++s) {
        Circuit k = detail::draw_k_with_pairs(ctx, c_or, cfg, rng);
        auto star_pairs = detail::same_receiver_pairs(g, circuit_difference(c_or, k));
        auto ps = detail::cap_sample(pairs, cfg.exhaustive_pair_limit, rng);
        auto ps_star = detail::cap_sample(star_pairs, cfg.exhaustive_pair_limit, rng);
        long long budget = static_cast<long long>(cfg.exhaustive_pair_limit);
        for (const auto& [i, j] : ps) {
            for (const auto& [i2, j2] : ps_star) {
                if (--budget < 0) break;
                Circuit b1 = circuit_difference(detail::graph_minus(ctx, {i2}), k);
                term1 += circuits_output_distance(ctx, detail::graph_minus(ctx, {i}), b1, Strategy::Ns, metric);
                Circuit a2 = detail::graph_minus(ctx, {i, j});
                Circuit b2 = circuit_difference(detail::graph_minus(ctx, {i2, j2}), k);
                term2 += circuits_output_distance(ctx, a2, b2, Strategy::Ns, metric);
                ++combos;
            }
            if (budget < 0) break;
        }
    }
    if (combos == 0) throw std::runtime_error("misalignment_or: no usable pair combinations");
    return term1 / combos - term2 / combos + m;
}

// Sweep the Dn circuit size at fixed k_ns; the summed misalignment score
// should bottom out near matched sizes.
struct RatioSweepResult {
    std::vector<MisalignmentReport> reports;
    int best_index = -1;  // minimizer of and_score + or_score over valid rows
};

inline RatioSweepResult ratio_sweep(const EvalContext& ctx, const DiscoveryConfig& algo, int k_ns,
                                    const std::vector<int>& k_dn_grid, const SamplerConfig& sampler,
                                    Metric metric, double m = 1.5) {
    DiscoveryConfig cfg = algo;
    cfg.strategy = Strategy::Ns;
    Circuit c_ns = discover_at_k(ctx, cfg, k_ns);

    RatioSweepResult out;
    double best = 0.0;
    for (int k_dn : k_dn_grid) {
        cfg.strategy = Strategy::Dn;
        Circuit c_dn = discover_at_k(ctx, cfg, k_dn);
        GateLabeling labeling = classify_gates(c_ns, c_dn);
        MisalignmentReport rep;
        rep.k_dn = k_dn;
        rep.constant_m = m;
        rep.sample_count = sampler.samples;
        rep.ratio_tested = k_dn == 0 ? 0.0 : static_cast<double>(k_ns) / k_dn;
        try {
            rep.and_score = misalignment_and(ctx, labeling.and_edges, sampler, metric);
            rep.and_valid = true;
        } catch (const std::exception&) {
            rep.and_valid = false;
        }
        try {
            rep.or_score = misalignment_or(ctx, labeling.or_edges, sampler, metric, m);
            rep.or_valid = true;
        } catch (const std::exception&) {
            rep.or_valid = false;
        }
        if (rep.and_valid && rep.or_valid) {
            double sum = rep.and_score + rep.or_score;
            if (out.best_index < 0 || sum < best) {
                best = sum;
                out.best_index = static_cast<int>(out.reports.size());
            }
        }
        out.reports.push_back(rep);
    }
    return out;
}

}  // namespace gatecircuits
