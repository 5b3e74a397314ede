// Circuit discovery: greedy threshold search, linear (first-order) estimation,
// and differentiable hard-concrete masks, each under Ns, Dn, or the combined
// Ns+Dn criterion, with exact-k sizing on top.
//
// A discovery run may restrict itself to a candidate edge subset; edges
// outside the candidate set are pinned to the clean side of every patched run
// and never appear in returned circuits. The default candidate set is the
// whole edge set.

#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "gatecircuits/intervention.hpp"

namespace gatecircuits {

enum class DiscoveryAlgorithm { Greedy, Linear, Mask };

inline std::string algorithm_name(DiscoveryAlgorithm a) {
    switch (a) {
        case DiscoveryAlgorithm::Greedy: return "greedy";
        case DiscoveryAlgorithm::Linear: return "linear";
        case DiscoveryAlgorithm::Mask: return "mask";
    }
    return "?";
}

inline DiscoveryAlgorithm algorithm_from_string(const std::string& s) {
    if (s == "greedy") return DiscoveryAlgorithm::Greedy;
    if (s == "linear") return DiscoveryAlgorithm::Linear;
    if (s == "mask") return DiscoveryAlgorithm::Mask;
    throw std::invalid_argument("unknown algorithm: " + s);
}

struct MaskHparams {
    double temperature = 2.0 / 3.0;
    double stretch_lo = -0.1;
    double stretch_hi = 1.1;
    double sparsity_penalty = 0.1;
    int steps = 2000;
    double lr = 0.1;
    double init_mean = 1.5;  // log-alpha init: gates start mostly open
    double init_std = 0.3;
    // k-targeted runs: treat the sparsity penalty as a dual variable adapted
    // until the expected number of open gates matches the edge budget.
    bool adapt_to_k = false;
};

// Exact-k sizing for greedy: re-run with a bisected threshold, or trim a
// single low-threshold run.
enum class GreedyKMode { Bisect, Trim };

struct DiscoveryConfig {
    DiscoveryAlgorithm algorithm = DiscoveryAlgorithm::Greedy;
    Strategy strategy = Strategy::Ns;
    double tau = -1.0;  // threshold target; exclusive with k
    int k = -1;         // exact edge-count target
    Metric metric = Metric::KlDivergence;
    std::uint64_t seed = 0;
    MaskHparams mask;
    bool nsdn_joint_mask = false;  // optimize the summed objective jointly instead of averaging
    GreedyKMode greedy_k_mode = GreedyKMode::Bisect;
    std::optional<std::vector<EdgeIndex>> candidates;

    void validate_target() const {
        if ((tau > 0) == (k >= 0))
            throw std::invalid_argument("discovery config: exactly one of tau / k must be set");
    }
};

struct EdgeScores {
    std::vector<double> values;  // by canonical edge index; zero outside the candidate set
};

struct GreedyStep {
    EdgeIndex edge = 0;
    double delta = 0.0;
    bool removed = false;
};

struct GreedyResult {
    Circuit circuit;
    std::vector<GreedyStep> trace;
    double final_distance = 0.0;
};

namespace detail {

inline std::vector<EdgeIndex> candidate_list(const EvalContext& ctx, const DiscoveryConfig& cfg) {
    if (!cfg.candidates) {
        std::vector<EdgeIndex> all(ctx.graph().edge_count());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<EdgeIndex>(i);
        return all;
    }
    auto list = *cfg.candidates;
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    if (!list.empty() && list.back() >= ctx.graph().edge_count())
        throw std::invalid_argument("candidate edge out of range");
    return list;
}

// Retained set handed to the patcher: pinned (non-candidate) edges join the
// circuit on the Ns side (they sit on the clean side either way).
inline Circuit effective_retained(const EvalContext& ctx, const Circuit& circuit,
                                  const std::vector<EdgeIndex>& candidates, Strategy side) {
    if (candidates.size() == ctx.graph().edge_count()) return circuit;
    if (side == Strategy::Ns) {
        std::vector<char> is_candidate(ctx.graph().edge_count(), 0);
        for (EdgeIndex e : candidates) is_candidate[e] = 1;
        std::vector<EdgeIndex> members = circuit.members();
        for (std::size_t e = 0; e < ctx.graph().edge_count(); ++e)
            if (!is_candidate[e]) members.push_back(static_cast<EdgeIndex>(e));
        std::sort(members.begin(), members.end());
        return Circuit(circuit.graph_id(), std::move(members));
    }
    return circuit;
}

inline double strategy_distance(const EvalContext& ctx, const Circuit& circuit,
                                const std::vector<EdgeIndex>& candidates, Strategy strategy, Metric metric) {
    double d = 0.0;
    if (strategy == Strategy::Ns || strategy == Strategy::NsDn)
        d += circuit_distance(ctx, effective_retained(ctx, circuit, candidates, Strategy::Ns), Strategy::Ns, metric);
    if (strategy == Strategy::Dn || strategy == Strategy::NsDn)
        d += circuit_distance(ctx, effective_retained(ctx, circuit, candidates, Strategy::Dn), Strategy::Dn, metric);
    return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Greedy threshold search: start from the full candidate set, visit receivers
// output-first, test-remove each in-edge in a seed-determined order, keep the
// removal whenever the aggregated distance increase stays below tau. Earlier
// removals persist, so every decision conditions the next.
// ---------------------------------------------------------------------------
inline GreedyResult greedy_discover(const EvalContext& ctx, const DiscoveryConfig& cfg) {
    if (cfg.tau <= 0) throw std::invalid_argument("greedy: tau must be > 0");
    const auto& g = ctx.graph();
    auto candidates = detail::candidate_list(ctx, cfg);
    std::vector<char> kept(g.edge_count(), 0);
    for (EdgeIndex e : candidates) kept[e] = 1;

    auto current_circuit = [&]() {
        std::vector<EdgeIndex> members;
        for (EdgeIndex e : candidates)
            if (kept[e]) members.push_back(e);
        return Circuit(g.id(), std::move(members));
    };

    GreedyResult res;
    double dist = detail::strategy_distance(ctx, current_circuit(), candidates, cfg.strategy, cfg.metric);
    for (int p = static_cast<int>(g.node_count()) - 1; p >= 0; --p) {
        std::vector<EdgeIndex> in;
        for (EdgeIndex e : g.in_edges(p))
            if (kept[e]) in.push_back(e);
        if (in.empty()) continue;
        Rng order_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(p), "greedy-order"));
        order_rng.shuffle(in);
        for (EdgeIndex e : in) {
            kept[e] = 0;
            double trial = detail::strategy_distance(ctx, current_circuit(), candidates, cfg.strategy, cfg.metric);
            double delta = trial - dist;
            bool remove = delta < cfg.tau;
            if (remove)
                dist = trial;
            else
                kept[e] = 1;
            res.trace.push_back({e, delta, remove});
        }
    }
    res.circuit = current_circuit();
    res.final_distance = dist;
    return res;
}

// ---------------------------------------------------------------------------
// Linear estimation: per-edge first-order effect (corrupted - clean) dotted
// with the loss gradient at the clean run (Ns), at the corrupted state (Dn),
// or the sum of both terms (NsDn). One backward sweep per side per pair; all
// other edges stay unpatched while scoring.
// ---------------------------------------------------------------------------
inline EdgeScores linear_scores(const EvalContext& ctx, const DiscoveryConfig& cfg) {
    if (!metric_differentiable(cfg.metric))
        throw std::invalid_argument("linear estimation requires a differentiable metric");
    const auto& g = ctx.graph();
    auto candidates = detail::candidate_list(ctx, cfg);
    std::vector<char> is_candidate(g.edge_count(), 0);
    for (EdgeIndex e : candidates) is_candidate[e] = 1;

    EdgeScores scores;
    scores.values.assign(g.edge_count(), 0.0);
    const Circuit full = Circuit::full(g);

    for (const auto& pc : ctx.pairs) {
        LossSpec loss;
        if (ctx.model->is_token_model())
            loss = LossSpec{LossSpec::Kind::LogitDiff, pc.pair->clean_label, pc.pair->corrupted_label};
        else
            loss = LossSpec{LossSpec::Kind::SinkValue, -1, -1};

        auto accumulate = [&](const EdgeGradients& grads) {
            for (EdgeIndex e : candidates) {
                const auto& ge = grads.grads[e];
                const auto& xc = pc.clean_edges[e];
                const auto& xt = pc.corrupted_edges[e];
                double s = 0.0;
                for (std::size_t i = 0; i < ge.size(); ++i) s += (xt[i] - xc[i]) * ge[i];
                scores.values[e] += s;
            }
        };
        if (cfg.strategy == Strategy::Ns || cfg.strategy == Strategy::NsDn)
            accumulate(ctx.model->edge_gradients_at(ns_plan(ctx, pc), full, loss, GradSide::Decrease));
        if (cfg.strategy == Strategy::Dn || cfg.strategy == Strategy::NsDn) {
            // At a synthetic-ablation state the corrupted side is frozen; the
            // first-order expansion still differentiates through the network.
            bool through_frozen = !ctx.dn_live_corrupted;
            accumulate(ctx.model->edge_gradients_at(dn_plan(ctx, pc), full, loss, GradSide::Increase,
                                                    through_frozen));
        }
    }
    double inv = 1.0 / static_cast<double>(ctx.pairs.size());
    for (auto& v : scores.values) v *= inv;
    return scores;
}

// ---------------------------------------------------------------------------
// Differentiable masks: per-edge hard-concrete gates optimized against the
// strategy objective plus an expected-L0 penalty. Ns+Dn runs the two
// optimizations independently and averages the final expected masks, unless
// joint optimization of the summed objective is requested.
// ---------------------------------------------------------------------------
struct MaskResult {
    Circuit circuit;
    EdgeScores scores;  // final deterministic expected masks
};

namespace detail {

struct HardConcrete {
    double beta, lo, hi;

    double sample(double log_alpha, double u, double* dz_dla) const {
        double s = 1.0 / (1.0 + std::exp(-((std::log(u) - std::log1p(-u)) + log_alpha) / beta));
        double zbar = s * (hi - lo) + lo;
        if (zbar <= 0.0 || zbar >= 1.0) {
            if (dz_dla) *dz_dla = 0.0;
            return zbar <= 0.0 ? 0.0 : 1.0;
        }
        if (dz_dla) *dz_dla = s * (1.0 - s) / beta * (hi - lo);
        return zbar;
    }

    double deterministic(double log_alpha) const {
        double s = 1.0 / (1.0 + std::exp(-log_alpha / beta));
        double zbar = s * (hi - lo) + lo;
        return std::min(1.0, std::max(0.0, zbar));
    }

    // Lower-clamped only: gate values above 1 keep their ordering, so top-k
    // selection among partially open gates stays informative. Quantized so
    // saturated gates compare exactly equal and fall back to the canonical
    // tie-break rather than machine-epsilon noise.
    double deterministic_score(double log_alpha) const {
        double s = 1.0 / (1.0 + std::exp(-log_alpha / beta));
        double zbar = s * (hi - lo) + lo;
        return std::round(std::max(0.0, zbar) * 1e6) / 1e6;
    }

    // P(gate > 0) — the expected-L0 contribution of one edge.
    double open_probability(double log_alpha, double* d_dla) const {
        double shift = beta * std::log(-lo / hi);
        double s = 1.0 / (1.0 + std::exp(-(log_alpha - shift)));
        if (d_dla) *d_dla = s * (1.0 - s);
        return s;
    }
};

inline double mask_pinned_z(Strategy side) { return side == Strategy::Ns ? 1.0 : 0.0; }

// One optimization under a single side (Ns or Dn), or the joint summed
// objective when both_sides is set. Returns final log-alphas. When target_k
// is nonnegative the sparsity penalty becomes a dual variable adapted so the
// expected number of open gates settles at the target, which keeps the gate
// ordering sharp around the selection boundary.
inline std::vector<double> optimize_mask(const EvalContext& ctx, const DiscoveryConfig& cfg,
                                         const std::vector<EdgeIndex>& candidates, Strategy side,
                                         bool both_sides, int target_k = -1) {
    const auto& g = ctx.graph();
    const auto& hp = cfg.mask;
    HardConcrete hc{hp.temperature, hp.stretch_lo, hp.stretch_hi};
    std::vector<char> is_candidate(g.edge_count(), 0);
    for (EdgeIndex e : candidates) is_candidate[e] = 1;

    Rng init_rng(derive_seed(cfg.seed, 0, both_sides ? "mask-init-joint" : (side == Strategy::Ns ? "mask-init-ns" : "mask-init-dn")));
    std::vector<double> log_alpha(g.edge_count(), 0.0);
    for (EdgeIndex e : candidates) log_alpha[e] = hp.init_mean + hp.init_std * init_rng.normal();

    Rng noise_rng(derive_seed(cfg.seed, 1, "mask-noise"));
    std::vector<double> m(g.edge_count(), 0.0), v(g.edge_count(), 0.0);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double lambda = hp.sparsity_penalty;

    std::vector<double> z(g.edge_count(), 0.0), dz(g.edge_count(), 0.0), dla(g.edge_count(), 0.0);
    std::vector<double> grad(g.edge_count(), 0.0);

    for (int step = 1; step <= hp.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;

        auto run_side = [&](Strategy s) {
            // pinned edges sit on the clean side of this run
            for (std::size_t e = 0; e < g.edge_count(); ++e)
                if (!is_candidate[e]) z[e] = mask_pinned_z(s);
            for (EdgeIndex e : candidates) {
                double u = noise_rng.uniform_open();
                if (u >= 1.0) u = 1.0 - 1e-12;
                z[e] = hc.sample(log_alpha[e], u, &dla[e]);
            }
            for (const auto& pc : ctx.pairs) {
                std::fill(dz.begin(), dz.end(), 0.0);
                PatchPlan plan = s == Strategy::Ns ? ns_plan(ctx, pc) : dn_plan(ctx, pc);
                loss += ctx.model->soft_mask_loss_grad(plan, z, strategy_ref(ctx, pc, s), cfg.metric,
                                                       pc.labels, dz);
                for (EdgeIndex e : candidates) grad[e] += dz[e] * dla[e];
            }
        };
        if (both_sides) {
            run_side(Strategy::Ns);
            run_side(Strategy::Dn);
        } else {
            run_side(side);
        }

        double inv = 1.0 / static_cast<double>(ctx.pairs.size());
        loss *= inv;
        for (EdgeIndex e : candidates) grad[e] *= inv;
        double expected_open = 0.0;
        for (EdgeIndex e : candidates) {
            double dl0 = 0.0;
            double p_open = hc.open_probability(log_alpha[e], &dl0);
            expected_open += p_open;
            loss += lambda * p_open;
            grad[e] += lambda * dl0;
        }
        if (target_k >= 0 && hp.adapt_to_k) {
            // dual ascent on the sparsity multiplier toward the edge budget
            lambda = std::max(0.0, lambda + 0.01 * (expected_open - target_k) / candidates.size());
        }
        if (!std::isfinite(loss))
            throw std::runtime_error("mask optimization diverged at step " + std::to_string(step) +
                                     " (non-finite loss)");

        double bc1 = 1.0 - std::pow(b1, step), bc2 = 1.0 - std::pow(b2, step);
        for (EdgeIndex e : candidates) {
            m[e] = b1 * m[e] + (1 - b1) * grad[e];
            v[e] = b2 * v[e] + (1 - b2) * grad[e] * grad[e];
            log_alpha[e] -= hp.lr * (m[e] / bc1) / (std::sqrt(v[e] / bc2) + eps);
            if (!std::isfinite(log_alpha[e]))
                throw std::runtime_error("mask optimization diverged at step " + std::to_string(step) +
                                         " (non-finite mask parameter on edge " +
                                         edge_name(g.edges()[e]) + ")");
        }
    }
    return log_alpha;
}

}  // namespace detail

inline MaskResult mask_discover(const EvalContext& ctx, const DiscoveryConfig& cfg, int target_k = -1) {
    const auto& g = ctx.graph();
    auto candidates = detail::candidate_list(ctx, cfg);
    detail::HardConcrete hc{cfg.mask.temperature, cfg.mask.stretch_lo, cfg.mask.stretch_hi};

    EdgeScores scores;
    scores.values.assign(g.edge_count(), 0.0);
    auto fill_scores = [&](const std::vector<double>& log_alpha, double weight) {
        for (EdgeIndex e : candidates) scores.values[e] += weight * hc.deterministic_score(log_alpha[e]);
    };

    if (cfg.strategy == Strategy::NsDn && !cfg.nsdn_joint_mask) {
        // independent optimizations, then average the two expected masks
        fill_scores(detail::optimize_mask(ctx, cfg, candidates, Strategy::Ns, false, target_k), 0.5);
        fill_scores(detail::optimize_mask(ctx, cfg, candidates, Strategy::Dn, false, target_k), 0.5);
    } else if (cfg.strategy == Strategy::NsDn) {
        fill_scores(detail::optimize_mask(ctx, cfg, candidates, Strategy::Ns, true, target_k), 1.0);
    } else {
        fill_scores(detail::optimize_mask(ctx, cfg, candidates, cfg.strategy, false, target_k), 1.0);
    }

    double threshold = cfg.tau > 0 && cfg.tau < 1.0 ? cfg.tau : 0.5;
    std::vector<EdgeIndex> members;
    for (EdgeIndex e : candidates)
        if (scores.values[e] >= threshold) members.push_back(e);
    return MaskResult{Circuit(g.id(), std::move(members)), std::move(scores)};
}

// ---------------------------------------------------------------------------
// Sizing: top-k by |score| with canonical-order tie-breaks, and exact-k greedy.
// ---------------------------------------------------------------------------
inline Circuit select_top_k(const ComputationalGraph& g, const EdgeScores& scores, int k,
                            const std::optional<std::vector<EdgeIndex>>& candidates = std::nullopt) {
    if (scores.values.size() != g.edge_count()) throw std::invalid_argument("select_top_k: score size mismatch");
    std::vector<EdgeIndex> pool;
    if (candidates) {
        pool = *candidates;
        std::sort(pool.begin(), pool.end());
    } else {
        pool.resize(g.edge_count());
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<EdgeIndex>(i);
    }
    if (k < 0 || k > static_cast<int>(pool.size()))
        throw std::invalid_argument("select_top_k: k exceeds edge count");
    std::stable_sort(pool.begin(), pool.end(), [&](EdgeIndex a, EdgeIndex b) {
        double ma = std::abs(scores.values[a]), mb = std::abs(scores.values[b]);
        if (ma != mb) return ma > mb;
        return a < b;
    });
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return Circuit(g.id(), std::move(pool));
}

namespace detail {

// Trim a greedy result down to k by (delta ascending, canonical descending),
// or extend it with removed edges by (delta descending, canonical ascending).
inline Circuit resize_greedy(const ComputationalGraph& g, const GreedyResult& res, int k) {
    std::vector<std::pair<EdgeIndex, double>> kept, removed;
    for (const auto& step : res.trace)
        (step.removed ? removed : kept).push_back({step.edge, step.delta});
    // Later decisions can re-test an edge only once in this scheme, so the
    // trace holds one entry per candidate edge.
    if (static_cast<int>(kept.size()) >= k) {
        std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        kept.resize(k);
    } else {
        std::stable_sort(removed.begin(), removed.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        for (const auto& r : removed) {
            if (static_cast<int>(kept.size()) == k) break;
            kept.push_back(r);
        }
        if (static_cast<int>(kept.size()) < k) throw std::invalid_argument("greedy resize: k exceeds candidate count");
    }
    std::vector<EdgeIndex> members;
    members.reserve(kept.size());
    for (const auto& kv : kept) members.push_back(kv.first);
    std::sort(members.begin(), members.end());
    return Circuit(g.id(), std::move(members));
}

}  // namespace detail

inline Circuit greedy_discover_k(const EvalContext& ctx, const DiscoveryConfig& cfg, int k) {
    const auto& g = ctx.graph();
    auto candidates = detail::candidate_list(ctx, cfg);
    if (k > static_cast<int>(candidates.size()))
        throw std::invalid_argument("greedy: k exceeds candidate count");
    DiscoveryConfig run_cfg = cfg;

    run_cfg.tau = 1e-12;
    GreedyResult base = greedy_discover(ctx, run_cfg);
    if (cfg.greedy_k_mode == GreedyKMode::Trim || static_cast<int>(base.circuit.size()) <= k)
        return detail::resize_greedy(g, base, k);

    double hi = 1e-12;
    for (const auto& s : base.trace) hi = std::max(hi, std::abs(s.delta));
    hi = hi * 1.5 + 1e-9;
    double lo = 1e-12;
    GreedyResult best = base;  // smallest result with size >= k
    for (int it = 0; it < 24 && static_cast<int>(best.circuit.size()) != k; ++it) {
        double mid = 0.5 * (lo + hi);
        run_cfg.tau = mid;
        GreedyResult r = greedy_discover(ctx, run_cfg);
        int size = static_cast<int>(r.circuit.size());
        if (size >= k) {
            if (size < static_cast<int>(best.circuit.size())) best = r;
            lo = mid;
        } else {
            hi = mid;
        }
        if (size == k) {
            best = r;
            break;
        }
    }
    return detail::resize_greedy(g, best, k);
}

// One algorithm, one strategy, exactly k edges.
inline Circuit discover_at_k(const EvalContext& ctx, const DiscoveryConfig& cfg, int k) {
    if (k < 0 || k > static_cast<int>(ctx.graph().edge_count()))
        throw std::invalid_argument("k exceeds edge count");
    switch (cfg.algorithm) {
        case DiscoveryAlgorithm::Greedy:
            return greedy_discover_k(ctx, cfg, k);
        case DiscoveryAlgorithm::Linear:
            return select_top_k(ctx.graph(), linear_scores(ctx, cfg), k, cfg.candidates);
        case DiscoveryAlgorithm::Mask:
            return select_top_k(ctx.graph(), mask_discover(ctx, cfg, k).scores, k, cfg.candidates);
    }
    throw std::logic_error("unreachable");
}

// Threshold-mode discovery (tau must be set).
inline Circuit discover(const EvalContext& ctx, const DiscoveryConfig& cfg) {
    switch (cfg.algorithm) {
        case DiscoveryAlgorithm::Greedy:
            return greedy_discover(ctx, cfg).circuit;
        case DiscoveryAlgorithm::Linear: {
            if (cfg.tau <= 0) throw std::invalid_argument("linear threshold mode: tau must be > 0");
            auto scores = linear_scores(ctx, cfg);
            auto candidates = detail::candidate_list(ctx, cfg);
            std::vector<EdgeIndex> members;
            for (EdgeIndex e : candidates)
                if (std::abs(scores.values[e]) >= cfg.tau) members.push_back(e);
            return Circuit(ctx.graph().id(), std::move(members));
        }
        case DiscoveryAlgorithm::Mask:
            return mask_discover(ctx, cfg).circuit;
    }
    throw std::logic_error("unreachable");
}

// The granularity-aligned pair: the same algorithm once under Ns and once
// under Dn, both sized to exactly k edges.
inline std::pair<Circuit, Circuit> discover_pair(const EvalContext& ctx, const DiscoveryConfig& base, int k) {
    DiscoveryConfig cfg = base;
    cfg.strategy = Strategy::Ns;
    Circuit ns = discover_at_k(ctx, cfg, k);
    cfg.strategy = Strategy::Dn;
    Circuit dn = discover_at_k(ctx, cfg, k);
    return {std::move(ns), std::move(dn)};
}

}  // namespace gatecircuits
