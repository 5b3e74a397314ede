// Analytic scalar models: gate networks (AND = min, OR = max, ADDER = sum over
// in-edge values) and the one-layer two-head toys with ReLU-based readouts.
//
// Gate networks are input-driven: sources carry 1 on the clean side and 0 on
// the corrupted side. The toys use frozen-zero edge ablation instead: the
// input is the zero tensor on both sides and corruption zeroes edge values
// directly, so head outputs equal their biases until ablated.

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gatecircuits/model.hpp"

namespace gatecircuits {

enum class GateKind { And, Or, Adder };

inline std::string gate_kind_name(GateKind k) {
    switch (k) {
        case GateKind::And: return "AND";
        case GateKind::Or: return "OR";
        case GateKind::Adder: return "ADDER";
    }
    return "?";
}

inline GateKind gate_kind_from_string(const std::string& s) {
    if (s == "AND" || s == "and") return GateKind::And;
    if (s == "OR" || s == "or") return GateKind::Or;
    if (s == "ADDER" || s == "adder") return GateKind::Adder;
    throw std::invalid_argument("unknown gate kind: " + s);
}

struct GateSpecEntry {
    std::string name;
    GateKind kind = GateKind::Adder;
    std::vector<std::string> parents;
};

struct GateNetworkSpec {
    std::vector<GateSpecEntry> gates;
    std::string sink;  // empty: the last declared gate
};

// A gate as planted in a synthetic network (ground truth for tests).
struct PlantedGate {
    NodeId receiver;
    GateKind kind = GateKind::Adder;
    std::vector<EdgeIndex> member_edges;
};

class AnalyticModel final : public Model {
    enum class Op : std::uint8_t { Source, Sum, Min, Max };
    enum class Act : std::uint8_t { None, ReluShiftNeg1, SaturatingOr, Relu };

    struct NodeFn {
        Op op = Op::Sum;
        Act act = Act::None;
        double bias = 0.0;
    };

public:
    static std::unique_ptr<AnalyticModel> gate_network(const GateNetworkSpec& spec) {
        if (spec.gates.empty()) throw std::invalid_argument("gate network: no output node");

        std::map<std::string, int> depth;
        std::vector<std::string> sources;  // order of first appearance
        std::map<std::string, GateKind> kind_of;
        for (const auto& g : spec.gates) {
            if (kind_of.count(g.name)) throw std::invalid_argument("gate network: duplicate node " + g.name);
            if (g.parents.empty()) throw std::invalid_argument("gate network: gate without parents: " + g.name);
            kind_of[g.name] = g.kind;
        }
        for (const auto& g : spec.gates) {
            int d = 0;
            for (const auto& p : g.parents) {
                if (p == g.name) throw std::invalid_argument("gate network: self-parent on " + g.name);
                if (kind_of.count(p)) {
                    auto it = depth.find(p);
                    if (it == depth.end())
                        throw std::invalid_argument("gate network: parent declared after use: " + p);
                    d = std::max(d, it->second + 1);
                } else {
                    if (depth.find(p) == depth.end()) {
                        depth[p] = 0;
                        sources.push_back(p);
                    }
                    d = std::max(d, 1);
                }
            }
            depth[g.name] = d;
        }

        auto model = std::unique_ptr<AnalyticModel>(new AnalyticModel());
        std::map<std::string, NodeId> ids;
        std::vector<NodeId> nodes;
        for (std::size_t i = 0; i < sources.size(); ++i) {
            NodeId n{NodeKind::Input, 0, static_cast<int>(i)};
            ids[sources[i]] = n;
            nodes.push_back(n);
        }
        std::map<int, int> per_layer_count;
        int max_depth = 0;
        for (const auto& g : spec.gates) {
            int d = depth[g.name];
            NodeId n{NodeKind::GateNode, d, per_layer_count[d]++};
            ids[g.name] = n;
            nodes.push_back(n);
            max_depth = std::max(max_depth, d);
        }
        NodeId out{NodeKind::Output, max_depth + 1, 0};
        nodes.push_back(out);

        std::string sink = spec.sink.empty() ? spec.gates.back().name : spec.sink;
        if (!kind_of.count(sink)) throw std::invalid_argument("gate network: unknown sink " + sink);

        std::vector<EdgeId> edges;
        for (const auto& g : spec.gates)
            for (const auto& p : g.parents) edges.push_back(EdgeId{ids[p], ids[g.name]});
        edges.push_back(EdgeId{ids[sink], out});

        model->graph_ = std::make_unique<ComputationalGraph>(std::move(nodes), std::move(edges));
        model->labels_ = ids;
        model->edge_frozen_ = false;
        model->init_node_fns();
        for (const auto& g : spec.gates) {
            int pos = model->graph_->topo_pos(ids[g.name]);
            auto& fn = model->fns_[pos];
            switch (g.kind) {
                case GateKind::And: fn = {Op::Min, Act::None, 0.0}; break;
                case GateKind::Or: fn = {Op::Max, Act::None, 0.0}; break;
                case GateKind::Adder: fn = {Op::Sum, Act::None, 0.0}; break;
            }
        }
        model->finish_init();

        for (const auto& g : spec.gates) {
            PlantedGate pg;
            pg.receiver = ids[g.name];
            pg.kind = g.kind;
            for (const auto& p : g.parents)
                pg.member_edges.push_back(model->graph_->edge_index(EdgeId{ids[p], ids[g.name]}));
            std::sort(pg.member_edges.begin(), pg.member_edges.end());
            model->planted_.push_back(std::move(pg));
        }
        model->trunk_edge_ = model->graph_->edge_index(EdgeId{ids[sink], out});
        return model;
    }

    // One-layer transformer toy: two heads with biases feeding a ReLU-based
    // readout. AND: m(x) = relu(x-1); OR: m(x) = 1 - relu(1-x); ADDER:
    // m(x) = relu(x) with bias2 = 1.5. Bias overrides exist for negative
    // controls; the defaults are the canonical values.
    static std::unique_ptr<AnalyticModel> gate_toy(GateKind kind, std::optional<double> bias1_override = {},
                                                   std::optional<double> bias2_override = {}) {
        double bias1 = bias1_override.value_or(1.0);
        double bias2 = bias2_override.value_or(kind == GateKind::Adder ? 1.5 : 1.0);
        Act act = kind == GateKind::And ? Act::ReluShiftNeg1
                                        : (kind == GateKind::Or ? Act::SaturatingOr : Act::Relu);

        NodeId in{NodeKind::Input, 0, 0};
        NodeId a1{NodeKind::AttentionHead, 0, 0};
        NodeId a2{NodeKind::AttentionHead, 0, 1};
        NodeId m{NodeKind::Mlp, 0, 0};
        NodeId out{NodeKind::Output, 1, 0};
        std::vector<NodeId> nodes{in, a1, a2, m, out};
        std::vector<EdgeId> edges{{in, a1}, {in, a2}, {a1, m}, {a2, m}, {m, out}};

        auto model = std::unique_ptr<AnalyticModel>(new AnalyticModel());
        model->graph_ = std::make_unique<ComputationalGraph>(std::move(nodes), std::move(edges));
        model->edge_frozen_ = true;
        model->init_node_fns();
        model->fns_[model->graph_->topo_pos(a1)] = {Op::Sum, Act::None, bias1};
        model->fns_[model->graph_->topo_pos(a2)] = {Op::Sum, Act::None, bias2};
        model->fns_[model->graph_->topo_pos(m)] = {Op::Sum, act, 0.0};
        model->labels_ = {{"input", in}, {"A1", a1}, {"A2", a2}, {"m", m}, {"output", out}};
        model->finish_init();
        return model;
    }

    // --- Model interface -----------------------------------------------

    const ComputationalGraph& graph() const override { return *graph_; }
    bool is_token_model() const override { return false; }
    bool edge_frozen_corruption() const override { return edge_frozen_; }

    ActivationCache forward(const Example& input) const override {
        std::vector<double> vals, pres;
        run_full(input, vals, pres);
        ActivationCache cache;
        cache.node_values.resize(vals.size());
        for (std::size_t p = 0; p < vals.size(); ++p) cache.node_values[p] = {vals[p]};
        cache.edge_values.resize(graph_->edge_count());
        for (std::size_t e = 0; e < graph_->edge_count(); ++e)
            cache.edge_values[e] = {vals[graph_->topo_pos(graph_->edges()[e].sender)]};
        cache.logits = {vals[graph_->output_pos()], 0.0};
        return cache;
    }

    std::vector<double> patched_logits(const PatchPlan& plan, const Circuit& retained) const override {
        require_graph(*graph_, retained);
        auto live = live_mask(plan, retained);
        std::vector<double> vals(graph_->node_count()), carried(graph_->edge_count());
        run_patched(plan, live, vals, carried, nullptr);
        return {vals[graph_->output_pos()], 0.0};
    }

    EdgeGradients edge_gradients_at(const PatchPlan& plan, const Circuit& retained,
                                    const LossSpec& loss, GradSide side,
                                    bool through_frozen = false) const override {
        require_graph(*graph_, retained);
        auto live = live_mask(plan, retained);
        std::vector<double> vals(graph_->node_count()), carried(graph_->edge_count());
        std::vector<double> pres(graph_->node_count());
        run_patched(plan, live, vals, carried, &pres);

        std::vector<double> dval(graph_->node_count(), 0.0);
        dval[graph_->output_pos()] = seed_output_grad(loss, vals[graph_->output_pos()]);

        EdgeGradients out;
        out.grads.assign(graph_->edge_count(), {0.0});
        for (int p = static_cast<int>(graph_->node_count()) - 1; p >= 0; --p) {
            const auto& fn = fns_[p];
            if (fn.op == Op::Source) continue;
            double dpre = dval[p] * act_deriv(fn.act, pres[p], side);
            const auto& in = graph_->in_edges(p);
            for (EdgeIndex e : in) {
                double sel = agg_selector(fn.op, in, carried, e, side);
                double dc = dpre * sel;
                out.grads[e][0] = dc;
                if (live[e] || through_frozen)
                    dval[graph_->topo_pos(graph_->edges()[e].sender)] += dc;
            }
        }
        return out;
    }

    double soft_mask_loss_grad(const PatchPlan& plan, std::span<const double> z,
                               const std::vector<double>& ref_logits, Metric metric,
                               const MetricLabels& labels, std::vector<double>& dz) const override {
        if (z.size() != graph_->edge_count()) throw std::invalid_argument("soft mask: z size mismatch");
        const auto& frozen = *plan.frozen_edges;
        std::vector<double> vals(graph_->node_count()), pres(graph_->node_count());
        std::vector<double> carried(graph_->edge_count());
        int src_ix = 0;
        for (std::size_t p = 0; p < graph_->node_count(); ++p) {
            const auto& fn = fns_[p];
            if (fn.op == Op::Source) {
                vals[p] = plan.live_input->values.at(src_ix++);
                continue;
            }
            const auto& in = graph_->in_edges(static_cast<int>(p));
            for (EdgeIndex e : in) {
                double lv = vals[graph_->topo_pos(graph_->edges()[e].sender)];
                double fv = frozen[e][0];
                carried[e] = plan.live_is_retained ? z[e] * lv + (1.0 - z[e]) * fv
                                                   : z[e] * fv + (1.0 - z[e]) * lv;
            }
            pres[p] = aggregate(fn, in, carried);
            vals[p] = activate(fn.act, pres[p]);
        }
        std::vector<double> out_logits{vals[graph_->output_pos()], 0.0};
        double loss = metric_distance(metric, ref_logits, out_logits, labels);

        auto dlogits = metric_grad_out(metric, ref_logits, out_logits, labels);
        std::vector<double> dval(graph_->node_count(), 0.0);
        dval[graph_->output_pos()] = dlogits[0];
        for (int p = static_cast<int>(graph_->node_count()) - 1; p >= 0; --p) {
            const auto& fn = fns_[p];
            if (fn.op == Op::Source) continue;
            double dpre = dval[p] * act_deriv(fn.act, pres[p], GradSide::Increase);
            const auto& in = graph_->in_edges(p);
            for (EdgeIndex e : in) {
                double sel = agg_selector(fn.op, in, carried, e, GradSide::Increase);
                double dc = dpre * sel;
                double lv = vals[graph_->topo_pos(graph_->edges()[e].sender)];
                double fv = frozen[e][0];
                if (plan.live_is_retained) {
                    dz[e] += dc * (lv - fv);
                    dval[graph_->topo_pos(graph_->edges()[e].sender)] += dc * z[e];
                } else {
                    dz[e] += dc * (fv - lv);
                    dval[graph_->topo_pos(graph_->edges()[e].sender)] += dc * (1.0 - z[e]);
                }
            }
        }
        return loss;
    }

    // --- Extras used by builders and tests ------------------------------

    NodeId node(const std::string& label) const {
        auto it = labels_.find(label);
        if (it == labels_.end()) throw std::invalid_argument("unknown node label: " + label);
        return it->second;
    }
    EdgeIndex edge(const std::string& sender, const std::string& receiver) const {
        return graph_->edge_index(EdgeId{node(sender), node(receiver)});
    }
    const std::vector<PlantedGate>& planted_gates() const { return planted_; }
    EdgeIndex trunk_edge() const { return trunk_edge_; }
    std::size_t source_count() const { return source_count_; }

    Example example_all(double v) const { return Example{{}, std::vector<double>(source_count_, v)}; }

private:
    AnalyticModel() = default;

    void init_node_fns() {
        fns_.assign(graph_->node_count(), NodeFn{});
        for (std::size_t p = 0; p < graph_->node_count(); ++p) {
            if (graph_->topo()[p].kind == NodeKind::Input) fns_[p] = {Op::Source, Act::None, 0.0};
        }
    }
    void finish_init() {
        source_count_ = 0;
        for (const auto& fn : fns_) source_count_ += (fn.op == Op::Source);
    }

    std::vector<char> live_mask(const PatchPlan& plan, const Circuit& retained) const {
        std::vector<char> live(graph_->edge_count(), plan.live_is_retained ? 0 : 1);
        for (EdgeIndex e : retained.members()) live[e] = plan.live_is_retained ? 1 : 0;
        return live;
    }

    static double activate(Act act, double x) {
        switch (act) {
            case Act::None: return x;
            case Act::ReluShiftNeg1: return std::max(x - 1.0, 0.0);
            case Act::SaturatingOr: return 1.0 - std::max(1.0 - x, 0.0);
            case Act::Relu: return std::max(x, 0.0);
        }
        return x;
    }

    // One-sided derivative; Decrease = left limit, Increase = right limit.
    static double act_deriv(Act act, double x, GradSide side) {
        auto relu_at = [&](double u) {
            if (u > 0) return 1.0;
            if (u < 0) return 0.0;
            return side == GradSide::Increase ? 1.0 : 0.0;
        };
        switch (act) {
            case Act::None: return 1.0;
            case Act::ReluShiftNeg1: return relu_at(x - 1.0);
            case Act::Relu: return relu_at(x);
            case Act::SaturatingOr: {
                // f(x) = 1 - relu(1-x): slope 1 below x=1, 0 above.
                if (x < 1) return 1.0;
                if (x > 1) return 0.0;
                return side == GradSide::Increase ? 0.0 : 1.0;
            }
        }
        return 1.0;
    }

    double aggregate(const NodeFn& fn, const std::vector<EdgeIndex>& in, const std::vector<double>& carried) const {
        if (fn.op == Op::Sum) {
            double s = fn.bias;
            for (EdgeIndex e : in) s += carried[e];
            return s;
        }
        if (in.empty()) return 0.0;
        double m = carried[in[0]];
        for (EdgeIndex e : in)
            m = fn.op == Op::Min ? std::min(m, carried[e]) : std::max(m, carried[e]);
        return m;
    }

    // Sensitivity of min/max/sum to one argument, one-sided at ties: lowering
    // any tied argument lowers a min (all achievers count), but raising one
    // only raises it when it is the sole achiever. Max is the mirror image.
    double agg_selector(Op op, const std::vector<EdgeIndex>& in, const std::vector<double>& carried,
                        EdgeIndex e, GradSide side) const {
        if (op == Op::Sum) return 1.0;
        double m = carried[in[0]];
        int achievers = 0;
        for (EdgeIndex o : in) m = op == Op::Min ? std::min(m, carried[o]) : std::max(m, carried[o]);
        for (EdgeIndex o : in) achievers += (carried[o] == m);
        if (carried[e] != m) return 0.0;
        bool spreads = (op == Op::Min) == (side == GradSide::Decrease);
        return spreads ? 1.0 : (achievers == 1 ? 1.0 : 0.0);
    }

    void run_full(const Example& input, std::vector<double>& vals, std::vector<double>& pres) const {
        vals.assign(graph_->node_count(), 0.0);
        pres.assign(graph_->node_count(), 0.0);
        int src_ix = 0;
        for (std::size_t p = 0; p < graph_->node_count(); ++p) {
            const auto& fn = fns_[p];
            if (fn.op == Op::Source) {
                if (src_ix >= static_cast<int>(input.values.size()))
                    throw std::invalid_argument("analytic model: input shape mismatch");
                vals[p] = input.values[src_ix++];
                continue;
            }
            std::vector<double> carried;
            const auto& in = graph_->in_edges(static_cast<int>(p));
            double s = fn.bias;
            double m = in.empty() ? 0.0 : vals[graph_->topo_pos(graph_->edges()[in[0]].sender)];
            for (EdgeIndex e : in) {
                double v = vals[graph_->topo_pos(graph_->edges()[e].sender)];
                s += v;
                m = fn.op == Op::Min ? std::min(m, v) : std::max(m, v);
            }
            pres[p] = fn.op == Op::Sum ? s : m;
            vals[p] = activate(fn.act, pres[p]);
        }
        if (src_ix != static_cast<int>(input.values.size()))
            throw std::invalid_argument("analytic model: input shape mismatch");
    }

    void run_patched(const PatchPlan& plan, const std::vector<char>& live, std::vector<double>& vals,
                     std::vector<double>& carried, std::vector<double>* pres_out) const {
        const auto& frozen = *plan.frozen_edges;
        if (frozen.size() != graph_->edge_count())
            throw std::invalid_argument("patched run: frozen cache does not match graph");
        int src_ix = 0;
        for (std::size_t p = 0; p < graph_->node_count(); ++p) {
            const auto& fn = fns_[p];
            if (fn.op == Op::Source) {
                vals[p] = plan.live_input->values.at(src_ix++);
                continue;
            }
            const auto& in = graph_->in_edges(static_cast<int>(p));
            for (EdgeIndex e : in)
                carried[e] = live[e] ? vals[graph_->topo_pos(graph_->edges()[e].sender)] : frozen[e][0];
            double pre = aggregate(fn, in, carried);
            if (pres_out) (*pres_out)[p] = pre;
            vals[p] = activate(fn.act, pre);
        }
    }

    double seed_output_grad(const LossSpec& loss, double sink) const {
        switch (loss.kind) {
            case LossSpec::Kind::SinkValue: return 1.0;
            case LossSpec::Kind::LogitDiff: {
                // analytic logits are [sink, 0]
                double g = 0.0;
                if (loss.label_pos == 0) g += 1.0;
                if (loss.label_neg == 0) g -= 1.0;
                return g;
            }
            case LossSpec::Kind::CrossEntropy:
                throw std::invalid_argument("cross-entropy loss is not defined for analytic models");
        }
        (void)sink;
        return 1.0;
    }

    std::unique_ptr<ComputationalGraph> graph_;
    std::vector<NodeFn> fns_;
    std::map<std::string, NodeId> labels_;
    std::vector<PlantedGate> planted_;
    EdgeIndex trunk_edge_ = 0;
    std::size_t source_count_ = 0;
    bool edge_frozen_ = false;
};

// --- Stock networks and datasets --------------------------------------------

// The two-gates-plus-adder network: A1 AND A2 -> B1, A3 OR A4 -> B2,
// B1 + B2 -> C, C -> output.
inline std::unique_ptr<AnalyticModel> make_fig2_network() {
    GateNetworkSpec spec;
    spec.gates = {{"B1", GateKind::And, {"A1", "A2"}},
                  {"B2", GateKind::Or, {"A3", "A4"}},
                  {"C", GateKind::Adder, {"B1", "B2"}}};
    spec.sink = "C";
    return AnalyticModel::gate_network(spec);
}

// Canonical gate dataset: clean = all sources active, corrupted = all zero.
inline TaskDataset gate_canonical_dataset(const AnalyticModel& m) {
    TaskPair pair;
    pair.clean = m.example_all(1.0);
    pair.corrupted = m.example_all(0.0);
    pair.clean_label = 1;
    pair.corrupted_label = 0;
    return TaskDataset{{pair}};
}

// All 2^k source assignments, each corrupted to the all-zero assignment.
inline TaskDataset gate_truth_table_dataset(const AnalyticModel& m) {
    std::size_t k = m.source_count();
    if (k > 20) throw std::invalid_argument("truth table too large");
    TaskDataset ds;
    for (std::size_t bits = 0; bits < (std::size_t{1} << k); ++bits) {
        TaskPair pair;
        pair.clean.values.resize(k);
        for (std::size_t i = 0; i < k; ++i) pair.clean.values[i] = (bits >> i) & 1 ? 1.0 : 0.0;
        pair.corrupted = m.example_all(0.0);
        pair.clean_label = 1;
        pair.corrupted_label = 0;
        ds.pairs.push_back(std::move(pair));
    }
    return ds;
}

// Toy dataset: the input is the zero tensor on both sides; corruption is
// frozen-zero edge ablation, not a different input.
inline TaskDataset toy_dataset(const AnalyticModel& m) {
    TaskPair pair;
    pair.clean = m.example_all(0.0);
    pair.corrupted = m.example_all(0.0);
    pair.clean_label = 1;
    pair.corrupted_label = 0;
    return TaskDataset{{pair}};
}

// Random planted network: AND and OR gates over sources, all combined by one
// ADDER sink. Gate sizes are drawn from [2, max_gate_size].
struct PlantedNetworkConfig {
    int and_gates = 1;
    int or_gates = 1;
    int max_gate_size = 2;
    int extra_adder_sources = 0;  // sources wired straight into the sink
};

inline std::unique_ptr<AnalyticModel> make_planted_network(const PlantedNetworkConfig& cfg, Rng& rng) {
    if (cfg.and_gates < 0 || cfg.or_gates < 0 || cfg.and_gates + cfg.or_gates < 1)
        throw std::invalid_argument("planted network: need at least one gate");
    GateNetworkSpec spec;
    int src = 0;
    auto fresh_sources = [&](int n) {
        std::vector<std::string> out;
        for (int i = 0; i < n; ++i) out.push_back("S" + std::to_string(++src));
        return out;
    };
    std::vector<std::string> sink_parents;
    int b = 0;
    for (int i = 0; i < cfg.and_gates; ++i) {
        int size = 2 + static_cast<int>(rng.uniform_index(std::max(1, cfg.max_gate_size - 1)));
        std::string name = "B" + std::to_string(++b);
        spec.gates.push_back({name, GateKind::And, fresh_sources(size)});
        sink_parents.push_back(name);
    }
    for (int i = 0; i < cfg.or_gates; ++i) {
        int size = 2 + static_cast<int>(rng.uniform_index(std::max(1, cfg.max_gate_size - 1)));
        std::string name = "B" + std::to_string(++b);
        spec.gates.push_back({name, GateKind::Or, fresh_sources(size)});
        sink_parents.push_back(name);
    }
    for (const auto& s : fresh_sources(cfg.extra_adder_sources)) sink_parents.push_back(s);
    spec.gates.push_back({"C", GateKind::Adder, sink_parents});
    spec.sink = "C";
    return AnalyticModel::gate_network(spec);
}

}  // namespace gatecircuits
