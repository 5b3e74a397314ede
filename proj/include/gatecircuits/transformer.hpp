// Decoder-only toy transformer with an exactly additive residual stream.
//
// Components (embedding, each attention head, each MLP) are graph nodes; every
// earlier component sends an edge to every later component and to the output.
// Layer normalization is omitted so a receiver's input is exactly the sum of
// its in-edge contributions, which is what edge-level patching assumes. The
// MLP uses a tanh-GELU so the network is smooth everywhere and finite
// differences are a valid oracle for the analytic gradients.

#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "gatecircuits/model.hpp"
#include "gatecircuits/rng.hpp"

namespace gatecircuits {

struct TransformerSpec {
    int layers = 2;
    int heads = 4;
    int model_dim = 32;
    int mlp_dim = 64;
    int vocab = 20;
    int max_seq = 16;
    std::uint64_t seed = 0;

    friend bool operator==(const TransformerSpec& a, const TransformerSpec& b) {
        return a.layers == b.layers && a.heads == b.heads && a.model_dim == b.model_dim &&
               a.mlp_dim == b.mlp_dim && a.vocab == b.vocab && a.max_seq == b.max_seq && a.seed == b.seed;
    }
};

struct TrainConfig {
    int steps = 2000;
    int batch = 32;
    double lr = 3e-3;
    double accuracy_floor = 0.95;
    int eval_every = 100;
    std::uint64_t seed = 1;
    // Probability of silencing each attention head / MLP per training
    // example. Nonzero values force the model to grow redundant (backup)
    // paths, i.e. OR-gate structure over edges.
    double head_dropout = 0.0;
    double mlp_dropout = 0.0;
};

struct TrainResult {
    int steps_run = 0;
    double accuracy = 0.0;
    bool reached_floor = false;
    double final_loss = 0.0;
};

inline double gelu(double x) {
    double u = 0.7978845608028654 * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}
inline double gelu_deriv(double x) {
    double u = 0.7978845608028654 * (x + 0.044715 * x * x * x);
    double t = std::tanh(u);
    double du = 0.7978845608028654 * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

class TransformerModel final : public Model {
public:
    explicit TransformerModel(const TransformerSpec& spec) : spec_(spec) {
        if (spec.layers < 1 || spec.heads < 1 || spec.model_dim < 1 || spec.mlp_dim < 1 || spec.max_seq < 2)
            throw std::invalid_argument("transformer: dims must be >= 1");
        if (spec.vocab < 2) throw std::invalid_argument("transformer: degenerate task (vocab < 2)");
        if (spec.model_dim % spec.heads != 0)
            throw std::invalid_argument("transformer: model_dim must be divisible by heads");
        head_dim_ = spec.model_dim / spec.heads;
        build_graph();
        init_params();
    }

    const TransformerSpec& spec() const { return spec_; }
    const ComputationalGraph& graph() const override { return *graph_; }
    bool is_token_model() const override { return true; }
    bool edge_frozen_corruption() const override { return false; }  // interchange by default

    // ------------------------------------------------------------------
    // Full forward with per-edge contribution capture.
    // ------------------------------------------------------------------
    // edge_values hold sender contributions; node_values hold each receiver's
    // summed input stream (the embedding output for the input node), so the
    // residual additivity invariant is checkable from the cache alone.
    ActivationCache forward(const Example& input) const override {
        const int T = check_input(input);
        std::vector<std::vector<double>> outs;
        std::vector<double> logits = run_components(input, T, &outs, nullptr, nullptr);

        ActivationCache cache;
        cache.edge_values.resize(graph_->edge_count());
        for (std::size_t e = 0; e < graph_->edge_count(); ++e)
            cache.edge_values[e] = outs[graph_->topo_pos(graph_->edges()[e].sender)];
        cache.node_values.assign(graph_->node_count(), {});
        cache.node_values[0] = outs[0];
        for (std::size_t p = 1; p < graph_->node_count(); ++p) {
            std::vector<double> in(static_cast<std::size_t>(T) * spec_.model_dim, 0.0);
            for (EdgeIndex e : graph_->in_edges(static_cast<int>(p)))
                for (std::size_t i = 0; i < in.size(); ++i) in[i] += cache.edge_values[e][i];
            cache.node_values[p] = std::move(in);
        }
        cache.logits = std::move(logits);
        return cache;
    }

    std::vector<double> patched_logits(const PatchPlan& plan, const Circuit& retained) const override {
        require_graph(*graph_, retained);
        PatchState st = patched_forward(plan, retained, nullptr);
        return st.logits;
    }

    EdgeGradients edge_gradients_at(const PatchPlan& plan, const Circuit& retained,
                                    const LossSpec& loss, GradSide /*side*/,
                                    bool through_frozen = false) const override {
        require_graph(*graph_, retained);
        Workspace ws;
        PatchState st = patched_forward(plan, retained, &ws);
        std::vector<double> dlogits = loss_grad_logits(loss, st.logits);

        std::vector<std::vector<double>> g_in;  // d loss / d (receiver input), per topo pos
        backward_receivers(st, ws, dlogits, g_in, through_frozen);

        EdgeGradients out;
        out.grads.resize(graph_->edge_count());
        for (std::size_t e = 0; e < graph_->edge_count(); ++e)
            out.grads[e] = g_in[graph_->topo_pos(graph_->edges()[e].receiver)];
        return out;
    }

    double soft_mask_loss_grad(const PatchPlan& plan, std::span<const double> z,
                               const std::vector<double>& ref_logits, Metric metric,
                               const MetricLabels& labels, std::vector<double>& dz) const override {
        if (z.size() != graph_->edge_count()) throw std::invalid_argument("soft mask: z size mismatch");
        Workspace ws;
        PatchState st = soft_forward(plan, z, &ws);
        double loss = metric_distance(metric, ref_logits, st.logits, labels);
        std::vector<double> dlogits = metric_grad_out(metric, ref_logits, st.logits, labels);

        std::vector<std::vector<double>> g_in;
        backward_receivers_soft(st, ws, plan, z, dlogits, g_in, dz);
        return loss;
    }

    // ------------------------------------------------------------------
    // Training (next-token prediction at the final position).
    // ------------------------------------------------------------------
    TrainResult train(const TaskDataset& data, const TrainConfig& cfg) {
        if (data.pairs.empty()) throw std::invalid_argument("train: empty dataset");
        Rng rng(derive_seed(cfg.seed, 0, "train"));
        std::vector<double> m(params_.size(), 0.0), v(params_.size(), 0.0);
        std::vector<double> grad(params_.size(), 0.0);
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

        TrainResult res;
        DropoutPlan drop;
        drop.head_p = cfg.head_dropout;
        drop.mlp_p = cfg.mlp_dropout;
        drop.heads.assign(static_cast<std::size_t>(spec_.layers) * spec_.heads, 0);
        drop.mlps.assign(spec_.layers, 0);
        const bool dropping = cfg.head_dropout > 0 || cfg.mlp_dropout > 0;
        for (int step = 1; step <= cfg.steps; ++step) {
            std::fill(grad.begin(), grad.end(), 0.0);
            double loss = 0.0;
            for (int b = 0; b < cfg.batch; ++b) {
                const TaskPair& pair = data.pairs[rng.uniform_index(data.pairs.size())];
                if (dropping) {
                    for (auto& d : drop.heads) d = cfg.head_dropout > 0 && rng.uniform() < cfg.head_dropout;
                    for (auto& d : drop.mlps) d = cfg.mlp_dropout > 0 && rng.uniform() < cfg.mlp_dropout;
                }
                loss += train_example(pair.clean, pair.clean_label, grad, dropping ? &drop : nullptr);
            }
            loss /= cfg.batch;
            double scale = 1.0 / cfg.batch;
            double bc1 = 1.0 - std::pow(b1, step), bc2 = 1.0 - std::pow(b2, step);
            for (std::size_t i = 0; i < params_.size(); ++i) {
                double g = grad[i] * scale;
                m[i] = b1 * m[i] + (1 - b1) * g;
                v[i] = b2 * v[i] + (1 - b2) * g * g;
                params_[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
            }
            res.steps_run = step;
            res.final_loss = loss;
            if (step % cfg.eval_every == 0 || step == cfg.steps) {
                res.accuracy = accuracy(data);
                if (res.accuracy >= cfg.accuracy_floor) {
                    res.reached_floor = true;
                    return res;
                }
            }
        }
        res.accuracy = accuracy(data);
        res.reached_floor = res.accuracy >= cfg.accuracy_floor;
        return res;
    }

    double accuracy(const TaskDataset& data) const {
        if (data.pairs.empty()) return 0.0;
        int hit = 0;
        for (const auto& pair : data.pairs) {
            auto logits = run_components(pair.clean, check_input(pair.clean), nullptr, nullptr, nullptr);
            hit += (argmax(logits) == pair.clean_label);
        }
        return static_cast<double>(hit) / data.pairs.size();
    }

    // ------------------------------------------------------------------
    // Binary container: magic, spec header, raw parameters.
    // ------------------------------------------------------------------
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for write: " + path);
        const char magic[8] = {'G', 'C', 'T', 'M', '0', '0', '0', '1'};
        out.write(magic, 8);
        std::int64_t fields[7] = {spec_.layers, spec_.heads,  spec_.model_dim,
                                  spec_.mlp_dim, spec_.vocab, spec_.max_seq,
                                  static_cast<std::int64_t>(spec_.seed)};
        out.write(reinterpret_cast<const char*>(fields), sizeof(fields));
        std::int64_t n = static_cast<std::int64_t>(params_.size());
        out.write(reinterpret_cast<const char*>(&n), sizeof(n));
        out.write(reinterpret_cast<const char*>(params_.data()), n * sizeof(double));
        if (!out) throw std::runtime_error("write failed: " + path);
    }

    static std::unique_ptr<TransformerModel> load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open: " + path);
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, "GCTM0001", 8) != 0)
            throw std::runtime_error("bad model container: " + path);
        std::int64_t fields[7];
        in.read(reinterpret_cast<char*>(fields), sizeof(fields));
        TransformerSpec spec;
        spec.layers = static_cast<int>(fields[0]);
        spec.heads = static_cast<int>(fields[1]);
        spec.model_dim = static_cast<int>(fields[2]);
        spec.mlp_dim = static_cast<int>(fields[3]);
        spec.vocab = static_cast<int>(fields[4]);
        spec.max_seq = static_cast<int>(fields[5]);
        spec.seed = static_cast<std::uint64_t>(fields[6]);
        auto model = std::make_unique<TransformerModel>(spec);
        std::int64_t n = 0;
        in.read(reinterpret_cast<char*>(&n), sizeof(n));
        if (n != static_cast<std::int64_t>(model->params_.size()))
            throw std::runtime_error("model container size mismatch");
        in.read(reinterpret_cast<char*>(model->params_.data()), n * sizeof(double));
        if (!in) throw std::runtime_error("truncated model container: " + path);
        return model;
    }

private:
    // Component layout: 0 = embed; per layer: H heads then one MLP; last = output.
    int comp_count() const { return 2 + spec_.layers * (spec_.heads + 1); }

    void build_graph() {
        std::vector<NodeId> nodes;
        nodes.push_back({NodeKind::Input, 0, 0});
        for (int l = 0; l < spec_.layers; ++l) {
            for (int h = 0; h < spec_.heads; ++h) nodes.push_back({NodeKind::AttentionHead, l, h});
            nodes.push_back({NodeKind::Mlp, l, 0});
        }
        nodes.push_back({NodeKind::Output, spec_.layers, 0});

        // Group order: embed < layer-0 heads < layer-0 mlp < ... < output.
        auto group = [&](const NodeId& n) {
            switch (n.kind) {
                case NodeKind::Input: return 0;
                case NodeKind::AttentionHead: return 1 + 2 * n.layer;
                case NodeKind::Mlp: return 2 + 2 * n.layer;
                case NodeKind::Output: return 1 + 2 * spec_.layers;
                default: throw std::logic_error("unexpected node kind");
            }
        };
        std::vector<EdgeId> edges;
        for (const auto& s : nodes)
            for (const auto& r : nodes)
                if (group(s) < group(r)) edges.push_back({s, r});
        graph_ = std::make_unique<ComputationalGraph>(std::move(nodes), std::move(edges));
        if (static_cast<int>(graph_->node_count()) != comp_count())
            throw std::logic_error("transformer graph construction mismatch");
    }

    struct Layout {
        std::size_t tok_emb, pos_emb;
        std::vector<std::size_t> wq, wk, wv, wo;       // per (layer*heads + head)
        std::vector<std::size_t> w1, bias1, w2, bias2;  // per layer
        std::size_t wu, bu;
        std::size_t total;
    };

    void init_params() {
        const int d = spec_.model_dim, dh = head_dim_, mlp = spec_.mlp_dim, V = spec_.vocab;
        layout_ = Layout{};
        std::size_t off = 0;
        auto take = [&](std::size_t n) {
            std::size_t at = off;
            off += n;
            return at;
        };
        layout_.tok_emb = take(static_cast<std::size_t>(V) * d);
        layout_.pos_emb = take(static_cast<std::size_t>(spec_.max_seq) * d);
        for (int l = 0; l < spec_.layers; ++l) {
            for (int h = 0; h < spec_.heads; ++h) {
                layout_.wq.push_back(take(static_cast<std::size_t>(d) * dh));
                layout_.wk.push_back(take(static_cast<std::size_t>(d) * dh));
                layout_.wv.push_back(take(static_cast<std::size_t>(d) * dh));
                layout_.wo.push_back(take(static_cast<std::size_t>(dh) * d));
            }
            layout_.w1.push_back(take(static_cast<std::size_t>(d) * mlp));
            layout_.bias1.push_back(take(mlp));
            layout_.w2.push_back(take(static_cast<std::size_t>(mlp) * d));
            layout_.bias2.push_back(take(d));
        }
        layout_.wu = take(static_cast<std::size_t>(d) * V);
        layout_.bu = take(V);
        layout_.total = off;

        params_.assign(layout_.total, 0.0);
        Rng rng(derive_seed(spec_.seed, 0, "init"));
        auto fill = [&](std::size_t at, std::size_t n, double std) {
            for (std::size_t i = 0; i < n; ++i) params_[at + i] = rng.normal(0.0, std);
        };
        double ws = 1.0 / std::sqrt(static_cast<double>(d));
        fill(layout_.tok_emb, static_cast<std::size_t>(V) * d, 0.1);
        fill(layout_.pos_emb, static_cast<std::size_t>(spec_.max_seq) * d, 0.1);
        for (std::size_t i = 0; i < layout_.wq.size(); ++i) {
            fill(layout_.wq[i], static_cast<std::size_t>(d) * dh, ws);
            fill(layout_.wk[i], static_cast<std::size_t>(d) * dh, ws);
            fill(layout_.wv[i], static_cast<std::size_t>(d) * dh, ws);
            fill(layout_.wo[i], static_cast<std::size_t>(dh) * d, 1.0 / std::sqrt(static_cast<double>(dh)));
        }
        for (int l = 0; l < spec_.layers; ++l) {
            fill(layout_.w1[l], static_cast<std::size_t>(d) * mlp, ws);
            fill(layout_.w2[l], static_cast<std::size_t>(mlp) * d, 1.0 / std::sqrt(static_cast<double>(mlp)));
        }
        fill(layout_.wu, static_cast<std::size_t>(d) * V, ws);
    }

    int check_input(const Example& input) const {
        if (input.tokens.empty()) throw std::invalid_argument("transformer: empty token input");
        if (static_cast<int>(input.tokens.size()) > spec_.max_seq)
            throw std::invalid_argument("transformer: sequence longer than max_seq");
        for (int t : input.tokens)
            if (t < 0 || t >= spec_.vocab) throw std::invalid_argument("transformer: token out of vocab");
        return static_cast<int>(input.tokens.size());
    }

    // --- Per-component primitives (T x d streams, row-major flat) --------

    struct HeadWs {
        std::vector<double> in, q, k, v, att, ctx;
        int T = 0;
    };
    struct MlpWs {
        std::vector<double> in, pre, act;
        int T = 0;
    };
    struct Workspace {
        std::vector<HeadWs> heads;       // per (layer*heads + h)
        std::vector<MlpWs> mlps;         // per layer
        std::vector<double> out_in;      // output receiver input (T x d)
        int T = 0;
    };
    struct PatchState {
        std::vector<std::vector<double>> comp_out;  // per topo pos, T x d (embed..mlp), empty for output
        std::vector<std::vector<double>> recv_in;   // per topo pos, receiver input streams
        std::vector<double> logits;
        std::vector<char> live;  // per edge
        int T = 0;
    };

    void head_fwd(int hid, const std::vector<double>& in, int T, std::vector<double>& out, HeadWs* ws) const {
        const int d = spec_.model_dim, dh = head_dim_;
        const double* Wq = &params_[layout_.wq[hid]];
        const double* Wk = &params_[layout_.wk[hid]];
        const double* Wv = &params_[layout_.wv[hid]];
        const double* Wo = &params_[layout_.wo[hid]];
        std::vector<double> q(T * dh, 0.0), k(T * dh, 0.0), v(T * dh, 0.0);
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < d; ++i) {
                double x = in[t * d + i];
                if (x == 0.0) continue;
                for (int j = 0; j < dh; ++j) {
                    q[t * dh + j] += x * Wq[i * dh + j];
                    k[t * dh + j] += x * Wk[i * dh + j];
                    v[t * dh + j] += x * Wv[i * dh + j];
                }
            }
        double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        std::vector<double> att(static_cast<std::size_t>(T) * T, 0.0);
        for (int t = 0; t < T; ++t) {
            double mx = -1e300;
            for (int u = 0; u <= t; ++u) {
                double s = 0.0;
                for (int j = 0; j < dh; ++j) s += q[t * dh + j] * k[u * dh + j];
                s *= scale;
                att[t * T + u] = s;
                mx = std::max(mx, s);
            }
            double z = 0.0;
            for (int u = 0; u <= t; ++u) {
                att[t * T + u] = std::exp(att[t * T + u] - mx);
                z += att[t * T + u];
            }
            for (int u = 0; u <= t; ++u) att[t * T + u] /= z;
        }
        std::vector<double> ctx(T * dh, 0.0);
        for (int t = 0; t < T; ++t)
            for (int u = 0; u <= t; ++u) {
                double a = att[t * T + u];
                for (int j = 0; j < dh; ++j) ctx[t * dh + j] += a * v[u * dh + j];
            }
        out.assign(static_cast<std::size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < dh; ++j) {
                double c = ctx[t * dh + j];
                for (int i = 0; i < d; ++i) out[t * d + i] += c * Wo[j * d + i];
            }
        if (ws) {
            ws->in = in;
            ws->q = std::move(q);
            ws->k = std::move(k);
            ws->v = std::move(v);
            ws->att = std::move(att);
            ws->ctx = std::move(ctx);
            ws->T = T;
        }
    }

    // Returns d loss / d in; optionally accumulates parameter gradients.
    void head_bwd(int hid, const HeadWs& ws, const std::vector<double>& g_out,
                  std::vector<double>& g_in, std::vector<double>* pgrad) const {
        const int d = spec_.model_dim, dh = head_dim_, T = ws.T;
        const double* Wq = &params_[layout_.wq[hid]];
        const double* Wk = &params_[layout_.wk[hid]];
        const double* Wv = &params_[layout_.wv[hid]];
        const double* Wo = &params_[layout_.wo[hid]];
        std::vector<double> g_ctx(T * dh, 0.0);
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < dh; ++j) {
                double s = 0.0;
                for (int i = 0; i < d; ++i) s += g_out[t * d + i] * Wo[j * d + i];
                g_ctx[t * dh + j] = s;
            }
        if (pgrad) {
            double* gWo = &(*pgrad)[layout_.wo[hid]];
            for (int t = 0; t < T; ++t)
                for (int j = 0; j < dh; ++j) {
                    double c = ws.ctx[t * dh + j];
                    if (c == 0.0) continue;
                    for (int i = 0; i < d; ++i) gWo[j * d + i] += c * g_out[t * d + i];
                }
        }
        std::vector<double> g_att(static_cast<std::size_t>(T) * T, 0.0), g_v(T * dh, 0.0);
        for (int t = 0; t < T; ++t)
            for (int u = 0; u <= t; ++u) {
                double s = 0.0;
                for (int j = 0; j < dh; ++j) s += g_ctx[t * dh + j] * ws.v[u * dh + j];
                g_att[t * T + u] = s;
                double a = ws.att[t * T + u];
                for (int j = 0; j < dh; ++j) g_v[u * dh + j] += a * g_ctx[t * dh + j];
            }
        double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        std::vector<double> g_q(T * dh, 0.0), g_k(T * dh, 0.0);
        for (int t = 0; t < T; ++t) {
            double dot = 0.0;
            for (int u = 0; u <= t; ++u) dot += ws.att[t * T + u] * g_att[t * T + u];
            for (int u = 0; u <= t; ++u) {
                double gs = ws.att[t * T + u] * (g_att[t * T + u] - dot) * scale;
                if (gs == 0.0) continue;
                for (int j = 0; j < dh; ++j) {
                    g_q[t * dh + j] += gs * ws.k[u * dh + j];
                    g_k[u * dh + j] += gs * ws.q[t * dh + j];
                }
            }
        }
        g_in.assign(static_cast<std::size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < d; ++i) {
                double s = 0.0;
                for (int j = 0; j < dh; ++j)
                    s += g_q[t * dh + j] * Wq[i * dh + j] + g_k[t * dh + j] * Wk[i * dh + j] +
                         g_v[t * dh + j] * Wv[i * dh + j];
                g_in[t * d + i] = s;
            }
        if (pgrad) {
            double* gWq = &(*pgrad)[layout_.wq[hid]];
            double* gWk = &(*pgrad)[layout_.wk[hid]];
            double* gWv = &(*pgrad)[layout_.wv[hid]];
            for (int t = 0; t < T; ++t)
                for (int i = 0; i < d; ++i) {
                    double x = ws.in[t * d + i];
                    if (x == 0.0) continue;
                    for (int j = 0; j < dh; ++j) {
                        gWq[i * dh + j] += x * g_q[t * dh + j];
                        gWk[i * dh + j] += x * g_k[t * dh + j];
                        gWv[i * dh + j] += x * g_v[t * dh + j];
                    }
                }
        }
    }

    void mlp_fwd(int l, const std::vector<double>& in, int T, std::vector<double>& out, MlpWs* ws) const {
        const int d = spec_.model_dim, m = spec_.mlp_dim;
        const double* W1 = &params_[layout_.w1[l]];
        const double* B1 = &params_[layout_.bias1[l]];
        const double* W2 = &params_[layout_.w2[l]];
        const double* B2 = &params_[layout_.bias2[l]];
        std::vector<double> pre(static_cast<std::size_t>(T) * m), act(static_cast<std::size_t>(T) * m);
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < m; ++j) {
                double s = B1[j];
                for (int i = 0; i < d; ++i) s += in[t * d + i] * W1[i * m + j];
                pre[t * m + j] = s;
                act[t * m + j] = gelu(s);
            }
        out.assign(static_cast<std::size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < d; ++i) {
                double s = B2[i];
                for (int j = 0; j < m; ++j) s += act[t * m + j] * W2[j * d + i];
                out[t * d + i] = s;
            }
        if (ws) {
            ws->in = in;
            ws->pre = std::move(pre);
            ws->act = std::move(act);
            ws->T = T;
        }
    }

    void mlp_bwd(int l, const MlpWs& ws, const std::vector<double>& g_out,
                 std::vector<double>& g_in, std::vector<double>* pgrad) const {
        const int d = spec_.model_dim, m = spec_.mlp_dim, T = ws.T;
        const double* W1 = &params_[layout_.w1[l]];
        const double* W2 = &params_[layout_.w2[l]];
        std::vector<double> g_act(static_cast<std::size_t>(T) * m, 0.0);
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < m; ++j) {
                double s = 0.0;
                for (int i = 0; i < d; ++i) s += g_out[t * d + i] * W2[j * d + i];
                g_act[t * m + j] = s * gelu_deriv(ws.pre[t * m + j]);
            }
        if (pgrad) {
            double* gW2 = &(*pgrad)[layout_.w2[l]];
            double* gB2 = &(*pgrad)[layout_.bias2[l]];
            double* gW1 = &(*pgrad)[layout_.w1[l]];
            double* gB1 = &(*pgrad)[layout_.bias1[l]];
            for (int t = 0; t < T; ++t) {
                for (int i = 0; i < d; ++i) gB2[i] += g_out[t * d + i];
                for (int j = 0; j < m; ++j) {
                    double a = ws.act[t * m + j];
                    if (a != 0.0)
                        for (int i = 0; i < d; ++i) gW2[j * d + i] += a * g_out[t * d + i];
                    gB1[j] += g_act[t * m + j];
                }
                for (int i = 0; i < d; ++i) {
                    double x = ws.in[t * d + i];
                    if (x == 0.0) continue;
                    for (int j = 0; j < m; ++j) gW1[i * m + j] += x * g_act[t * m + j];
                }
            }
        }
        g_in.assign(static_cast<std::size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < d; ++i) {
                double s = 0.0;
                for (int j = 0; j < m; ++j) s += g_act[t * m + j] * W1[i * m + j];
                g_in[t * d + i] = s;
            }
    }

    std::vector<double> embed(const Example& input, int T) const {
        const int d = spec_.model_dim;
        std::vector<double> out(static_cast<std::size_t>(T) * d);
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < d; ++i)
                out[t * d + i] = params_[layout_.tok_emb + static_cast<std::size_t>(input.tokens[t]) * d + i] +
                                 params_[layout_.pos_emb + static_cast<std::size_t>(t) * d + i];
        return out;
    }

    std::vector<double> unembed(const std::vector<double>& in, int T) const {
        const int d = spec_.model_dim, V = spec_.vocab;
        std::vector<double> logits(V);
        for (int v = 0; v < V; ++v) {
            double s = params_[layout_.bu + v];
            for (int i = 0; i < d; ++i) s += in[(T - 1) * d + i] * params_[layout_.wu + static_cast<std::size_t>(i) * V + v];
            logits[v] = s;
        }
        return logits;
    }

    struct DropoutPlan {
        std::vector<char> heads;  // per (layer * heads + head)
        std::vector<char> mlps;   // per layer
        double head_p = 0.0;
        double mlp_p = 0.0;

        double head_scale(int hid) const { return heads[hid] ? 0.0 : 1.0 / (1.0 - head_p); }
        double mlp_scale(int l) const { return mlps[l] ? 0.0 : 1.0 / (1.0 - mlp_p); }
    };

    // Full run along the residual stream (training path). Optionally captures
    // per-component outputs for the activation cache. A dropout plan silences
    // components for one training example; kept components are rescaled by
    // 1/(1 - p).
    std::vector<double> run_components(const Example& input, int T,
                                       std::vector<std::vector<double>>* outs,
                                       Workspace* ws, std::vector<double>* final_stream,
                                       const DropoutPlan* drop = nullptr) const {
        const int d = spec_.model_dim;
        if (ws) {
            ws->heads.assign(static_cast<std::size_t>(spec_.layers) * spec_.heads, {});
            ws->mlps.assign(spec_.layers, {});
            ws->T = T;
        }
        if (outs) outs->assign(graph_->node_count(), {});
        std::vector<double> stream = embed(input, T);
        if (outs) (*outs)[0] = stream;  // topo pos 0 is the embedding
        int pos = 1;
        for (int l = 0; l < spec_.layers; ++l) {
            std::vector<double> snapshot = stream;
            for (int h = 0; h < spec_.heads; ++h, ++pos) {
                int hid = l * spec_.heads + h;
                double scale = drop ? drop->head_scale(hid) : 1.0;
                std::vector<double> out;
                if (scale != 0.0) {
                    head_fwd(hid, snapshot, T, out, ws ? &ws->heads[hid] : nullptr);
                    for (std::size_t i = 0; i < out.size(); ++i) stream[i] += scale * out[i];
                } else {
                    out.assign(snapshot.size(), 0.0);
                }
                if (outs) (*outs)[pos] = std::move(out);
            }
            double mscale = drop ? drop->mlp_scale(l) : 1.0;
            std::vector<double> out;
            if (mscale != 0.0) {
                mlp_fwd(l, stream, T, out, ws ? &ws->mlps[l] : nullptr);
                for (std::size_t i = 0; i < out.size(); ++i) stream[i] += mscale * out[i];
            } else {
                out.assign(stream.size(), 0.0);
            }
            if (outs) (*outs)[pos] = std::move(out);
            ++pos;
        }
        if (final_stream) *final_stream = stream;
        if (ws) ws->out_in = stream;
        (void)d;
        return unembed(stream, T);
    }

    double train_example(const Example& input, int label, std::vector<double>& grad,
                         const DropoutPlan* drop = nullptr) const {
        const int T = check_input(input);
        const int d = spec_.model_dim, V = spec_.vocab;
        Workspace ws;
        std::vector<double> stream;
        std::vector<double> logits = run_components(input, T, nullptr, &ws, &stream, drop);

        auto p = softmax(logits);
        double loss = -std::log(std::max(p[label], 1e-300));
        std::vector<double> dlogits = p;
        dlogits[label] -= 1.0;

        // unembed backward
        std::vector<double> g_stream(static_cast<std::size_t>(T) * d, 0.0);
        double* gWu = &grad[layout_.wu];
        double* gBu = &grad[layout_.bu];
        for (int v = 0; v < V; ++v) {
            gBu[v] += dlogits[v];
            for (int i = 0; i < d; ++i) {
                g_stream[(T - 1) * d + i] += dlogits[v] * params_[layout_.wu + static_cast<std::size_t>(i) * V + v];
                gWu[static_cast<std::size_t>(i) * V + v] += stream[(T - 1) * d + i] * dlogits[v];
            }
        }
        // residual backward through layers
        std::vector<double> g_scaled;
        auto scaled_grad = [&](double scale) -> const std::vector<double>& {
            if (scale == 1.0) return g_stream;
            g_scaled.resize(g_stream.size());
            for (std::size_t i = 0; i < g_stream.size(); ++i) g_scaled[i] = scale * g_stream[i];
            return g_scaled;
        };
        for (int l = spec_.layers - 1; l >= 0; --l) {
            double mscale = drop ? drop->mlp_scale(l) : 1.0;
            if (mscale != 0.0) {
                std::vector<double> g_in;
                mlp_bwd(l, ws.mlps[l], scaled_grad(mscale), g_in, &grad);
                for (std::size_t i = 0; i < g_stream.size(); ++i) g_stream[i] += g_in[i];
            }
            std::vector<double> g_snapshot(g_stream.size(), 0.0);
            for (int h = 0; h < spec_.heads; ++h) {
                int hid = l * spec_.heads + h;
                double scale = drop ? drop->head_scale(hid) : 1.0;
                if (scale == 0.0) continue;  // silenced: no signal through this head
                std::vector<double> gh;
                head_bwd(hid, ws.heads[hid], scaled_grad(scale), gh, &grad);
                for (std::size_t i = 0; i < gh.size(); ++i) g_snapshot[i] += gh[i];
            }
            for (std::size_t i = 0; i < g_stream.size(); ++i) g_stream[i] += g_snapshot[i];
        }
        // embedding backward
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < d; ++i) {
                grad[layout_.tok_emb + static_cast<std::size_t>(input.tokens[t]) * d + i] += g_stream[t * d + i];
                grad[layout_.pos_emb + static_cast<std::size_t>(t) * d + i] += g_stream[t * d + i];
            }
        return loss;
    }

    // --- Patched runs: every receiver mixes its own input stream ---------

    std::vector<char> live_mask(const PatchPlan& plan, const Circuit& retained) const {
        std::vector<char> live(graph_->edge_count(), plan.live_is_retained ? 0 : 1);
        for (EdgeIndex e : retained.members()) live[e] = plan.live_is_retained ? 1 : 0;
        return live;
    }

    PatchState patched_forward(const PatchPlan& plan, const Circuit& retained, Workspace* ws) const {
        PatchState st;
        st.live = live_mask(plan, retained);
        run_mixed(plan, &st, nullptr, ws);
        return st;
    }

    PatchState soft_forward(const PatchPlan& plan, std::span<const double> z, Workspace* ws) const {
        PatchState st;
        run_mixed(plan, &st, &z, ws);
        return st;
    }

    void run_mixed(const PatchPlan& plan, PatchState* st, const std::span<const double>* z, Workspace* ws) const {
        const Example& input = *plan.live_input;
        const int T = check_input(input);
        const int d = spec_.model_dim;
        const auto& frozen = *plan.frozen_edges;
        if (frozen.size() != graph_->edge_count())
            throw std::invalid_argument("patched run: frozen cache does not match graph");
        st->T = T;
        st->comp_out.assign(graph_->node_count(), {});
        st->recv_in.assign(graph_->node_count(), {});
        if (ws) {
            ws->heads.assign(static_cast<std::size_t>(spec_.layers) * spec_.heads, {});
            ws->mlps.assign(spec_.layers, {});
            ws->T = T;
        }
        const std::size_t n = static_cast<std::size_t>(T) * d;

        for (std::size_t p = 0; p < graph_->node_count(); ++p) {
            const NodeId& node = graph_->topo()[p];
            if (node.kind == NodeKind::Input) {
                st->comp_out[p] = embed(input, T);
                continue;
            }
            // mix this receiver's input
            std::vector<double> in(n, 0.0);
            for (EdgeIndex e : graph_->in_edges(static_cast<int>(p))) {
                const auto& f = frozen[e];
                if (f.size() != n) throw std::invalid_argument("patched run: frozen edge length mismatch");
                const auto& lv = st->comp_out[graph_->topo_pos(graph_->edges()[e].sender)];
                if (z) {
                    double w = (*z)[e];
                    double wl = plan.live_is_retained ? w : 1.0 - w;
                    for (std::size_t i = 0; i < n; ++i) in[i] += wl * lv[i] + (1.0 - wl) * f[i];
                } else {
                    if (st->live[e])
                        for (std::size_t i = 0; i < n; ++i) in[i] += lv[i];
                    else
                        for (std::size_t i = 0; i < n; ++i) in[i] += f[i];
                }
            }
            if (node.kind == NodeKind::Output) {
                st->logits = unembed(in, T);
                st->recv_in[p] = std::move(in);
            } else if (node.kind == NodeKind::AttentionHead) {
                int hid = node.layer * spec_.heads + node.index;
                std::vector<double> out;
                head_fwd(hid, in, T, out, ws ? &ws->heads[hid] : nullptr);
                st->comp_out[p] = std::move(out);
                st->recv_in[p] = std::move(in);
            } else {  // Mlp
                std::vector<double> out;
                mlp_fwd(node.layer, in, T, out, ws ? &ws->mlps[node.layer] : nullptr);
                st->comp_out[p] = std::move(out);
                st->recv_in[p] = std::move(in);
            }
        }
    }

    std::vector<double> loss_grad_logits(const LossSpec& loss, const std::vector<double>& logits) const {
        std::vector<double> g(logits.size(), 0.0);
        switch (loss.kind) {
            case LossSpec::Kind::SinkValue:
                throw std::invalid_argument("sink-value loss is only defined for analytic models");
            case LossSpec::Kind::LogitDiff:
                if (loss.label_pos < 0 || loss.label_neg < 0)
                    throw std::invalid_argument("logit-diff loss needs labels");
                g[loss.label_pos] += 1.0;
                g[loss.label_neg] -= 1.0;
                break;
            case LossSpec::Kind::CrossEntropy: {
                auto p = softmax(logits);
                g = p;
                g[loss.label_pos] -= 1.0;
                break;
            }
        }
        return g;
    }

    // Hard-patched backward: fills g_in per receiver (d loss / d receiver input).
    void backward_receivers(const PatchState& st, Workspace& ws, const std::vector<double>& dlogits,
                            std::vector<std::vector<double>>& g_in, bool through_frozen = false) const {
        const int T = st.T, d = spec_.model_dim, V = spec_.vocab;
        const std::size_t n = static_cast<std::size_t>(T) * d;
        std::vector<std::vector<double>> g_out(graph_->node_count());
        g_in.assign(graph_->node_count(), {});
        for (int p = static_cast<int>(graph_->node_count()) - 1; p >= 0; --p) {
            const NodeId& node = graph_->topo()[p];
            if (node.kind == NodeKind::Output) {
                auto& gi = g_in[p];
                gi.assign(n, 0.0);
                for (int v = 0; v < V; ++v) {
                    double gl = dlogits[v];
                    if (gl == 0.0) continue;
                    for (int i = 0; i < d; ++i)
                        gi[(T - 1) * d + i] += gl * params_[layout_.wu + static_cast<std::size_t>(i) * V + v];
                }
            } else {
                if (g_out[p].empty()) g_out[p].assign(n, 0.0);
                if (node.kind == NodeKind::AttentionHead) {
                    int hid = node.layer * spec_.heads + node.index;
                    head_bwd(hid, ws.heads[hid], g_out[p], g_in[p], nullptr);
                } else if (node.kind == NodeKind::Mlp) {
                    mlp_bwd(node.layer, ws.mlps[node.layer], g_out[p], g_in[p], nullptr);
                } else {
                    continue;  // embedding: nothing upstream
                }
            }
            // push to senders along live edges
            for (EdgeIndex e : graph_->in_edges(p)) {
                if (!st.live[e] && !through_frozen) continue;
                int sp = graph_->topo_pos(graph_->edges()[e].sender);
                if (g_out[sp].empty()) g_out[sp].assign(n, 0.0);
                const auto& gi = g_in[p];
                auto& go = g_out[sp];
                for (std::size_t i = 0; i < n; ++i) go[i] += gi[i];
            }
        }
    }

    void backward_receivers_soft(const PatchState& st, Workspace& ws, const PatchPlan& plan,
                                 std::span<const double> z, const std::vector<double>& dlogits,
                                 std::vector<std::vector<double>>& g_in, std::vector<double>& dz) const {
        const int T = st.T, d = spec_.model_dim, V = spec_.vocab;
        const std::size_t n = static_cast<std::size_t>(T) * d;
        const auto& frozen = *plan.frozen_edges;
        std::vector<std::vector<double>> g_out(graph_->node_count());
        g_in.assign(graph_->node_count(), {});
        for (int p = static_cast<int>(graph_->node_count()) - 1; p >= 0; --p) {
            const NodeId& node = graph_->topo()[p];
            if (node.kind == NodeKind::Output) {
                auto& gi = g_in[p];
                gi.assign(n, 0.0);
                for (int v = 0; v < V; ++v) {
                    double gl = dlogits[v];
                    if (gl == 0.0) continue;
                    for (int i = 0; i < d; ++i)
                        gi[(T - 1) * d + i] += gl * params_[layout_.wu + static_cast<std::size_t>(i) * V + v];
                }
            } else if (node.kind == NodeKind::Input) {
                continue;
            } else {
                if (g_out[p].empty()) g_out[p].assign(n, 0.0);
                if (node.kind == NodeKind::AttentionHead) {
                    int hid = node.layer * spec_.heads + node.index;
                    head_bwd(hid, ws.heads[hid], g_out[p], g_in[p], nullptr);
                } else {
                    mlp_bwd(node.layer, ws.mlps[node.layer], g_out[p], g_in[p], nullptr);
                }
            }
            const auto& gi = g_in[p];
            for (EdgeIndex e : graph_->in_edges(p)) {
                int sp = graph_->topo_pos(graph_->edges()[e].sender);
                const auto& lv = st.comp_out[sp];
                const auto& f = frozen[e];
                double w = z[e];
                double wl = plan.live_is_retained ? w : 1.0 - w;
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += gi[i] * (lv[i] - f[i]);
                // d carried / d z = (live - frozen) on the retained-live side,
                // and the negation when the circuit occupies the frozen side.
                dz[e] += plan.live_is_retained ? acc : -acc;
                if (wl != 0.0) {
                    if (g_out[sp].empty()) g_out[sp].assign(n, 0.0);
                    auto& go = g_out[sp];
                    for (std::size_t i = 0; i < n; ++i) go[i] += wl * gi[i];
                }
            }
        }
    }

    TransformerSpec spec_;
    int head_dim_ = 0;
    std::unique_ptr<ComputationalGraph> graph_;
    Layout layout_;
    std::vector<double> params_;
};

}  // namespace gatecircuits
