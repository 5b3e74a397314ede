// Shared model-facing types and the abstract model interface.
//
// All model families expose the same patched-run contract: every edge carries
// either a "live" value (recomputed in topological order from the live input)
// or a frozen per-edge value from a donor cache. Which side the retained
// (circuit) edges carry depends on the intervention strategy and ablation
// mode; intervention.hpp builds the plans.

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "gatecircuits/graph.hpp"
#include "gatecircuits/metrics.hpp"

namespace gatecircuits {

// One model input. Token models use `tokens`; analytic models use `values`
// (one value per source node, in topological order of the sources).
struct Example {
    std::vector<int> tokens;
    std::vector<double> values;
};

struct TaskPair {
    Example clean;
    Example corrupted;
    int clean_label = -1;
    int corrupted_label = -1;
};

struct TaskDataset {
    std::vector<TaskPair> pairs;
};

// Per-edge sender contributions and per-node values for one input.
struct ActivationCache {
    std::vector<std::vector<double>> edge_values;  // by canonical edge index
    std::vector<std::vector<double>> node_values;  // by topo position
    std::vector<double> logits;
};

struct EdgeGradients {
    std::vector<std::vector<double>> grads;  // by canonical edge index
};

// A patched run: edges on the live side recompute from `live_input`; edges on
// the frozen side carry `frozen_edges` values. `live_is_retained` selects
// which side the retained circuit occupies.
struct PatchPlan {
    const Example* live_input = nullptr;
    const std::vector<std::vector<double>>* frozen_edges = nullptr;
    bool live_is_retained = true;
};

// One-sided derivative convention at kinks (ReLU corners, min/max ties).
// Decrease grades sensitivity to downward perturbations (noising direction),
// Increase to upward ones (denoising direction). Away from kinks both agree
// with the ordinary derivative.
enum class GradSide { Decrease, Increase };

struct LossSpec {
    enum class Kind { SinkValue, LogitDiff, CrossEntropy };
    Kind kind = Kind::SinkValue;
    int label_pos = -1;  // LogitDiff / CrossEntropy target
    int label_neg = -1;  // LogitDiff foil
};

class Model {
public:
    virtual ~Model() = default;

    virtual const ComputationalGraph& graph() const = 0;
    virtual bool is_token_model() const = 0;
    // True when corruption freezes per-edge constants (zero/noise ablation)
    // rather than being driven by a corrupted input.
    virtual bool edge_frozen_corruption() const = 0;

    virtual ActivationCache forward(const Example& input) const = 0;

    virtual std::vector<double> patched_logits(const PatchPlan& plan, const Circuit& retained) const = 0;

    // d loss / d (carried value of each edge), evaluated at the given patched
    // state. The full-circuit plan with a live clean input reduces to the
    // ordinary clean-run edge gradients. With through_frozen set, derivatives
    // propagate through frozen edges as well: the state keeps its patched
    // values but the differentiation topology is the live network, which is
    // what first-order attribution at a synthetic-ablation state calls for.
    virtual EdgeGradients edge_gradients_at(const PatchPlan& plan, const Circuit& retained,
                                            const LossSpec& loss, GradSide side,
                                            bool through_frozen = false) const = 0;

    // Soft-mask run: each edge carries z*(circuit side) + (1-z)*(other side).
    // Returns metric_distance(ref_logits, out) and accumulates d/dz into dz.
    virtual double soft_mask_loss_grad(const PatchPlan& plan, std::span<const double> z,
                                       const std::vector<double>& ref_logits, Metric metric,
                                       const MetricLabels& labels, std::vector<double>& dz) const = 0;
};

inline void check_cache_shapes(const ComputationalGraph& g, const ActivationCache& c) {
    if (c.edge_values.size() != g.edge_count() || c.node_values.size() != g.node_count())
        throw std::invalid_argument("activation cache does not match graph shape");
}

}  // namespace gatecircuits
