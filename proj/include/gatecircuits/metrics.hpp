// Output distances between two logit vectors, plus their gradients with
// respect to the second argument (used by the differentiable-mask search).

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gatecircuits {

enum class Metric { KlDivergence, SinkAbsDiff, LogitDiff, AccuracyDelta };

inline Metric metric_from_string(const std::string& s) {
    if (s == "kl") return Metric::KlDivergence;
    if (s == "sink") return Metric::SinkAbsDiff;
    if (s == "logitdiff") return Metric::LogitDiff;
    if (s == "acc") return Metric::AccuracyDelta;
    throw std::invalid_argument("unknown metric: " + s);
}

inline std::string metric_name(Metric m) {
    switch (m) {
        case Metric::KlDivergence: return "kl";
        case Metric::SinkAbsDiff: return "sink";
        case Metric::LogitDiff: return "logitdiff";
        case Metric::AccuracyDelta: return "acc";
    }
    return "?";
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

inline int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// D_KL(softmax(ref) || softmax(out)); exactly zero for identical logits.
inline double kl_divergence(const std::vector<double>& ref, const std::vector<double>& out) {
    if (ref.size() != out.size()) throw std::invalid_argument("kl: logit size mismatch");
    double mr = *std::max_element(ref.begin(), ref.end());
    double mo = *std::max_element(out.begin(), out.end());
    double zr = 0.0, zo = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        zr += std::exp(ref[i] - mr);
        zo += std::exp(out[i] - mo);
    }
    double lzr = std::log(zr) + mr, lzo = std::log(zo) + mo;
    double kl = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        double p = std::exp(ref[i] - lzr);
        kl += p * ((ref[i] - lzr) - (out[i] - lzo));
    }
    return std::max(kl, 0.0);
}

// Labels accompany a task pair; only LogitDiff needs them.
struct MetricLabels {
    int positive = -1;
    int negative = -1;
};

inline double logit_margin(const std::vector<double>& logits, const MetricLabels& lb) {
    if (lb.positive < 0 || lb.negative < 0 ||
        lb.positive >= static_cast<int>(logits.size()) || lb.negative >= static_cast<int>(logits.size()))
        throw std::invalid_argument("logitdiff: labels out of range");
    return logits[lb.positive] - logits[lb.negative];
}

inline double metric_distance(Metric m, const std::vector<double>& ref, const std::vector<double>& out,
                              const MetricLabels& lb = {}) {
    switch (m) {
        case Metric::KlDivergence:
            return kl_divergence(ref, out);
        case Metric::SinkAbsDiff:
            return std::abs(ref[0] - out[0]);
        case Metric::LogitDiff:
            return std::abs(logit_margin(ref, lb) - logit_margin(out, lb));
        case Metric::AccuracyDelta:
            return argmax(ref) != argmax(out) ? 1.0 : 0.0;
    }
    return 0.0;
}

inline bool metric_differentiable(Metric m) { return m != Metric::AccuracyDelta; }

// d metric_distance / d out, holding ref fixed.
inline std::vector<double> metric_grad_out(Metric m, const std::vector<double>& ref,
                                           const std::vector<double>& out, const MetricLabels& lb = {}) {
    std::vector<double> g(out.size(), 0.0);
    switch (m) {
        case Metric::KlDivergence: {
            auto p = softmax(ref);
            auto q = softmax(out);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = q[i] - p[i];
            break;
        }
        case Metric::SinkAbsDiff: {
            double d = out[0] - ref[0];
            g[0] = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
            break;
        }
        case Metric::LogitDiff: {
            double d = logit_margin(out, lb) - logit_margin(ref, lb);
            double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
            g[lb.positive] += s;
            g[lb.negative] -= s;
            break;
        }
        case Metric::AccuracyDelta:
            throw std::invalid_argument("accuracy metric is not differentiable");
    }
    return g;
}

}  // namespace gatecircuits
