// Declarative experiment runner: JSON model/task specs, validated experiment
// configs, the algorithm x strategy x k grid, deterministic reports, and CSV
// projections for plotting.

#pragma once

#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gatecircuits/evaluation.hpp"
#include "gatecircuits/tasks.hpp"
#include "gatecircuits/transformer.hpp"
#include "gatecircuits/version.hpp"

namespace gatecircuits {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Model and task factories.
// ---------------------------------------------------------------------------
struct ModelBundle {
    std::shared_ptr<AnalyticModel> analytic;
    std::shared_ptr<TransformerModel> transformer;
    json spec_echo;
    std::optional<TrainResult> training;

    const Model& model() const {
        if (analytic) return *analytic;
        if (transformer) return *transformer;
        throw std::logic_error("empty model bundle");
    }
};

inline GateNetworkSpec gate_network_spec_from_json(const json& j) {
    GateNetworkSpec spec;
    for (const auto& g : j.at("gates")) {
        GateSpecEntry e;
        e.name = g.at("name").get<std::string>();
        e.kind = gate_kind_from_string(g.at("kind").get<std::string>());
        for (const auto& p : g.at("parents")) e.parents.push_back(p.get<std::string>());
        spec.gates.push_back(std::move(e));
    }
    if (j.contains("sink")) spec.sink = j.at("sink").get<std::string>();
    return spec;
}

// Builds the untrained structure; trained transformers are fitted against the
// experiment task by build_lab below.
inline ModelBundle build_model_structure(const json& spec) {
    ModelBundle out;
    out.spec_echo = spec;
    std::string family = spec.at("family").get<std::string>();
    if (family == "gate-network") {
        out.analytic = AnalyticModel::gate_network(gate_network_spec_from_json(spec));
    } else if (family == "fig2") {
        out.analytic = make_fig2_network();
    } else if (family == "planted") {
        PlantedNetworkConfig cfg;
        cfg.and_gates = spec.value("and_gates", 1);
        cfg.or_gates = spec.value("or_gates", 1);
        cfg.max_gate_size = spec.value("max_gate_size", 2);
        cfg.extra_adder_sources = spec.value("extra_adder_sources", 0);
        Rng rng(spec.value("seed", 0ULL));
        out.analytic = make_planted_network(cfg, rng);
    } else if (family == "toy-transformer") {
        GateKind kind = gate_kind_from_string(spec.at("gate").get<std::string>());
        std::optional<double> b1, b2;
        if (spec.contains("bias1")) b1 = spec.at("bias1").get<double>();
        if (spec.contains("bias2")) b2 = spec.at("bias2").get<double>();
        out.analytic = AnalyticModel::gate_toy(kind, b1, b2);
    } else if (family == "trained-transformer") {
        TransformerSpec ts;
        ts.layers = spec.value("layers", 2);
        ts.heads = spec.value("heads", 4);
        ts.model_dim = spec.value("model_dim", 32);
        ts.mlp_dim = spec.value("mlp_dim", 64);
        ts.vocab = spec.value("vocab", 20);
        ts.max_seq = spec.value("max_seq", 16);
        ts.seed = spec.value("seed", 0ULL);
        out.transformer = std::make_shared<TransformerModel>(ts);
    } else {
        throw std::invalid_argument("unknown model family: " + family);
    }
    return out;
}

inline TaskDataset build_task(const json& task, const ModelBundle& bundle, std::uint64_t seed) {
    std::string kind = task.at("kind").get<std::string>();
    if (kind == "gate-canonical") {
        if (!bundle.analytic) throw std::invalid_argument("gate-canonical task needs an analytic model");
        // frozen-edge toys run on the zero tensor; source-driven networks on
        // the all-ones assignment
        if (bundle.analytic->edge_frozen_corruption()) return toy_dataset(*bundle.analytic);
        return gate_canonical_dataset(*bundle.analytic);
    }
    if (kind == "gate-truth-table") {
        if (!bundle.analytic) throw std::invalid_argument("gate-truth-table task needs an analytic model");
        return gate_truth_table_dataset(*bundle.analytic);
    }
    TaskConfig tc;
    tc.vocab = task.value("vocab", 20);
    tc.length = task.value("length", 12);
    tc.count = task.value("count", 256);
    std::uint64_t task_seed = task.value("seed", seed);
    if (kind == "induction") return make_induction_task(tc, task_seed);
    if (kind == "copy") return make_copy_task(tc, task_seed);
    throw std::invalid_argument("unknown task kind: " + kind);
}

struct Lab {
    ModelBundle bundle;
    TaskDataset data;
    EvalContext ctx;
};

inline AblationMode ablation_from_json(const json& j) {
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        if (s == "zero") return AblationMode::zero();
        if (s == "interchange") return AblationMode::interchange();
        throw std::invalid_argument("unknown ablation mode: " + s);
    }
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "noise") return AblationMode::noise(j.value("mean", 0.0), j.value("std", 0.0));
    return ablation_from_json(json(kind));
}

// Builds model + task + evaluation context; trains transformer models on the
// task before the context is frozen.
inline Lab build_lab(const json& model_spec, const json& task_spec, std::uint64_t seed,
                     const std::optional<json>& ablation = std::nullopt) {
    Lab lab{build_model_structure(model_spec), {}, {}};
    lab.data = build_task(task_spec, lab.bundle, derive_seed(seed, 0, "task"));
    if (lab.bundle.transformer) {
        const json& spec = lab.bundle.spec_echo;
        json train = spec.value("train", json::object());
        TrainConfig tc;
        tc.steps = train.value("steps", 8000);
        tc.batch = train.value("batch", 32);
        tc.lr = train.value("lr", 3e-3);
        tc.accuracy_floor = train.value("accuracy_floor", 0.95);
        tc.eval_every = train.value("eval_every", 100);
        tc.head_dropout = train.value("head_dropout", 0.0);
        tc.mlp_dropout = train.value("mlp_dropout", 0.0);
        tc.seed = train.value("seed", seed);
        auto res = lab.bundle.transformer->train(lab.data, tc);
        if (!res.reached_floor)
            throw std::runtime_error("training failed to reach the accuracy floor (" +
                                     std::to_string(res.accuracy) + " after " +
                                     std::to_string(res.steps_run) + " steps)");
        lab.bundle.training = res;
    }
    AblationMode mode = ablation ? ablation_from_json(*ablation) : default_ablation(lab.bundle.model());
    lab.ctx = build_context(lab.bundle.model(), lab.data, mode, seed);
    return lab;
}

// ---------------------------------------------------------------------------
// Experiment configuration.
// ---------------------------------------------------------------------------
struct ExperimentConfig {
    int version = 1;
    std::uint64_t seed = 0;
    json model;
    json task;
    std::optional<json> ablation;
    std::vector<DiscoveryConfig> algorithms;
    std::vector<int> k_grid;
    std::vector<Strategy> strategies;
    std::vector<std::string> evaluations;
    int incompleteness_samples = 30;
    int incompleteness_size_min = 2;
    int incompleteness_size_max = 5;
    int randomness_runs = 10;
    SamplerConfig misalignment_sampler;
    double misalignment_m = 1.5;
    int threads = 1;
    bool timings = false;
    std::string output;
};

inline json mask_hparams_to_json(const MaskHparams& m) {
    return json{{"temperature", m.temperature}, {"stretch_lo", m.stretch_lo},
                {"stretch_hi", m.stretch_hi},  {"sparsity_penalty", m.sparsity_penalty},
                {"steps", m.steps},            {"lr", m.lr},
                {"init_mean", m.init_mean},    {"init_std", m.init_std},
                {"adapt_to_k", m.adapt_to_k}};
}

inline MaskHparams mask_hparams_from_json(const json& j) {
    MaskHparams m;
    m.temperature = j.value("temperature", m.temperature);
    m.stretch_lo = j.value("stretch_lo", m.stretch_lo);
    m.stretch_hi = j.value("stretch_hi", m.stretch_hi);
    m.sparsity_penalty = j.value("sparsity_penalty", m.sparsity_penalty);
    m.steps = j.value("steps", m.steps);
    m.lr = j.value("lr", m.lr);
    m.init_mean = j.value("init_mean", m.init_mean);
    m.init_std = j.value("init_std", m.init_std);
    m.adapt_to_k = j.value("adapt_to_k", m.adapt_to_k);
    return m;
}

inline const std::vector<std::string>& known_evaluations() {
    static const std::vector<std::string> kinds{"faithfulness",          "completeness", "incompleteness-sampled",
                                                "randomness",            "gates",        "misalignment",
                                                "oracle"};
    return kinds;
}

inline ExperimentConfig parse_experiment_config(const json& j) {
    std::vector<std::string> errors;
    ExperimentConfig cfg;
    cfg.version = j.value("version", 0);
    if (cfg.version != 1) errors.push_back("version: unsupported (expected 1)");
    cfg.seed = j.value("seed", 0ULL);
    if (j.contains("model")) cfg.model = j.at("model");
    else errors.push_back("model: missing");
    if (j.contains("task")) cfg.task = j.at("task");
    else errors.push_back("task: missing");
    if (j.contains("ablation")) cfg.ablation = j.at("ablation");

    if (!j.contains("algorithms") || !j.at("algorithms").is_array() || j.at("algorithms").empty()) {
        errors.push_back("algorithms: must be a nonempty list");
    } else {
        for (const auto& a : j.at("algorithms")) {
            try {
                DiscoveryConfig dc;
                dc.algorithm = algorithm_from_string(a.at("algorithm").get<std::string>());
                dc.metric = metric_from_string(a.value("metric", std::string("kl")));
                if (a.contains("mask")) dc.mask = mask_hparams_from_json(a.at("mask"));
                if (a.contains("tau")) dc.tau = a.at("tau").get<double>();
                if (a.contains("greedy_k_mode"))
                    dc.greedy_k_mode = a.at("greedy_k_mode").get<std::string>() == "trim" ? GreedyKMode::Trim
                                                                                         : GreedyKMode::Bisect;
                dc.nsdn_joint_mask = a.value("nsdn_joint_mask", false);
                cfg.algorithms.push_back(std::move(dc));
            } catch (const std::exception& e) {
                errors.push_back(std::string("algorithms: ") + e.what());
            }
        }
    }
    if (!j.contains("k_grid") || !j.at("k_grid").is_array() || j.at("k_grid").empty())
        errors.push_back("k_grid: must be a nonempty list");
    else
        for (const auto& k : j.at("k_grid")) cfg.k_grid.push_back(k.get<int>());

    if (!j.contains("strategies") || !j.at("strategies").is_array() || j.at("strategies").empty())
        errors.push_back("strategies: must be a nonempty list");
    else
        for (const auto& s : j.at("strategies")) {
            try {
                cfg.strategies.push_back(strategy_from_string(s.get<std::string>()));
            } catch (const std::exception& e) {
                errors.push_back(std::string("strategies: ") + e.what());
            }
        }
    if (j.contains("evaluations")) {
        for (const auto& e : j.at("evaluations")) {
            std::string kind = e.get<std::string>();
            bool known = false;
            for (const auto& k : known_evaluations()) known = known || k == kind;
            if (!known) errors.push_back("evaluations: unknown kind " + kind);
            else cfg.evaluations.push_back(kind);
        }
    }
    if (j.contains("incompleteness")) {
        const auto& inc = j.at("incompleteness");
        cfg.incompleteness_samples = inc.value("samples", 30);
        cfg.incompleteness_size_min = inc.value("size_min", 2);
        cfg.incompleteness_size_max = inc.value("size_max", 5);
    }
    if (j.contains("randomness")) cfg.randomness_runs = j.at("randomness").value("runs", 10);
    if (j.contains("misalignment")) {
        const auto& mis = j.at("misalignment");
        cfg.misalignment_sampler.samples = mis.value("samples", 30);
        cfg.misalignment_sampler.size_min = mis.value("size_min", 2);
        cfg.misalignment_sampler.size_max = mis.value("size_max", 5);
        cfg.misalignment_m = mis.value("m", 1.5);
    }
    cfg.threads = j.value("threads", 1);
    if (cfg.threads < 1) errors.push_back("threads: must be >= 1");
    cfg.timings = j.value("timings", false);
    cfg.output = j.value("output", std::string());

    if (!errors.empty()) {
        std::string msg = "invalid experiment config:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw std::invalid_argument(msg);
    }
    return cfg;
}

inline json serialize_experiment_config(const ExperimentConfig& cfg) {
    json out;
    out["version"] = cfg.version;
    out["seed"] = cfg.seed;
    out["model"] = cfg.model;
    out["task"] = cfg.task;
    if (cfg.ablation) out["ablation"] = *cfg.ablation;
    json algos = json::array();
    for (const auto& a : cfg.algorithms) {
        json ja;
        ja["algorithm"] = algorithm_name(a.algorithm);
        ja["metric"] = metric_name(a.metric);
        ja["mask"] = mask_hparams_to_json(a.mask);
        if (a.tau > 0) ja["tau"] = a.tau;
        ja["greedy_k_mode"] = a.greedy_k_mode == GreedyKMode::Trim ? "trim" : "bisect";
        ja["nsdn_joint_mask"] = a.nsdn_joint_mask;
        algos.push_back(std::move(ja));
    }
    out["algorithms"] = std::move(algos);
    out["k_grid"] = cfg.k_grid;
    json strat = json::array();
    for (auto s : cfg.strategies) strat.push_back(strategy_name(s));
    out["strategies"] = std::move(strat);
    out["evaluations"] = cfg.evaluations;
    out["incompleteness"] = json{{"samples", cfg.incompleteness_samples},
                                 {"size_min", cfg.incompleteness_size_min},
                                 {"size_max", cfg.incompleteness_size_max}};
    out["randomness"] = json{{"runs", cfg.randomness_runs}};
    out["misalignment"] = json{{"samples", cfg.misalignment_sampler.samples},
                               {"size_min", cfg.misalignment_sampler.size_min},
                               {"size_max", cfg.misalignment_sampler.size_max},
                               {"m", cfg.misalignment_m}};
    out["threads"] = cfg.threads;
    out["timings"] = cfg.timings;
    out["output"] = cfg.output;
    return out;
}

// ---------------------------------------------------------------------------
// Report pieces.
// ---------------------------------------------------------------------------
inline json circuit_to_json(const ComputationalGraph& g, const Circuit& c) {
    json out = json::array();
    for (const auto& name : circuit_edge_names(g, c)) out.push_back(name);
    return out;
}

inline json labeling_to_json(const ComputationalGraph& g, const GateLabeling& lab) {
    return json{{"and", circuit_to_json(g, lab.and_edges)},
                {"or", circuit_to_json(g, lab.or_edges)},
                {"adder", circuit_to_json(g, lab.adder_edges)},
                {"size_mismatch", lab.size_mismatch}};
}

inline void write_text_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp);
        out << content;
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw std::runtime_error("atomic rename failed for: " + path);
    }
}

// ---------------------------------------------------------------------------
// The grid runner.
// ---------------------------------------------------------------------------
inline json run_experiment(const ExperimentConfig& cfg) {
    Lab lab = build_lab(cfg.model, cfg.task, cfg.seed, cfg.ablation);
    const EvalContext& ctx = lab.ctx;
    const auto& g = ctx.graph();

    auto wants = [&](const std::string& kind) {
        for (const auto& e : cfg.evaluations)
            if (e == kind) return true;
        return false;
    };

    struct CellSpec {
        std::size_t algo;
        Strategy strategy;
        int k;
        std::size_t index;
    };
    std::vector<CellSpec> cells;
    for (std::size_t a = 0; a < cfg.algorithms.size(); ++a)
        for (Strategy s : cfg.strategies)
            for (int k : cfg.k_grid) cells.push_back({a, s, k, cells.size()});

    std::vector<json> cell_results(cells.size());
    auto run_cell = [&](const CellSpec& cell) {
        json out;
        out["algorithm"] = algorithm_name(cfg.algorithms[cell.algo].algorithm);
        out["strategy"] = strategy_name(cell.strategy);
        out["k"] = cell.k;
        try {
            DiscoveryConfig dc = cfg.algorithms[cell.algo];
            dc.strategy = cell.strategy;
            dc.seed = derive_seed(cfg.seed, cell.index, "cell");
            Circuit circuit = discover_at_k(ctx, dc, cell.k);
            out["circuit"] = circuit_to_json(g, circuit);
            out["sparsity_ratio"] = circuit.sparsity_ratio(g);
            if (wants("faithfulness")) {
                auto f = faithfulness(ctx, circuit, dc.metric);
                json jf{{"kl", f.kl}};
                if (f.accuracy) jf["accuracy"] = *f.accuracy;
                out["faithfulness"] = std::move(jf);
            }
            if (wants("completeness")) {
                auto c = completeness(ctx, circuit, dc.metric);
                json jc{{"kl_of_removal", c.kl_of_removal}};
                if (c.accuracy_of_removal) jc["accuracy_of_removal"] = *c.accuracy_of_removal;
                out["completeness"] = std::move(jc);
            }
            if (wants("incompleteness-sampled")) {
                auto r = incompleteness_sampled(ctx, circuit, cfg.incompleteness_samples,
                                                cfg.incompleteness_size_min, cfg.incompleteness_size_max,
                                                derive_seed(cfg.seed, cell.index, "incompleteness"), dc.metric);
                out["incompleteness_sampled"] = json{{"mean", r.mean}, {"std", r.std}, {"samples", r.samples}};
            }
            if (wants("randomness")) {
                std::vector<std::uint64_t> seeds;
                for (int r = 0; r < cfg.randomness_runs; ++r)
                    seeds.push_back(derive_seed(cfg.seed, cell.index * 1000 + r, "randomness"));
                auto r = randomness(ctx, dc, cell.k, seeds);
                out["randomness"] =
                    json{{"mean_hamming", r.mean_hamming}, {"std", r.std}, {"run_count", r.run_count}};
            }
        } catch (const std::exception& e) {
            out["error"] = e.what();
        }
        return out;
    };

    if (cfg.threads <= 1) {
        for (const auto& cell : cells) cell_results[cell.index] = run_cell(cell);
    } else {
        std::size_t next = 0;
        std::vector<std::thread> pool;
        std::mutex mu;
        for (int t = 0; t < cfg.threads; ++t)
            pool.emplace_back([&] {
                while (true) {
                    std::size_t mine;
                    {
                        std::lock_guard<std::mutex> lock(mu);
                        if (next >= cells.size()) return;
                        mine = next++;
                    }
                    cell_results[mine] = run_cell(cells[mine]);
                }
            });
        for (auto& t : pool) t.join();
    }

    // Per (algorithm, k) gate analyses from the granularity-aligned pair.
    json analyses = json::array();
    if (wants("gates") || wants("misalignment")) {
        for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
            for (int k : cfg.k_grid) {
                json ja;
                ja["algorithm"] = algorithm_name(cfg.algorithms[a].algorithm);
                ja["k"] = k;
                try {
                    DiscoveryConfig dc = cfg.algorithms[a];
                    dc.seed = derive_seed(cfg.seed, a * 1000 + static_cast<std::size_t>(k), "pair");
                    auto [c_ns, c_dn] = discover_pair(ctx, dc, k);
                    GateLabeling lab = classify_gates(c_ns, c_dn);
                    ja["labels"] = labeling_to_json(g, lab);
                    auto p = proportions(lab);
                    ja["proportions"] = json{{"and", p.and_count}, {"or", p.or_count}, {"adder", p.adder_count}};
                    auto gates = group_gates(lab, g);
                    if (wants("gates") && !gates.empty()) {
                        json jg = json::array();
                        for (const auto& ge : gate_effects(ctx, gates, dc.metric))
                            jg.push_back(json{{"receiver", node_name(ge.gate.receiver)},
                                              {"label", gate_label_name(ge.gate.label)},
                                              {"edges", ge.gate.members.size()},
                                              {"gate_effect", ge.gate_effect},
                                              {"edge_effect", ge.edge_effect}});
                        ja["gate_effects"] = std::move(jg);
                        json jb = json::array();
                        for (const auto& row : gate_ablation_deltas(
                                 ctx, gates, 30, derive_seed(cfg.seed, a * 1000 + k, "box"), dc.metric))
                            jb.push_back(json{{"receiver", node_name(row.receiver)},
                                              {"label", gate_label_name(row.label)},
                                              {"removed", row.removed},
                                              {"delta", row.delta}});
                        ja["box_ablation"] = std::move(jb);
                    }
                    if (wants("misalignment")) {
                        SamplerConfig sampler = cfg.misalignment_sampler;
                        sampler.seed = derive_seed(cfg.seed, a * 1000 + k, "misalignment");
                        json jm;
                        try {
                            jm["and_score"] = misalignment_and(ctx, lab.and_edges, sampler, dc.metric);
                        } catch (const std::exception& e) {
                            jm["and_error"] = e.what();
                        }
                        try {
                            jm["or_score"] =
                                misalignment_or(ctx, lab.or_edges, sampler, dc.metric, cfg.misalignment_m);
                        } catch (const std::exception& e) {
                            jm["or_error"] = e.what();
                        }
                        jm["m"] = cfg.misalignment_m;
                        jm["samples"] = sampler.samples;
                        ja["misalignment"] = std::move(jm);
                    }
                } catch (const std::exception& e) {
                    ja["error"] = e.what();
                }
                analyses.push_back(std::move(ja));
            }
        }
    }

    json report;
    report["version"] = 1;
    report["engine_version"] = kEngineVersion;
    report["config"] = serialize_experiment_config(cfg);
    report["graph"] = json{{"nodes", g.node_count()}, {"edges", g.edge_count()}};
    if (lab.bundle.training)
        report["training"] = json{{"steps", lab.bundle.training->steps_run},
                                  {"accuracy", lab.bundle.training->accuracy}};
    report["cells"] = cell_results;
    if (!analyses.empty()) report["gate_analyses"] = std::move(analyses);

    if (wants("oracle")) {
        try {
            DiscoveryConfig dc = cfg.algorithms.front();
            auto faithful = minimal_subset_oracle(ctx, dc.metric, OracleMode::Faithful);
            auto complete = minimal_subset_oracle(ctx, dc.metric, OracleMode::Complete);
            report["oracle"] = json{{"faithful",
                                     json{{"minimal", circuit_to_json(g, faithful.minimal)},
                                          {"core", circuit_to_json(g, faithful.core)},
                                          {"tie_count", faithful.tie_count}}},
                                    {"complete",
                                     json{{"minimal", circuit_to_json(g, complete.minimal)},
                                          {"core", circuit_to_json(g, complete.core)},
                                          {"tie_count", complete.tie_count}}}};
        } catch (const std::exception& e) {
            report["oracle"] = json{{"error", e.what()}};
        }
    }
    return report;
}

inline void write_report(const json& report, const std::string& path) {
    write_text_atomic(path, report.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CSV projections.
// ---------------------------------------------------------------------------
inline std::string emit_plot_data(const json& report, const std::string& kind) {
    std::ostringstream csv;
    auto require_cells = [&]() -> const json& {
        if (!report.contains("cells") || report.at("cells").empty())
            throw std::invalid_argument("plot-data: report has no cells");
        return report.at("cells");
    };
    if (kind == "completeness-curves" || kind == "faithfulness-curves") {
        const char* section = kind == "completeness-curves" ? "completeness" : "faithfulness";
        csv << "algorithm,strategy,k," << (kind == "completeness-curves" ? "kl_of_removal,accuracy_of_removal"
                                                                         : "kl,accuracy")
            << "\n";
        bool any = false;
        for (const auto& cell : require_cells()) {
            if (!cell.contains(section)) continue;
            any = true;
            const auto& s = cell.at(section);
            csv << cell.at("algorithm").get<std::string>() << "," << cell.at("strategy").get<std::string>()
                << "," << cell.at("k").get<int>() << ",";
            if (kind == "completeness-curves") {
                csv << s.at("kl_of_removal").get<double>() << ",";
                csv << (s.contains("accuracy_of_removal") ? std::to_string(s.at("accuracy_of_removal").get<double>())
                                                          : std::string());
            } else {
                csv << s.at("kl").get<double>() << ",";
                csv << (s.contains("accuracy") ? std::to_string(s.at("accuracy").get<double>()) : std::string());
            }
            csv << "\n";
        }
        if (!any) throw std::invalid_argument("plot-data: no cells carry the requested evaluation");
        return csv.str();
    }
    if (kind == "proportions") {
        if (!report.contains("gate_analyses"))
            throw std::invalid_argument("plot-data: report has no gate analyses");
        csv << "algorithm,k,and,or,adder\n";
        for (const auto& ja : report.at("gate_analyses")) {
            if (!ja.contains("proportions")) continue;
            const auto& p = ja.at("proportions");
            csv << ja.at("algorithm").get<std::string>() << "," << ja.at("k").get<int>() << ","
                << p.at("and").get<int>() << "," << p.at("or").get<int>() << "," << p.at("adder").get<int>()
                << "\n";
        }
        return csv.str();
    }
    if (kind == "box-ablation") {
        if (!report.contains("gate_analyses"))
            throw std::invalid_argument("plot-data: report has no gate analyses");
        csv << "algorithm,k,receiver,label,removed,delta\n";
        for (const auto& ja : report.at("gate_analyses")) {
            if (!ja.contains("box_ablation")) continue;
            for (const auto& row : ja.at("box_ablation"))
                csv << ja.at("algorithm").get<std::string>() << "," << ja.at("k").get<int>() << ","
                    << row.at("receiver").get<std::string>() << "," << row.at("label").get<std::string>() << ","
                    << row.at("removed").get<int>() << "," << row.at("delta").get<double>() << "\n";
        }
        return csv.str();
    }
    if (kind == "misalignment-sweep") {
        if (!report.contains("sweep")) throw std::invalid_argument("plot-data: report has no sweep section");
        csv << "k_ns,k_dn,ratio,and_score,or_score\n";
        for (const auto& row : report.at("sweep")) {
            csv << report.value("k_ns", 0) << "," << row.at("k_dn").get<int>() << ","
                << row.at("ratio").get<double>() << ",";
            csv << (row.contains("and_score") ? std::to_string(row.at("and_score").get<double>()) : std::string())
                << ",";
            csv << (row.contains("or_score") ? std::to_string(row.at("or_score").get<double>()) : std::string())
                << "\n";
        }
        return csv.str();
    }
    throw std::invalid_argument("plot-data: unknown kind " + kind);
}

// Misalignment sweep as a self-contained report (CLI `sweep-misalignment`).
inline json run_misalignment_sweep(const json& spec) {
    std::uint64_t seed = spec.value("seed", 0ULL);
    Lab lab = build_lab(spec.at("model"), spec.value("task", json{{"kind", "gate-canonical"}}), seed);
    DiscoveryConfig dc;
    dc.algorithm = algorithm_from_string(spec.value("algorithm", std::string("greedy")));
    dc.metric = metric_from_string(spec.value("metric", std::string("sink")));
    dc.seed = derive_seed(seed, 0, "sweep");
    if (spec.contains("mask")) dc.mask = mask_hparams_from_json(spec.at("mask"));
    int k_ns = spec.at("k_ns").get<int>();
    std::vector<int> grid;
    for (const auto& k : spec.at("k_dn_grid")) grid.push_back(k.get<int>());
    SamplerConfig sampler;
    sampler.samples = spec.value("samples", 30);
    sampler.seed = derive_seed(seed, 1, "sweep-sampler");
    double m = spec.value("m", 1.5);

    auto res = ratio_sweep(lab.ctx, dc, k_ns, grid, sampler, dc.metric, m);
    json rows = json::array();
    for (const auto& rep : res.reports) {
        json row{{"k_dn", rep.k_dn}, {"ratio", rep.ratio_tested}, {"m", rep.constant_m}};
        if (rep.and_valid) row["and_score"] = rep.and_score;
        if (rep.or_valid) row["or_score"] = rep.or_score;
        rows.push_back(std::move(row));
    }
    json report;
    report["version"] = 1;
    report["engine_version"] = kEngineVersion;
    report["config"] = spec;
    report["k_ns"] = k_ns;
    report["sweep"] = std::move(rows);
    if (res.best_index >= 0) {
        report["best_k_dn"] = res.reports[res.best_index].k_dn;
        report["best_ratio"] = res.reports[res.best_index].ratio_tested;
    }
    return report;
}

}  // namespace gatecircuits
