// gatecircuits — command-line front end for the circuit-logic laboratory.
//
// Subcommands: discover, classify, evaluate, sweep-misalignment, oracle,
// verify, plot-data. Exit codes: 0 success, 1 criterion or experiment
// failure, 2 configuration error. GATECIRCUITS_SEED overrides config seeds.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "gatecircuits/acceptance.hpp"
#include "gatecircuits/harness.hpp"

using namespace gatecircuits;

namespace {

std::optional<std::uint64_t> env_seed_override() {
    const char* env = std::getenv("GATECIRCUITS_SEED");
    if (!env || !*env) return std::nullopt;
    return std::strtoull(env, nullptr, 10);
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open: " + path);
    json j;
    in >> j;
    return j;
}

json model_spec_from_name(const std::string& name) {
    if (name == "fig2") return json{{"family", "fig2"}};
    if (name == "toy-and") return json{{"family", "toy-transformer"}, {"gate", "AND"}};
    if (name == "toy-or") return json{{"family", "toy-transformer"}, {"gate", "OR"}};
    if (name == "toy-adder") return json{{"family", "toy-transformer"}, {"gate", "ADDER"}};
    if (name == "induction")
        return json{{"family", "trained-transformer"}, {"layers", 2}, {"heads", 4},
                    {"model_dim", 32},                {"mlp_dim", 64}, {"vocab", 20}};
    if (name.rfind("planted:", 0) == 0)
        return json{{"family", "planted"}, {"seed", std::stoull(name.substr(8))},
                    {"and_gates", 2},      {"or_gates", 2},
                    {"max_gate_size", 3},  {"extra_adder_sources", 1}};
    throw std::invalid_argument("unknown task/model name: " + name +
                                " (expected fig2|toy-and|toy-or|toy-adder|induction|planted:<seed>"
                                " or use --model-json)");
}

json default_task_for(const json& model) {
    std::string family = model.at("family").get<std::string>();
    if (family == "trained-transformer") return json{{"kind", "induction"}};
    return json{{"kind", "gate-canonical"}};
}

struct ModelTaskArgs {
    std::string task_name;
    std::string model_json_path;
    std::string task_json_path;

    json model() const {
        if (!model_json_path.empty()) return load_json(model_json_path);
        return model_spec_from_name(task_name);
    }
    json task(const json& model_spec) const {
        if (!task_json_path.empty()) return load_json(task_json_path);
        return default_task_for(model_spec);
    }
};

void add_model_task_options(CLI::App* cmd, ModelTaskArgs& args) {
    cmd->add_option("--task", args.task_name,
                    "named setup: fig2|toy-and|toy-or|toy-adder|induction|planted:<seed>");
    cmd->add_option("--model-json", args.model_json_path, "model spec JSON file (overrides --task)");
    cmd->add_option("--task-json", args.task_json_path, "task spec JSON file");
}

void write_or_print(const json& j, const std::string& out_path) {
    if (out_path.empty())
        std::cout << j.dump(2) << "\n";
    else
        write_report(j, out_path);
}

int run_discover(const ModelTaskArgs& mt, const std::string& algo, const std::string& strategy, int k,
                 double tau, std::uint64_t seed, const std::string& metric, const std::string& out_path) {
    json model_spec = mt.model();
    Lab lab = build_lab(model_spec, mt.task(model_spec), seed);
    DiscoveryConfig cfg;
    cfg.algorithm = algorithm_from_string(algo);
    cfg.strategy = strategy_from_string(strategy);
    cfg.metric = metric_from_string(metric.empty() ? (lab.bundle.analytic ? "sink" : "kl") : metric);
    cfg.seed = seed;

    Circuit circuit;
    if (k >= 0) {
        circuit = discover_at_k(lab.ctx, cfg, k);
    } else {
        cfg.tau = tau;
        circuit = discover(lab.ctx, cfg);
    }
    json out;
    out["engine_version"] = kEngineVersion;
    out["model"] = model_spec;
    out["graph_id"] = lab.ctx.graph().id();
    out["algorithm"] = algo;
    out["strategy"] = strategy;
    out["metric"] = metric_name(cfg.metric);
    out["seed"] = seed;
    if (k >= 0) out["k"] = k;
    else out["tau"] = tau;
    out["edges"] = circuit_to_json(lab.ctx.graph(), circuit);
    out["faithfulness_kl"] = circuit_distance(lab.ctx, circuit, Strategy::Ns, cfg.metric);
    write_or_print(out, out_path);
    return 0;
}

int run_classify(const std::string& ns_path, const std::string& dn_path, const std::string& out_path) {
    json ns_doc = load_json(ns_path);
    json dn_doc = load_json(dn_path);
    if (ns_doc.at("graph_id").get<std::uint64_t>() != dn_doc.at("graph_id").get<std::uint64_t>())
        throw std::invalid_argument("classify: circuits reference different graphs");
    ModelBundle bundle = build_model_structure(ns_doc.at("model"));
    const auto& g = bundle.model().graph();
    auto to_names = [](const json& arr) {
        std::vector<std::string> names;
        for (const auto& e : arr) names.push_back(e.get<std::string>());
        return names;
    };
    Circuit c_ns = circuit_from_edge_names(g, to_names(ns_doc.at("edges")));
    Circuit c_dn = circuit_from_edge_names(g, to_names(dn_doc.at("edges")));
    auto lab = classify_gates(c_ns, c_dn);
    if (lab.size_mismatch)
        std::cerr << "warning: |C_Ns| = " << c_ns.size() << " and |C_Dn| = " << c_dn.size()
                  << " differ; granularity alignment assumes equal sizes\n";
    json out;
    out["engine_version"] = kEngineVersion;
    out["model"] = ns_doc.at("model");
    out["graph_id"] = g.id();
    out["labels"] = labeling_to_json(g, lab);
    auto p = proportions(lab);
    out["proportions"] = json{{"and", p.and_count}, {"or", p.or_count}, {"adder", p.adder_count}};
    write_or_print(out, out_path);
    return 0;
}

int run_oracle(const ModelTaskArgs& mt, const std::string& metric, std::uint64_t seed,
               const std::string& out_path) {
    json model_spec = mt.model();
    Lab lab = build_lab(model_spec, mt.task(model_spec), seed);
    Metric m = metric_from_string(metric.empty() ? "sink" : metric);
    auto faithful = minimal_subset_oracle(lab.ctx, m, OracleMode::Faithful);
    auto complete = minimal_subset_oracle(lab.ctx, m, OracleMode::Complete);
    const auto& g = lab.ctx.graph();
    json out;
    out["engine_version"] = kEngineVersion;
    out["model"] = model_spec;
    out["graph_id"] = g.id();
    out["faithful"] = json{{"minimal", circuit_to_json(g, faithful.minimal)},
                           {"core", circuit_to_json(g, faithful.core)},
                           {"tie_count", faithful.tie_count}};
    out["complete"] = json{{"minimal", circuit_to_json(g, complete.minimal)},
                           {"core", circuit_to_json(g, complete.core)},
                           {"tie_count", complete.tie_count}};
    write_or_print(out, out_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gate-logic circuit discovery laboratory"};
    app.require_subcommand(1);

    // discover
    auto* discover_cmd = app.add_subcommand("discover", "run one discovery algorithm and emit the circuit");
    ModelTaskArgs d_mt;
    add_model_task_options(discover_cmd, d_mt);
    std::string d_algo = "greedy", d_strategy = "ns", d_metric, d_out;
    int d_k = -1;
    double d_tau = -1.0;
    std::uint64_t d_seed = 0;
    discover_cmd->add_option("--algo", d_algo, "greedy|linear|mask")->required();
    discover_cmd->add_option("--strategy", d_strategy, "ns|dn|nsdn")->required();
    discover_cmd->add_option("--k", d_k, "exact edge count target");
    discover_cmd->add_option("--tau", d_tau, "threshold target");
    discover_cmd->add_option("--seed", d_seed, "seed");
    discover_cmd->add_option("--metric", d_metric, "kl|sink|logitdiff|acc");
    discover_cmd->add_option("--out", d_out, "output report path");

    // classify
    auto* classify_cmd = app.add_subcommand("classify", "label a circuit pair into AND/OR/ADDER gates");
    std::string c_ns, c_dn, c_out;
    classify_cmd->add_option("--ns", c_ns, "Ns circuit file")->required();
    classify_cmd->add_option("--dn", c_dn, "Dn circuit file")->required();
    classify_cmd->add_option("--out", c_out, "output path");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "run a full experiment grid from a config file");
    std::string e_config, e_out;
    eval_cmd->add_option("--config", e_config, "experiment config JSON")->required();
    eval_cmd->add_option("--out", e_out, "override the config output path");

    // sweep-misalignment
    auto* sweep_cmd = app.add_subcommand("sweep-misalignment", "misalignment scores across a k_dn grid");
    std::string s_config, s_out;
    sweep_cmd->add_option("--config", s_config, "sweep config JSON")->required();
    sweep_cmd->add_option("--out", s_out, "output path");

    // oracle
    auto* oracle_cmd = app.add_subcommand("oracle", "exhaustive minimal faithful/complete subsets");
    ModelTaskArgs o_mt;
    add_model_task_options(oracle_cmd, o_mt);
    std::string o_metric, o_out;
    std::uint64_t o_seed = 0;
    oracle_cmd->add_option("--metric", o_metric, "kl|sink|logitdiff");
    oracle_cmd->add_option("--seed", o_seed, "seed");
    oracle_cmd->add_option("--out", o_out, "output path");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "run the acceptance suite");
    std::string v_out;
    std::uint64_t v_seed = 0;
    bool v_timings = false;
    verify_cmd->add_option("--seed", v_seed, "root seed");
    verify_cmd->add_option("--out", v_out, "write the pass/fail report to this path");
    verify_cmd->add_flag("--timings", v_timings, "include wall times in the report file");

    // plot-data
    auto* plot_cmd = app.add_subcommand("plot-data", "project a report into a flat CSV");
    std::string p_report, p_kind, p_out;
    plot_cmd->add_option("--report", p_report, "report JSON path")->required();
    plot_cmd
        ->add_option("--kind", p_kind,
                     "completeness-curves|faithfulness-curves|proportions|box-ablation|misalignment-sweep")
        ->required();
    plot_cmd->add_option("--out", p_out, "CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    auto seed_override = env_seed_override();
    try {
        if (*discover_cmd) {
            if (seed_override) d_seed = *seed_override;
            if ((d_k >= 0) == (d_tau > 0))
                throw std::invalid_argument("discover: exactly one of --k / --tau must be set");
            return run_discover(d_mt, d_algo, d_strategy, d_k, d_tau, d_seed, d_metric, d_out);
        }
        if (*classify_cmd) return run_classify(c_ns, c_dn, c_out);
        if (*eval_cmd) {
            json raw = load_json(e_config);
            if (seed_override) raw["seed"] = *seed_override;
            ExperimentConfig cfg = parse_experiment_config(raw);
            if (!e_out.empty()) cfg.output = e_out;
            json report = run_experiment(cfg);
            if (!cfg.output.empty()) {
                write_report(report, cfg.output);
                std::cout << "report written to " << cfg.output << "\n";
            } else {
                std::cout << report.dump(2) << "\n";
            }
            for (const auto& cell : report.at("cells"))
                if (cell.contains("error")) return 1;
            return 0;
        }
        if (*sweep_cmd) {
            json spec = load_json(s_config);
            if (seed_override) spec["seed"] = *seed_override;
            json report = run_misalignment_sweep(spec);
            write_or_print(report, s_out);
            return 0;
        }
        if (*oracle_cmd) {
            if (seed_override) o_seed = *seed_override;
            return run_oracle(o_mt, o_metric, o_seed, o_out);
        }
        if (*verify_cmd) {
            if (seed_override) v_seed = *seed_override;
            auto results = verify_paper_suite(v_seed, stdout);
            json report = acceptance_report(results, v_timings);
            if (!v_out.empty()) write_report(report, v_out);
            return report.at("all_pass").get<bool>() ? 0 : 1;
        }
        if (*plot_cmd) {
            json report = load_json(p_report);
            std::string csv = emit_plot_data(report, p_kind);
            if (p_out.empty())
                std::cout << csv;
            else
                write_text_atomic(p_out, csv);
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
