#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "gatecircuits/intervention.hpp"
#include "gatecircuits/tasks.hpp"
#include "gatecircuits/transformer.hpp"

using namespace gatecircuits;

namespace {

TransformerSpec small_spec() {
    TransformerSpec spec;
    spec.layers = 2;
    spec.heads = 4;
    spec.model_dim = 32;
    spec.mlp_dim = 64;
    spec.vocab = 20;
    spec.max_seq = 16;
    spec.seed = 0;
    return spec;
}

const TransformerModel& trained_small() {
    static auto holder = [] {
        auto model = std::make_unique<TransformerModel>(small_spec());
        TaskConfig tc;
        tc.vocab = 20;
        tc.length = 12;
        tc.count = 4096;
        TaskDataset data = make_induction_task(tc, 3);
        TrainConfig cfg;
        cfg.steps = 6000;
        cfg.batch = 32;
        cfg.lr = 3e-3;
        cfg.accuracy_floor = 0.97;
        cfg.seed = 0;
        auto res = model->train(data, cfg);
        std::printf("[trained_small] steps=%d acc=%.3f loss=%.4f\n", res.steps_run, res.accuracy,
                    res.final_loss);
        return model;
    }();
    return *holder;
}

TaskDataset small_task(int count = 32, std::uint64_t seed = 3) {
    TaskConfig tc;
    tc.vocab = 20;
    tc.length = 12;
    tc.count = count;
    return make_induction_task(tc, seed);
}

}  // namespace

TEST_CASE("graph shape: full residual connectivity") {
    TransformerModel model(small_spec());
    const auto& g = model.graph();
    // components: embed + 2*(4 heads + mlp) + output = 12
    CHECK(g.node_count() == 12);
    CHECK(g.edge_count() == 54);
}

TEST_CASE("untrained accuracy is near chance") {
    TransformerModel model(small_spec());
    auto data = small_task(200, 11);
    double acc = model.accuracy(data);
    CHECK(acc < 0.2);  // chance is 1/20
}

TEST_CASE("degenerate vocab is rejected") {
    TransformerSpec spec = small_spec();
    spec.vocab = 1;
    CHECK_THROWS_AS(TransformerModel{spec}, std::invalid_argument);
}

TEST_CASE("induction training reaches the accuracy floor") {
    const auto& model = trained_small();
    auto data = small_task(128, 77);  // held-out sample of the same task
    CHECK(model.accuracy(data) >= 0.9);
}

TEST_CASE("residual additivity: node input equals sum of in-edge values") {
    TransformerModel model(small_spec());
    auto data = small_task(2);
    auto cache = model.forward(data.pairs[0].clean);
    const auto& g = model.graph();
    for (std::size_t p = 1; p < g.node_count(); ++p) {
        std::vector<double> sum(cache.node_values[p].size(), 0.0);
        for (EdgeIndex e : g.in_edges(static_cast<int>(p)))
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += cache.edge_values[e][i];
        for (std::size_t i = 0; i < sum.size(); ++i)
            CHECK(std::abs(sum[i] - cache.node_values[p][i]) < 1e-9);
    }
}

TEST_CASE("patch idempotence: retaining all edges reproduces the base run exactly") {
    const auto& model = trained_small();
    auto data = small_task(4);
    auto ctx = build_context(model, data);
    for (const auto& pc : ctx.pairs) {
        auto ns = patched_output(ctx, pc, Circuit::full(model.graph()), Strategy::Ns);
        REQUIRE(ns.size() == pc.ns_ref.size());
        for (std::size_t i = 0; i < ns.size(); ++i) CHECK(ns[i] == pc.ns_ref[i]);
        auto dn = patched_output(ctx, pc, Circuit::full(model.graph()), Strategy::Dn);
        for (std::size_t i = 0; i < dn.size(); ++i) CHECK(dn[i] == pc.dn_ref[i]);
    }
}

TEST_CASE("retaining nothing reproduces the donor side exactly") {
    const auto& model = trained_small();
    auto data = small_task(4);
    auto ctx = build_context(model, data);
    for (const auto& pc : ctx.pairs) {
        auto ns = patched_output(ctx, pc, Circuit::empty(model.graph()), Strategy::Ns);
        for (std::size_t i = 0; i < ns.size(); ++i) CHECK(ns[i] == doctest::Approx(pc.dn_ref[i]).epsilon(1e-12));
        auto dn = patched_output(ctx, pc, Circuit::empty(model.graph()), Strategy::Dn);
        for (std::size_t i = 0; i < dn.size(); ++i) CHECK(dn[i] == doctest::Approx(pc.ns_ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("edge gradients match central finite differences") {
    const auto& model = trained_small();
    auto data = small_task(3, 5);
    auto ctx = build_context(model, data);
    const auto& g = model.graph();
    const auto& pc = ctx.pairs[0];
    LossSpec loss{LossSpec::Kind::LogitDiff, pc.pair->clean_label, pc.pair->corrupted_label};

    auto grads = model.edge_gradients_at(ns_plan(ctx, pc), Circuit::full(g), loss, GradSide::Decrease);

    auto loss_of = [&](const std::vector<std::vector<double>>& frozen, const Circuit& retained) {
        PatchPlan plan{&pc.pair->clean, &frozen, true};
        auto logits = model.patched_logits(plan, retained);
        return logits[pc.pair->clean_label] - logits[pc.pair->corrupted_label];
    };

    Rng rng(17);
    int checked = 0;
    for (int rep = 0; rep < 40; ++rep) {
        EdgeIndex e = static_cast<EdgeIndex>(rng.uniform_index(g.edge_count()));
        std::size_t dim = rng.uniform_index(pc.clean_edges[e].size());
        double scale = std::max(1.0, std::abs(pc.clean_edges[e][dim]));
        double h = 1e-4 * scale;

        // perturb edge e along one coordinate; every other edge stays live
        auto frozen = pc.clean_edges;
        auto retained = circuit_difference(Circuit::full(g), Circuit(g, {e}));
        frozen[e][dim] += h;
        double up = loss_of(frozen, retained);
        frozen[e][dim] -= 2 * h;
        double down = loss_of(frozen, retained);
        double fd = (up - down) / (2 * h);
        double an = grads.grads[e][dim];
        if (std::abs(fd) < 1e-8 && std::abs(an) < 1e-8) continue;
        CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-10}) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("dropout training is deterministic and still learns the task") {
    TransformerSpec spec = small_spec();
    spec.seed = 9;
    TaskConfig tc;
    tc.vocab = 20;
    tc.length = 12;
    tc.count = 1024;
    auto data = make_induction_task(tc, 13);
    TrainConfig cfg;
    cfg.steps = 1500;
    cfg.batch = 32;
    cfg.lr = 3e-3;
    cfg.accuracy_floor = 2.0;  // never early-stop: run the fixed budget
    cfg.head_dropout = 0.25;
    cfg.mlp_dropout = 0.25;
    cfg.seed = 4;
    TransformerModel a(spec), b(spec);
    auto ra = a.train(data, cfg);
    auto rb = b.train(data, cfg);
    CHECK(ra.accuracy == rb.accuracy);
    CHECK(ra.final_loss == rb.final_loss);
    CHECK(ra.accuracy > 0.8);  // redundant-path training still solves induction
}

TEST_CASE("model container round-trips") {
    TransformerModel model(small_spec());
    auto data = small_task(4);
    std::string path = "test_model_container.bin";
    model.save(path);
    auto loaded = TransformerModel::load(path);
    auto a = model.forward(data.pairs[0].clean);
    auto b = loaded->forward(data.pairs[0].clean);
    REQUIRE(a.logits.size() == b.logits.size());
    for (std::size_t i = 0; i < a.logits.size(); ++i) CHECK(a.logits[i] == b.logits[i]);
    std::remove(path.c_str());
}

TEST_CASE("dataset line format round-trips") {
    auto data = small_task(10, 9);
    std::string path = "test_dataset.txt";
    save_dataset(data, path);
    auto loaded = load_dataset(path);
    REQUIRE(loaded.pairs.size() == data.pairs.size());
    for (std::size_t i = 0; i < data.pairs.size(); ++i) {
        CHECK(loaded.pairs[i].clean.tokens == data.pairs[i].clean.tokens);
        CHECK(loaded.pairs[i].corrupted.tokens == data.pairs[i].corrupted.tokens);
        CHECK(loaded.pairs[i].clean_label == data.pairs[i].clean_label);
        CHECK(loaded.pairs[i].corrupted_label == data.pairs[i].corrupted_label);
    }
    std::remove(path.c_str());
}

TEST_CASE("induction task invariants") {
    auto data = small_task(64, 21);
    for (const auto& pair : data.pairs) {
        CHECK(pair.clean_label != pair.corrupted_label);
        CHECK(pair.clean.tokens.size() == 12);
        // final token appears earlier, immediately followed by the label
        int a = pair.clean.tokens.back();
        bool found = false;
        for (std::size_t t = 0; t + 2 < pair.clean.tokens.size(); ++t)
            if (pair.clean.tokens[t] == a && pair.clean.tokens[t + 1] == pair.clean_label) found = true;
        CHECK(found);
    }
    CHECK_THROWS_AS(make_copy_task(TaskConfig{1, 8, 4}, 0), std::invalid_argument);
}
