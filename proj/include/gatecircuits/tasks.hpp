// Synthetic token tasks and dataset (de)serialization.

#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gatecircuits/model.hpp"
#include "gatecircuits/rng.hpp"

namespace gatecircuits {

enum class TaskKind { Induction, Copy, GateTruthTable };

inline TaskKind task_kind_from_string(const std::string& s) {
    if (s == "induction") return TaskKind::Induction;
    if (s == "copy") return TaskKind::Copy;
    if (s == "gate-truth-table") return TaskKind::GateTruthTable;
    throw std::invalid_argument("unknown task kind: " + s);
}

struct TaskConfig {
    int vocab = 20;
    int length = 12;
    int count = 256;
};

// Induction: sequences "... A B ... A" labeled B. The corrupted input swaps B
// for a random distinct token, which also swaps the label (interchange pairs).
inline TaskDataset make_induction_task(const TaskConfig& cfg, std::uint64_t seed) {
    if (cfg.vocab < 3) throw std::invalid_argument("induction: vocab too small to produce distinct corrupted labels");
    if (cfg.length < 4) throw std::invalid_argument("induction: length must be at least 4");
    Rng rng(derive_seed(seed, 0, "task-induction"));
    TaskDataset ds;
    ds.pairs.reserve(cfg.count);
    for (int n = 0; n < cfg.count; ++n) {
        int a = static_cast<int>(rng.uniform_index(cfg.vocab));
        int b;
        do {
            b = static_cast<int>(rng.uniform_index(cfg.vocab));
        } while (b == a);
        int b2;
        do {
            b2 = static_cast<int>(rng.uniform_index(cfg.vocab));
        } while (b2 == a || b2 == b);

        std::vector<int> toks(cfg.length);
        for (int t = 0; t < cfg.length; ++t) {
            int r;
            do {
                r = static_cast<int>(rng.uniform_index(cfg.vocab));
            } while (r == a);  // A must appear exactly at the pattern and final slots
            toks[t] = r;
        }
        int p = static_cast<int>(rng.uniform_index(cfg.length - 3));  // A at p, B at p+1
        toks[p] = a;
        toks[p + 1] = b;
        toks[cfg.length - 1] = a;

        TaskPair pair;
        pair.clean.tokens = toks;
        pair.corrupted.tokens = toks;
        pair.corrupted.tokens[p + 1] = b2;
        pair.clean_label = b;
        pair.corrupted_label = b2;
        ds.pairs.push_back(std::move(pair));
    }
    return ds;
}

// Copy: the label is the first token; the corrupted input swaps it.
inline TaskDataset make_copy_task(const TaskConfig& cfg, std::uint64_t seed) {
    if (cfg.vocab < 2) throw std::invalid_argument("copy: vocab too small to produce distinct corrupted labels");
    if (cfg.length < 2) throw std::invalid_argument("copy: length must be at least 2");
    Rng rng(derive_seed(seed, 0, "task-copy"));
    TaskDataset ds;
    ds.pairs.reserve(cfg.count);
    for (int n = 0; n < cfg.count; ++n) {
        std::vector<int> toks(cfg.length);
        for (int t = 0; t < cfg.length; ++t) toks[t] = static_cast<int>(rng.uniform_index(cfg.vocab));
        int swapped;
        do {
            swapped = static_cast<int>(rng.uniform_index(cfg.vocab));
        } while (swapped == toks[0]);
        TaskPair pair;
        pair.clean.tokens = toks;
        pair.corrupted.tokens = toks;
        pair.corrupted.tokens[0] = swapped;
        pair.clean_label = toks[0];
        pair.corrupted_label = swapped;
        ds.pairs.push_back(std::move(pair));
    }
    return ds;
}

// Line-delimited records: clean tokens TAB corrupted tokens TAB labels.
inline void save_dataset(const TaskDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    auto write_ints = [&](const std::vector<int>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
    };
    for (const auto& pair : ds.pairs) {
        write_ints(pair.clean.tokens);
        out << '\t';
        write_ints(pair.corrupted.tokens);
        out << '\t' << pair.clean_label << ' ' << pair.corrupted_label << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline TaskDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    TaskDataset ds;
    std::string line;
    auto parse_ints = [](const std::string& s) {
        std::vector<int> v;
        std::istringstream is(s);
        int x;
        while (is >> x) v.push_back(x);
        return v;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto t1 = line.find('\t');
        auto t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw std::runtime_error("bad dataset record: " + line);
        TaskPair pair;
        pair.clean.tokens = parse_ints(line.substr(0, t1));
        pair.corrupted.tokens = parse_ints(line.substr(t1 + 1, t2 - t1 - 1));
        auto labels = parse_ints(line.substr(t2 + 1));
        if (labels.size() != 2) throw std::runtime_error("bad dataset labels: " + line);
        pair.clean_label = labels[0];
        pair.corrupted_label = labels[1];
        if (pair.clean_label == pair.corrupted_label)
            throw std::runtime_error("dataset invariant violated: identical labels");
        ds.pairs.push_back(std::move(pair));
    }
    return ds;
}

}  // namespace gatecircuits
