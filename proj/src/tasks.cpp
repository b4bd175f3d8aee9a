#include "agf/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "agf/error.hpp"
#include "agf/rng.hpp"

namespace agf {

const char* to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::copy: return "copy";
        case TaskKind::reverse: return "reverse";
        case TaskKind::toy_translate: return "toy_translate";
    }
    return "?";
}

TaskKind parse_task_kind(const std::string& name) {
    if (name == "copy") return TaskKind::copy;
    if (name == "reverse") return TaskKind::reverse;
    if (name == "toy_translate") return TaskKind::toy_translate;
    throw ConfigError("unknown task kind: '" + name + "'");
}

void TaskSpec::validate() const {
    if (vocab < 4) throw ConfigError("task vocab must be at least 4");
    if (min_len < 1 || max_len < min_len) throw ConfigError("bad task length range");
    if (n_examples < 1) throw ConfigError("task needs at least one example");
}

static int substitute(int t, int vocab) {
    if (t < 2) return t;
    const int payload = vocab - 2;
    return 2 + (t - 2 + payload / 2 + 1) % payload;
}

std::vector<int> toy_translate_target(const std::vector<int>& src, int vocab) {
    std::vector<int> tgt(src.size());
    for (size_t i = 0; i < src.size(); ++i) tgt[i] = substitute(src[i], vocab);
    for (size_t i = 0; i + 2 < src.size(); ++i) {
        if (src[i] != 1) continue;
        if (src[i + 1] == 1 || src[i + 2] == 1) continue;
        std::swap(tgt[i + 1], tgt[i + 2]);
        i += 2;
    }
    return tgt;
}

Dataset generate_task(const TaskSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Dataset ds;
    ds.reserve(spec.n_examples);
    for (int e = 0; e < spec.n_examples; ++e) {
        const int len = rng.uniform_int(spec.min_len, spec.max_len);
        Example ex;
        ex.src.reserve(len);
        if (spec.kind == TaskKind::toy_translate) {
            while (static_cast<int>(ex.src.size()) < len) {
                int room = len - static_cast<int>(ex.src.size());
                if (room >= 3 && rng.uniform() < 0.25) {
                    ex.src.push_back(1);
                    ex.src.push_back(rng.uniform_int(2, spec.vocab - 1));
                    ex.src.push_back(rng.uniform_int(2, spec.vocab - 1));
                } else {
                    ex.src.push_back(rng.uniform_int(2, spec.vocab - 1));
                }
            }
            ex.tgt = toy_translate_target(ex.src, spec.vocab);
        } else {
            for (int i = 0; i < len; ++i) ex.src.push_back(rng.uniform_int(2, spec.vocab - 1));
            ex.tgt = ex.src;
            if (spec.kind == TaskKind::reverse)
                std::reverse(ex.tgt.begin(), ex.tgt.end());
        }
        ds.push_back(std::move(ex));
    }
    return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset: " + path);
    for (const Example& ex : ds) {
        for (size_t i = 0; i < ex.src.size(); ++i) out << (i ? " " : "") << ex.src[i];
        out << '\t';
        for (size_t i = 0; i < ex.tgt.size(); ++i) out << (i ? " " : "") << ex.tgt[i];
        out << '\n';
    }
    if (!out) throw IoError("failed writing dataset: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset: " + path);
    Dataset ds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        size_t tab = line.find('\t');
        if (tab == std::string::npos) throw IoError("dataset line missing tab separator");
        Example ex;
        std::istringstream s(line.substr(0, tab)), t(line.substr(tab + 1));
        int tok;
        while (s >> tok) ex.src.push_back(tok);
        while (t >> tok) ex.tgt.push_back(tok);
        if (ex.src.empty() || ex.tgt.empty()) throw IoError("dataset line with empty sequence");
        ds.push_back(std::move(ex));
    }
    if (ds.empty()) throw IoError("dataset file is empty: " + path);
    return ds;
}

}  // namespace agf
