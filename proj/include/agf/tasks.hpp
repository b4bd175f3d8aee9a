#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace agf {

enum class TaskKind { copy, reverse, toy_translate };

const char* to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

// Token conventions: id 0 is the decoder start token, id 1 the reorder marker
// (toy_translate only); payload tokens live in [2, vocab-1].
struct TaskSpec {
    TaskKind kind = TaskKind::copy;
    int min_len = 4;
    int max_len = 16;
    int vocab = 32;
    int n_examples = 2048;
    uint64_t seed = 1;

    void validate() const;
};

struct Example {
    std::vector<int> src;
    std::vector<int> tgt;
};

using Dataset = std::vector<Example>;

Dataset generate_task(const TaskSpec& spec);

// The toy-translate mapping on a single source sequence: every payload token
// is substituted through a fixed bijection, and each marker swaps the two
// tokens that follow it.
std::vector<int> toy_translate_target(const std::vector<int>& src, int vocab);

// One pair per line, source and target tab-separated, tokens space-separated.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace agf
