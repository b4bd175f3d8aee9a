#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agf/attention.hpp"
#include "agf/model.hpp"
#include "agf/tasks.hpp"
#include "agf/trainer.hpp"

namespace agf {

inline constexpr const char* kVersion = "0.1.0";

uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64(const std::string& s);
std::string hex64(uint64_t v);

// Top-level run description. JSON schema is strict: unknown keys anywhere
// are rejected, known keys fall back to these defaults when absent.
struct ExperimentConfig {
    std::string label = "run";
    uint64_t seed = 1;
    ModelConfig model;
    TaskKind task_kind = TaskKind::copy;
    int min_len = 4;
    int max_len = 16;
    int train_examples = 2048;
    int val_examples = 256;
    TrainOptions train;

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_json_file(const std::string& path);

    std::string canonical_json() const;  // fixed field order, used for hashing
    uint64_t config_hash() const;
    void validate() const;
};

struct ExperimentResult {
    std::string label;
    double val_accuracy = 0.0;
    size_t positional_params = 0;
    double wall_seconds = 0.0;
    TrainingTrace trace;
};

// Trains per the config and writes <out_dir>/trace.csv, checkpoint.json and
// a results.csv row. Everything except the wall-time column is byte-stable
// for a fixed config, seed and thread count.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                int threads);

// {"experiments": [...]}; one sub-directory per label under out_root and a
// combined results.csv. Labels must be unique.
std::vector<ExperimentResult> run_sweep(const std::string& sweep_json_text,
                                        const std::string& out_root, int threads);
std::vector<ExperimentResult> run_sweep_file(const std::string& path,
                                             const std::string& out_root, int threads);

std::string results_table(const std::vector<ExperimentResult>& rows);

// Reads AGF_THREADS; anything unparseable or < 1 means serial.
int threads_from_env();

// ---------------------------------------------------------------------------
// Randomized finite-difference sweep over every legal attention option
// combination (small instances, double precision).
struct GradcheckCase {
    AttentionOptions opts;
    std::string combo;
    uint64_t seed = 0;
    int len = 0;
    int d_k = 0;
    double max_rel_err = 0.0;
};

struct GradcheckMatrix {
    std::vector<GradcheckCase> cases;
    double worst = 0.0;
    double tolerance = 1e-4;
    bool all_passed = true;
};

std::vector<AttentionOptions> all_valid_attention_combos();
std::string combo_label(const AttentionOptions& o);

// n_seeds randomized instances per combo; writes a CSV when out_csv is
// non-empty.
GradcheckMatrix run_gradcheck_matrix(int n_seeds, const std::string& out_csv);

// ---------------------------------------------------------------------------
// Curve-fit front end: input is a numeric CSV (one y column, or x,y pairs;
// '#' comments ignored). family is duane | asymptotic | compare. Returns a
// JSON report embedding the input hash; optionally writes it to out_json.
std::string fit_csv_report(const std::string& input_csv_path, const std::string& family,
                           const std::string& out_json);

// Offset density probe over a corpus: writes <out_dir>/pasl_density.csv
// (max_d rows) plus <out_dir>/pasl_verdict.json and returns the JSON text.
std::string pasl_probe(const std::string& corpus_path,
                       const std::vector<std::string>& anchors, int max_d,
                       const std::string& out_dir);

}  // namespace agf
