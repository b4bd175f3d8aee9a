// Batch front door: experiments, gradient checks, curve fits, corpus probes.
// Exit codes: 0 success, 2 input/config error, 3 runtime or numerical failure.

#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "agf.h"

namespace {

int exit_code_for(agf_status s) {
    switch (s) {
        case AGF_OK: return 0;
        case AGF_ERR_TRAINING:
        case AGF_ERR_INTERNAL: return 3;
        default: return 2;
    }
}

int report_failure(agf_status s) {
    std::fprintf(stderr, "error: %s\n", agf_last_error());
    return exit_code_for(s);
}

int cmd_train(const std::string& config, const std::string& out, uint64_t seed,
              bool has_seed) {
    agf_experiment* e = nullptr;
    agf_status s = agf_experiment_create_from_file(config.c_str(), &e);
    if (s != AGF_OK) return report_failure(s);
    if (has_seed) {
        s = agf_experiment_set_seed(e, seed);
        if (s != AGF_OK) {
            agf_experiment_destroy(e);
            return report_failure(s);
        }
    }
    s = agf_experiment_run(e, out.c_str());
    if (s != AGF_OK) {
        agf_experiment_destroy(e);
        return report_failure(s);
    }
    double acc = 0.0;
    uint64_t pos = 0;
    agf_experiment_final_accuracy(e, &acc);
    agf_experiment_positional_params(e, &pos);
    std::printf("val_accuracy=%.4f positional_params=%llu out=%s\n", acc,
                static_cast<unsigned long long>(pos), out.c_str());
    agf_experiment_destroy(e);
    return 0;
}

int cmd_sweep(const std::string& config, const std::string& out) {
    char* table = nullptr;
    agf_status s = agf_sweep_run(config.c_str(), out.c_str(), &table);
    if (s != AGF_OK) return report_failure(s);
    if (table) {
        std::fputs(table, stdout);
        agf_free(table);
    }
    std::printf("results: %s/results.csv\n", out.c_str());
    return 0;
}

int cmd_gradcheck(int seeds, const std::string& out) {
    double worst = 0.0;
    int all_passed = 0;
    agf_status s = agf_gradcheck_run(seeds, out.empty() ? nullptr : out.c_str(), &worst,
                                     &all_passed);
    if (s != AGF_OK) return report_failure(s);
    std::printf("gradcheck combos x %d seeds: worst_rel_err=%.3e %s\n", seeds, worst,
                all_passed ? "PASS" : "FAIL");
    return all_passed ? 0 : 3;
}

int cmd_fit(const std::string& input, const std::string& mode, const std::string& out) {
    char* json = nullptr;
    agf_status s = agf_fit_csv(input.c_str(), mode.c_str(),
                               out.empty() ? nullptr : out.c_str(), &json);
    if (s != AGF_OK) return report_failure(s);
    if (json) {
        std::fputs(json, stdout);
        agf_free(json);
    }
    return 0;
}

int cmd_pasl(const std::string& corpus, const std::string& anchors, int max_d,
             const std::string& out) {
    char* json = nullptr;
    agf_status s = agf_pasl_probe(corpus.c_str(), anchors.c_str(), max_d, out.c_str(),
                                  &json);
    if (s != AGF_OK) return report_failure(s);
    if (json) {
        std::fputs(json, stdout);
        agf_free(json);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("agf-lab ") + agf_version() +
                 ": positional attention experiments"};
    app.require_subcommand(1);

    std::string train_cfg, train_out = "agf-out/train";
    uint64_t seed = 0;
    std::string sweep_cfg, sweep_out = "agf-out/sweep";
    int seeds = 10;
    std::string grad_out;
    std::string fit_in, fit_mode, fit_out;
    std::string pasl_corpus, pasl_anchors, pasl_out = "agf-out/pasl";
    int max_d = 128;

    CLI::App* train = app.add_subcommand("train", "run one experiment from a config");
    train->add_option("--config", train_cfg, "experiment config JSON")->required();
    CLI::Option* seed_opt = train->add_option("--seed", seed, "override the config seed");
    train->add_option("--out", train_out, "output directory");

    CLI::App* sweep = app.add_subcommand("sweep", "run a labelled set of experiments");
    sweep->add_option("--config", sweep_cfg, "sweep config JSON")->required();
    sweep->add_option("--out", sweep_out, "output root");

    CLI::App* grad = app.add_subcommand("gradcheck",
                                        "finite-difference checks over attention options");
    grad->add_option("--seed", seeds, "randomized instances per combination");
    grad->add_option("--out", grad_out, "report CSV path");

    CLI::App* fit = app.add_subcommand("fit", "fit a decay/growth law to CSV data");
    fit->add_option("input,--config", fit_in, "numeric CSV (y column, or x,y)")->required();
    fit->add_option("--mode", fit_mode, "duane | asymptotic | compare")->required();
    fit->add_option("--out", fit_out, "write the JSON report here");

    CLI::App* pasl = app.add_subcommand("pasl", "offset density probe over a corpus");
    pasl->add_option("corpus,--config", pasl_corpus, "text corpus, one document per line")
        ->required();
    pasl->add_option("--anchors", pasl_anchors, "comma-separated anchor tokens")
        ->required();
    pasl->add_option("--max-d", max_d, "largest offset");
    pasl->add_option("--out", pasl_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    if (train->parsed()) return cmd_train(train_cfg, train_out, seed, seed_opt->count() > 0);
    if (sweep->parsed()) return cmd_sweep(sweep_cfg, sweep_out);
    if (grad->parsed()) return cmd_gradcheck(seeds, grad_out);
    if (fit->parsed()) return cmd_fit(fit_in, fit_mode, fit_out);
    if (pasl->parsed()) return cmd_pasl(pasl_corpus, pasl_anchors, max_d, pasl_out);
    return 2;
}
