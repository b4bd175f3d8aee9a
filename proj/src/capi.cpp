#include "agf.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "agf/error.hpp"
#include "agf/experiment.hpp"
#include "agf/poscoeff.hpp"
#include "agf/powerlaw.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (p) std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

agf_status fail(agf_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

// Maps the library exception hierarchy onto the status enum.
template <typename Fn>
agf_status guarded(Fn&& fn) {
    try {
        fn();
        return AGF_OK;
    } catch (const agf::ConfigError& e) {
        return fail(AGF_ERR_CONFIG, e.what());
    } catch (const agf::ShapeError& e) {
        return fail(AGF_ERR_CONFIG, e.what());
    } catch (const agf::DomainError& e) {
        return fail(AGF_ERR_DOMAIN, e.what());
    } catch (const agf::FitError& e) {
        return fail(AGF_ERR_FIT, e.what());
    } catch (const agf::IoError& e) {
        return fail(AGF_ERR_IO, e.what());
    } catch (const agf::TrainingError& e) {
        return fail(AGF_ERR_TRAINING, e.what());
    } catch (const agf::Error& e) {
        return fail(AGF_ERR_INTERNAL, e.what());
    } catch (const std::exception& e) {
        return fail(AGF_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(AGF_ERR_INTERNAL, "unknown error");
    }
}

}  // namespace

struct agf_experiment {
    agf::ExperimentConfig cfg;
    agf::ExperimentResult result;
    bool ran = false;
};

extern "C" {

const char* agf_version(void) { return agf::kVersion; }

const char* agf_last_error(void) { return g_last_error.c_str(); }

void agf_free(char* p) { std::free(p); }

agf_status agf_coeff_eval(double gamma, double rho, double k_exp, double distance,
                          double* out) {
    if (!out) return fail(AGF_ERR_INVALID_ARG, "out is NULL");
    return guarded([&] {
        agf::AgfHeadParams p;
        p.gamma[0] = p.gamma[1] = gamma;
        p.rho[0] = p.rho[1] = rho;
        p.k_exp = k_exp;
        *out = agf::agf_coeff(p, static_cast<long long>(distance));
    });
}

agf_status agf_kerple_coeff_eval(double c, double r1, double r2, double distance,
                                 double* out) {
    if (!out) return fail(AGF_ERR_INVALID_ARG, "out is NULL");
    return guarded([&] {
        agf::KerpleLogParams p{c, r1, r2};
        *out = agf::kerple_coeff_exp_form(p, static_cast<long long>(distance));
    });
}

agf_status agf_fit_duane(const double* t, const double* mtbf, size_t n, double* a,
                         double* m, double* rmse) {
    if (!t || !mtbf || !a || !m) return fail(AGF_ERR_INVALID_ARG, "NULL argument");
    return guarded([&] {
        agf::DuaneFit f = agf::fit_duane({t, n}, {mtbf, n});
        *a = f.a;
        *m = f.m;
        if (rmse) *rmse = f.rmse_loglog;
    });
}

agf_status agf_fit_asymptotic(const double* scores, size_t n, double* L, double* a,
                              double* m, double* rmse) {
    if (!scores || !L || !a || !m) return fail(AGF_ERR_INVALID_ARG, "NULL argument");
    return guarded([&] {
        agf::AsymptoticFit f = agf::fit_asymptotic_power({scores, n});
        *L = f.L;
        *a = f.a;
        *m = f.m;
        if (rmse) *rmse = f.rmse;
    });
}

agf_status agf_experiment_create(const char* config_json, agf_experiment** out) {
    if (!config_json || !out) return fail(AGF_ERR_INVALID_ARG, "NULL argument");
    *out = nullptr;
    return guarded([&] {
        auto* e = new agf_experiment;
        try {
            e->cfg = agf::ExperimentConfig::from_json_text(config_json);
        } catch (...) {
            delete e;
            throw;
        }
        *out = e;
    });
}

agf_status agf_experiment_create_from_file(const char* path, agf_experiment** out) {
    if (!path || !out) return fail(AGF_ERR_INVALID_ARG, "NULL argument");
    *out = nullptr;
    return guarded([&] {
        auto* e = new agf_experiment;
        try {
            e->cfg = agf::ExperimentConfig::from_json_file(path);
        } catch (...) {
            delete e;
            throw;
        }
        *out = e;
    });
}

agf_status agf_experiment_set_seed(agf_experiment* e, uint64_t seed) {
    if (!e) return fail(AGF_ERR_INVALID_ARG, "experiment is NULL");
    if (e->ran) return fail(AGF_ERR_CONFIG, "experiment already ran");
    e->cfg.seed = seed;
    return AGF_OK;
}

agf_status agf_experiment_run(agf_experiment* e, const char* out_dir) {
    if (!e || !out_dir) return fail(AGF_ERR_INVALID_ARG, "NULL argument");
    if (e->ran) return fail(AGF_ERR_CONFIG, "experiment already ran");
    return guarded([&] {
        e->result = agf::run_experiment(e->cfg, out_dir, agf::threads_from_env());
        e->ran = true;
    });
}

agf_status agf_experiment_final_accuracy(const agf_experiment* e, double* out) {
    if (!e || !out) return fail(AGF_ERR_INVALID_ARG, "NULL argument");
    if (!e->ran) return fail(AGF_ERR_CONFIG, "experiment has not run");
    *out = e->result.val_accuracy;
    return AGF_OK;
}

agf_status agf_experiment_positional_params(const agf_experiment* e, uint64_t* out) {
    if (!e || !out) return fail(AGF_ERR_INVALID_ARG, "NULL argument");
    return guarded([&] {
        if (e->ran) {
            *out = e->result.positional_params;
        } else {
            agf::ModelConfig mc = e->cfg.model;
            mc.seed = e->cfg.seed;
            *out = agf::Model(mc).total_positional_params();
        }
    });
}

void agf_experiment_destroy(agf_experiment* e) { delete e; }

agf_status agf_sweep_run(const char* sweep_json_path, const char* out_root,
                         char** table_out) {
    if (!sweep_json_path || !out_root) return fail(AGF_ERR_INVALID_ARG, "NULL argument");
    if (table_out) *table_out = nullptr;
    return guarded([&] {
        std::vector<agf::ExperimentResult> rows =
            agf::run_sweep_file(sweep_json_path, out_root, agf::threads_from_env());
        if (table_out) *table_out = dup_string(agf::results_table(rows));
    });
}

agf_status agf_gradcheck_run(int n_seeds, const char* out_csv, double* worst_rel_err,
                             int* all_passed) {
    return guarded([&] {
        agf::GradcheckMatrix mx =
            agf::run_gradcheck_matrix(n_seeds, out_csv ? out_csv : "");
        if (worst_rel_err) *worst_rel_err = mx.worst;
        if (all_passed) *all_passed = mx.all_passed ? 1 : 0;
    });
}

agf_status agf_fit_csv(const char* input_csv, const char* family, const char* out_json,
                       char** json_out) {
    if (!input_csv || !family) return fail(AGF_ERR_INVALID_ARG, "NULL argument");
    if (json_out) *json_out = nullptr;
    return guarded([&] {
        std::string rep =
            agf::fit_csv_report(input_csv, family, out_json ? out_json : "");
        if (json_out) *json_out = dup_string(rep);
    });
}

agf_status agf_pasl_probe(const char* corpus_path, const char* anchors, int max_d,
                          const char* out_dir, char** json_out) {
    if (!corpus_path || !anchors || !out_dir)
        return fail(AGF_ERR_INVALID_ARG, "NULL argument");
    if (json_out) *json_out = nullptr;
    return guarded([&] {
        std::vector<std::string> list;
        std::string cur;
        for (const char* p = anchors;; ++p) {
            if (*p == ',' || *p == '\0') {
                if (!cur.empty()) list.push_back(cur);
                cur.clear();
                if (*p == '\0') break;
            } else {
                cur += *p;
            }
        }
        std::string rep = agf::pasl_probe(corpus_path, list, max_d, out_dir);
        if (json_out) *json_out = dup_string(rep);
    });
}

}  // extern "C"
