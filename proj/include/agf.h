#ifndef AGF_H
#define AGF_H

/* C interface to the positional-attention lab. All functions return an
 * agf_status; on failure agf_last_error() carries a human-readable message
 * for the calling thread. Strings returned through char** out-parameters are
 * heap-allocated and must be released with agf_free(). */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum agf_status {
    AGF_OK = 0,
    AGF_ERR_INVALID_ARG = 1,
    AGF_ERR_CONFIG = 2,
    AGF_ERR_DOMAIN = 3,
    AGF_ERR_FIT = 4,
    AGF_ERR_IO = 5,
    AGF_ERR_TRAINING = 6,
    AGF_ERR_INTERNAL = 7
} agf_status;

const char* agf_version(void);
const char* agf_last_error(void);
void agf_free(char* p);

/* Field coefficient F(d) = exp(gamma) * (1 + d/exp(rho))^(-k_exp), with the
 * sign of d selecting the forward/backward parameter pair collapsed here to
 * a single pair. */
agf_status agf_coeff_eval(double gamma, double rho, double k_exp, double distance,
                          double* out);
/* Composite log kernel exp(c - r1*log(1 + r2*d)), d >= 0. */
agf_status agf_kerple_coeff_eval(double c, double r1, double r2, double distance,
                                 double* out);

/* ln(mtbf) = -ln(a) + m ln(t). */
agf_status agf_fit_duane(const double* t, const double* mtbf, size_t n, double* a,
                         double* m, double* rmse);
/* score(t) = L - a * t^(-m) over t = 1..n. */
agf_status agf_fit_asymptotic(const double* scores, size_t n, double* L, double* a,
                              double* m, double* rmse);

/* Experiment handle: parse once, run once. */
typedef struct agf_experiment agf_experiment;

agf_status agf_experiment_create(const char* config_json, agf_experiment** out);
agf_status agf_experiment_create_from_file(const char* path, agf_experiment** out);
agf_status agf_experiment_set_seed(agf_experiment* e, uint64_t seed);
/* Trains and writes trace.csv, checkpoint.json, results.csv under out_dir.
 * Thread count comes from AGF_THREADS (default 1). */
agf_status agf_experiment_run(agf_experiment* e, const char* out_dir);
agf_status agf_experiment_final_accuracy(const agf_experiment* e, double* out);
agf_status agf_experiment_positional_params(const agf_experiment* e, uint64_t* out);
void agf_experiment_destroy(agf_experiment* e);

/* Sweep file {"experiments":[...]}; one directory per label under out_root.
 * table_out (optional) receives a printable results table. */
agf_status agf_sweep_run(const char* sweep_json_path, const char* out_root,
                         char** table_out);

/* Randomized finite-difference checks over every legal attention-option
 * combination. Writes a CSV when out_csv is non-NULL. all_passed is 1 when
 * every case stays below the pinned 1e-4 relative-error bound. */
agf_status agf_gradcheck_run(int n_seeds, const char* out_csv, double* worst_rel_err,
                             int* all_passed);

/* family: "duane" | "asymptotic" | "compare". Writes the JSON report to
 * out_json when non-NULL; json_out (optional) receives the same text. */
agf_status agf_fit_csv(const char* input_csv, const char* family, const char* out_json,
                       char** json_out);

/* anchors: comma-separated token list. Writes pasl_density.csv and
 * pasl_verdict.json under out_dir; json_out (optional) receives the verdict. */
agf_status agf_pasl_probe(const char* corpus_path, const char* anchors, int max_d,
                          const char* out_dir, char** json_out);

#ifdef __cplusplus
}
#endif

#endif /* AGF_H */
