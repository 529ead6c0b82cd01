/* C API for the claps toolkit: opaque handles, integer status codes, and
 * caller-freed strings. Every function returns CLAPS_OK on success; on
 * CLAPS_ERROR the message is available through claps_last_error() until the
 * next call on the same thread. */
#ifndef CLAPS_CAPI_H
#define CLAPS_CAPI_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CLAPS_API __declspec(dllexport)
#else
#define CLAPS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

enum {
  CLAPS_OK = 0,
  /* the run completed but the certified bound stayed below the threshold */
  CLAPS_BELOW_THRESHOLD = 1,
  CLAPS_ERROR = 2
};

typedef struct claps_toolkit claps_toolkit;
typedef struct claps_run_result claps_run_result;

CLAPS_API const char* claps_version(void);

/* Thread-local message for the most recent failing call. */
CLAPS_API const char* claps_last_error(void);

/* Frees strings returned through char** out-parameters. */
CLAPS_API void claps_string_free(char* s);

CLAPS_API int claps_toolkit_load(const char* config_path, claps_toolkit** out);
CLAPS_API int claps_toolkit_from_string(const char* text, const char* name, claps_toolkit** out);
CLAPS_API void claps_toolkit_free(claps_toolkit* tk);

/* Resolve the toolkit's abstract graph (explicit [graph] or compiled [spec];
 * spec_override, when non-NULL, replaces the configured specification text)
 * and render it. */
CLAPS_API int claps_graph_dot(claps_toolkit* tk, const char* spec_override, char** out_dot);
CLAPS_API int claps_graph_summary(claps_toolkit* tk, const char* spec_override, char** out_text);

/* Reach-avoid probability lower bound 1 - gamma^N / lambda together with the
 * 1 - 1/lambda comparison value. N is floor((lambda-1)/(lip_v*max_step))
 * unless caption_steps > 0 supplies it directly. */
CLAPS_API int claps_bound(double lambda, double gamma, double lip_v, double max_step,
                          long long caption_steps, long long* out_steps, double* out_bound,
                          double* out_prior);

typedef struct claps_run_options {
  double threshold;            /* <= 0 keeps the config value */
  uint64_t seed;               /* 0 keeps the config value */
  const char* out_dir;         /* NULL keeps the config value; "" disables artifacts */
  const char* stub_edges_csv;  /* NULL trains; else "from,to,probability" stub rows */
  double timeout_seconds;      /* <= 0 keeps the config value */
  double mesh;                 /* <= 0 keeps the config value */
} claps_run_options;

/* End-to-end run (abstract graph, on-demand edge certification, composition).
 * Returns CLAPS_OK with *out set also when the threshold was missed; inspect
 * claps_run_success. Artifacts (manifest, summary CSV, trajectory plots and
 * dumps, edge store) land under the output directory when one is set. */
CLAPS_API int claps_run(claps_toolkit* tk, const claps_run_options* options,
                        claps_run_result** out);
CLAPS_API void claps_run_result_free(claps_run_result* r);
CLAPS_API int claps_run_success(const claps_run_result* r);
CLAPS_API double claps_run_bound(const claps_run_result* r);
/* Human-readable per-vertex probabilities, the chosen path and edge table. */
CLAPS_API int claps_run_report(const claps_run_result* r, char** out_text);
/* One line per edge: solved / skipped, with the pruning reason. */
CLAPS_API int claps_run_solver_log(const claps_run_result* r, char** out_text);

/* Monte Carlo check of a composed policy from a manifest: estimates the
 * probability that rollouts satisfy abstract reachability for the manifest's
 * graph, with an exact binomial interval at level 1-alpha, and compares the
 * manifest's certified bound against the interval's upper limit
 * (*out_pass = bound <= upper). config_path NULL uses the path recorded in
 * the manifest; csv_dir, when non-NULL, receives per-episode trajectory
 * dumps. */
CLAPS_API int claps_simulate_manifest(const char* manifest_path, const char* config_path,
                                      size_t episodes, size_t horizon, uint64_t seed, double alpha,
                                      const char* csv_dir, double* out_estimate,
                                      double* out_ci_lo, double* out_ci_hi, int* out_pass);

/* Same check for one solved edge's policy on its induced reach-avoid task. */
CLAPS_API int claps_simulate_edge(const char* manifest_path, const char* config_path,
                                  size_t edge_index, size_t episodes, size_t horizon,
                                  uint64_t seed, double alpha, const char* csv_dir,
                                  double* out_estimate, double* out_ci_lo, double* out_ci_hi,
                                  int* out_pass);

#ifdef __cplusplus
}
#endif

#endif /* CLAPS_CAPI_H */
