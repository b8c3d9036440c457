#ifndef SAMKIT_SAMKIT_H
#define SAMKIT_SAMKIT_H

/* C interface of the samkit shared library.
 *
 * Every call returns a samkit_status. On failure the message of the most
 * recent error on the calling thread is available from samkit_last_error(). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(SAMKIT_BUILDING)
#define SAMKIT_API __declspec(dllexport)
#else
#define SAMKIT_API __declspec(dllimport)
#endif
#else
#define SAMKIT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum samkit_status {
  SAMKIT_OK = 0,
  SAMKIT_ERR_INVALID_ARGUMENT = 1,
  SAMKIT_ERR_DOMAIN = 2,
  SAMKIT_ERR_PARSE = 3,
  SAMKIT_ERR_IO = 4,
  SAMKIT_ERR_NUMERIC = 5,
  SAMKIT_ERR_CONFIG = 6,
  SAMKIT_ERR_PARTIAL = 7, /* some artifacts were written before the failure */
  SAMKIT_ERR_INTERNAL = 99
} samkit_status;

typedef enum samkit_market { SAMKIT_MARKET_UNIFORM = 0, SAMKIT_MARKET_LONG_TAIL = 1 } samkit_market;

typedef enum samkit_bid_kind {
  SAMKIT_BID_CONST = 0,
  SAMKIT_BID_TRUTH = 1,
  SAMKIT_BID_LIN = 2,
  SAMKIT_BID_ORTB = 3,
  SAMKIT_BID_SAM1 = 4,
  SAMKIT_BID_SAM2 = 5
} samkit_bid_kind;

typedef struct samkit_experiment samkit_experiment;

SAMKIT_API const char* samkit_version(void);
SAMKIT_API const char* samkit_last_error(void);
SAMKIT_API const char* samkit_status_string(samkit_status status);

/* Experiments. */
SAMKIT_API samkit_status samkit_experiment_load(const char* config_path, samkit_experiment** out);
SAMKIT_API samkit_status samkit_experiment_load_text(const char* config_text, samkit_experiment** out);
/* Overrides a config field (e.g. "seed", "output.dir", "data.cpm") before running. */
SAMKIT_API samkit_status samkit_experiment_set(samkit_experiment* exp, const char* key, const char* value);
/* verb: run, sweep, dynamic, frontier, gen or validate. */
SAMKIT_API samkit_status samkit_experiment_execute(samkit_experiment* exp, const char* verb);
/* Summary message of the last execute (validation report or error text). */
SAMKIT_API const char* samkit_experiment_message(const samkit_experiment* exp);
SAMKIT_API size_t samkit_experiment_artifact_count(const samkit_experiment* exp);
SAMKIT_API const char* samkit_experiment_artifact(const samkit_experiment* exp, size_t index);
SAMKIT_API void samkit_experiment_free(samkit_experiment* exp);

/* Model primitives. */
SAMKIT_API samkit_status samkit_win_prob(samkit_market market, double scale, double bid, double* out);
/* params: CONST {price}; LIN {base_bid, avg_cvr}; ORTB {c, lambda}; SAM1 {lambda}; SAM2 {lambda, scale}. */
SAMKIT_API samkit_status samkit_bid(samkit_bid_kind kind, const double* params, size_t n_params, double theta,
                                    double payoff, double* out);
SAMKIT_API samkit_status samkit_sam1_lambda(double payoff, double volume, double budget, double scale, double phi,
                                            double* out);
SAMKIT_API samkit_status samkit_fit_long_tail(const double* prices, size_t n, double* out);

/* Data. */
SAMKIT_API samkit_status samkit_validate_log(const char* path, int cpm, size_t* valid, size_t* rejected);

#ifdef __cplusplus
}
#endif

#endif
