#ifndef PRECEDENT_RX_H
#define PRECEDENT_RX_H

/* C interface to the prescribing-support engine. Strings crossing the
   boundary are UTF-8 JSON unless stated otherwise; strings returned through
   `char**` out-parameters are owned by the caller and released with
   prx_string_free. */

#include <stddef.h>

#if defined(_WIN32)
#define PRX_API __declspec(dllexport)
#else
#define PRX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum prx_status {
  PRX_OK = 0,
  PRX_E_INVALID_ARGUMENT = 1,
  PRX_E_SCHEMA = 2,
  PRX_E_VALIDATION = 3,
  PRX_E_MALFORMED_CODE = 4,
  PRX_E_TIMESTAMP = 5,
  PRX_E_IO = 6,
  PRX_E_FORMAT_VERSION = 7,
  PRX_E_DIMENSION = 8,
  PRX_E_DUPLICATE_ID = 9,
  PRX_E_EMPTY_CASE = 10,
  PRX_E_EMBED_SERVICE = 11,
  PRX_E_BUDGET_TOO_SMALL = 12,
  PRX_E_GENERATOR_SERVICE = 13,
  PRX_E_GENERATOR_PARSE = 14,
  PRX_E_EMPTY_PRECEDENT = 15,
  PRX_E_MIXED_TASKS = 16,
  PRX_E_SINGLE_CLASS = 17,
  PRX_E_MISSING_RETRIEVAL = 18,
  PRX_E_NOT_FOUND = 19,
  PRX_E_INTERNAL = 20
} prx_status;

typedef struct prx_service prx_service;
typedef struct prx_server prx_server;

PRX_API const char* prx_version(void);
PRX_API const char* prx_status_name(prx_status status);

/* Message of the last failure on the calling thread; empty after success. */
PRX_API const char* prx_last_error(void);
/* Field path of the last failure, when one applies. */
PRX_API const char* prx_last_error_path(void);

PRX_API void prx_string_free(char* s);

/* Service configuration JSON as documented in docs/api.md. A NULL or empty
   config uses defaults. PRECEDENT_RX_* environment overrides apply when
   apply_env is non-zero. */
PRX_API prx_status prx_service_open(const char* config_json, int apply_env, prx_service** out);
PRX_API void prx_service_close(prx_service* service);

/* Endpoint dispatch shared with the HTTP server. `endpoint` is one of
   "recommend", "case", "reindex", "evaluate", "health"; for "case" the body
   is the case id. The response JSON and HTTP status are always set when the
   call returns PRX_OK, including for 4xx/5xx responses. */
PRX_API prx_status prx_service_call(prx_service* service, const char* endpoint, const char* body,
                                    int* http_status, char** response_json);

PRX_API prx_status prx_server_start(prx_service* service, const char* host, int port,
                                    prx_server** out, int* bound_port);
PRX_API void prx_server_stop(prx_server* server);

/* Runs the ingest pipeline over a raw JSONL corpus and writes the
   preprocessed corpus. The ingest report is returned even when lines
   failed; the call fails with PRX_E_VALIDATION in that case. */
PRX_API prx_status prx_ingest(const char* config_json, const char* corpus_path,
                              const char* out_path, char** report_json);

/* Ingests a corpus and writes a binary index. */
PRX_API prx_status prx_index_build(const char* config_json, const char* corpus_path,
                                   const char* index_path, char** summary_json);

/* Synthetic corpus generation. spec_json keys: n, seed, noise,
   rule_set_id, uninsured_fraction, label_priors. oracle_path may be NULL. */
PRX_API prx_status prx_synth(const char* spec_json, const char* out_path, const char* oracle_path,
                             char** summary_json);

/* Held-out evaluation over a corpus; writes performance.csv, ccr.csv,
   retrieval.csv and report.json into out_dir. request_json takes the same
   keys as the evaluate endpoint. */
PRX_API prx_status prx_evaluate(const char* config_json, const char* request_json,
                                const char* out_dir, char** result_json);

#ifdef __cplusplus
}
#endif

#endif
