#ifndef CCNL_CCNL_H
#define CCNL_CCNL_H

#include <stddef.h>

#if defined(CCNL_BUILDING_LIBRARY)
#define CCNL_API __attribute__((visibility("default")))
#else
#define CCNL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ccnl_status {
    CCNL_OK = 0,
    CCNL_INVALID_ARGUMENT = 1,
    CCNL_IO = 2,
    CCNL_PARSE = 3,
    CCNL_DIMENSION = 4,
    CCNL_VOCABULARY = 5,
    CCNL_PAIRING = 6,
    CCNL_CONFIG = 7,
    CCNL_CHECKSUM = 8,
    CCNL_INPUT = 9,
    CCNL_INTERNAL = 10
} ccnl_status;

typedef enum ccnl_log_level { CCNL_LOG_INFO = 0, CCNL_LOG_WARNING = 1 } ccnl_log_level;

typedef struct ccnl_config ccnl_config;
typedef struct ccnl_model ccnl_model;

typedef void (*ccnl_log_fn)(ccnl_log_level level, const char* message, void* user);

CCNL_API const char* ccnl_version(void);
/* Message for the last failure on this thread; never NULL. */
CCNL_API const char* ccnl_last_error(void);
CCNL_API const char* ccnl_status_name(ccnl_status status);

/* Process-wide log sink for command progress; NULL restores silence. */
CCNL_API void ccnl_set_log_callback(ccnl_log_fn fn, void* user);

CCNL_API ccnl_status ccnl_config_create(ccnl_config** out);
CCNL_API void ccnl_config_destroy(ccnl_config* config);
/* JSON object of key -> value; later calls override earlier ones. */
CCNL_API ccnl_status ccnl_config_load_file(ccnl_config* config, const char* path);
CCNL_API ccnl_status ccnl_config_set(ccnl_config* config, const char* key, const char* value);
/* Model hyperparameters as JSON. The string lives until the next call on this config. */
CCNL_API ccnl_status ccnl_config_model_json(ccnl_config* config, const char** json);

CCNL_API ccnl_status ccnl_run_retrofit(const ccnl_config* config);
CCNL_API ccnl_status ccnl_run_train(const ccnl_config* config);
CCNL_API ccnl_status ccnl_run_eval(const ccnl_config* config);
CCNL_API ccnl_status ccnl_run_ablate(const ccnl_config* config);
CCNL_API ccnl_status ccnl_run_synth(const ccnl_config* config);

CCNL_API ccnl_status ccnl_model_load(const char* path, ccnl_model** out);
CCNL_API ccnl_status ccnl_model_save(const ccnl_model* model, const char* path);
CCNL_API void ccnl_model_destroy(ccnl_model* model);
/* Ablation tag of the stored architecture, e.g. "full". */
CCNL_API const char* ccnl_model_ablation(const ccnl_model* model);
CCNL_API ccnl_status ccnl_model_predict(const ccnl_model* model, const char* source_text, const char* target_text,
                                        int* label, double probabilities[2]);

CCNL_API ccnl_status ccnl_macro_f1(const int* gold, const int* predicted, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif
