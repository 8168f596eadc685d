#include "ccnl/ccnl.h"

#include <mutex>
#include <string>

#include "ccnl/checkpoint.hpp"
#include "ccnl/error.hpp"
#include "ccnl/eval.hpp"
#include "ccnl/pipeline.hpp"

struct ccnl_config {
    ccnl::RunConfig run;
    std::string json;
};

struct ccnl_model {
    ccnl::CcnlModel model;
};

namespace {

thread_local std::string last_error;

std::mutex log_mutex;
ccnl_log_fn log_fn = nullptr;
void* log_user = nullptr;

ccnl_status fail(ccnl_status status, const std::string& message) {
    last_error = message;
    return status;
}

template <typename F>
ccnl_status guarded(F&& body) {
    try {
        last_error.clear();
        body();
        return CCNL_OK;
    } catch (const ccnl::ChecksumError& e) {
        return fail(CCNL_CHECKSUM, e.what());
    } catch (const ccnl::DimensionError& e) {
        return fail(CCNL_DIMENSION, e.what());
    } catch (const ccnl::VocabularyError& e) {
        return fail(CCNL_VOCABULARY, e.what());
    } catch (const ccnl::ParseError& e) {
        return fail(CCNL_PARSE, e.what());
    } catch (const ccnl::ConfigError& e) {
        return fail(CCNL_CONFIG, e.what());
    } catch (const ccnl::PairingError& e) {
        return fail(CCNL_PAIRING, e.what());
    } catch (const ccnl::InputError& e) {
        return fail(CCNL_INPUT, e.what());
    } catch (const ccnl::IoError& e) {
        return fail(CCNL_IO, e.what());
    } catch (const std::exception& e) {
        return fail(CCNL_INTERNAL, e.what());
    } catch (...) {
        return fail(CCNL_INTERNAL, "unknown error");
    }
}

ccnl::RunConfig with_log(const ccnl_config* c) {
    ccnl::RunConfig run = c->run;
    run.log = [](ccnl::LogLevel level, const std::string& msg) {
        std::lock_guard lock(log_mutex);
        if (log_fn) log_fn(level == ccnl::LogLevel::warning ? CCNL_LOG_WARNING : CCNL_LOG_INFO, msg.c_str(), log_user);
    };
    return run;
}

}  // namespace

extern "C" {

const char* ccnl_version(void) { return "1.0.0"; }

const char* ccnl_last_error(void) { return last_error.c_str(); }

const char* ccnl_status_name(ccnl_status status) {
    switch (status) {
        case CCNL_OK: return "ok";
        case CCNL_INVALID_ARGUMENT: return "invalid argument";
        case CCNL_IO: return "i/o error";
        case CCNL_PARSE: return "parse error";
        case CCNL_DIMENSION: return "dimension error";
        case CCNL_VOCABULARY: return "vocabulary error";
        case CCNL_PAIRING: return "pairing error";
        case CCNL_CONFIG: return "configuration error";
        case CCNL_CHECKSUM: return "checksum error";
        case CCNL_INPUT: return "input error";
        case CCNL_INTERNAL: return "internal error";
    }
    return "unknown status";
}

void ccnl_set_log_callback(ccnl_log_fn fn, void* user) {
    std::lock_guard lock(log_mutex);
    log_fn = fn;
    log_user = user;
}

ccnl_status ccnl_config_create(ccnl_config** out) {
    if (!out) return fail(CCNL_INVALID_ARGUMENT, "ccnl_config_create: out is NULL");
    return guarded([&] { *out = new ccnl_config{}; });
}

void ccnl_config_destroy(ccnl_config* config) { delete config; }

ccnl_status ccnl_config_load_file(ccnl_config* config, const char* path) {
    if (!config || !path) return fail(CCNL_INVALID_ARGUMENT, "ccnl_config_load_file: NULL argument");
    return guarded([&] { ccnl::apply_config_file(config->run, path); });
}

ccnl_status ccnl_config_set(ccnl_config* config, const char* key, const char* value) {
    if (!config || !key || !value) return fail(CCNL_INVALID_ARGUMENT, "ccnl_config_set: NULL argument");
    return guarded([&] { ccnl::set_run_value(config->run, key, value); });
}

ccnl_status ccnl_config_model_json(ccnl_config* config, const char** json) {
    if (!config || !json) return fail(CCNL_INVALID_ARGUMENT, "ccnl_config_model_json: NULL argument");
    return guarded([&] {
        config->json = ccnl::config_to_json(config->run.model);
        *json = config->json.c_str();
    });
}

#define CCNL_RUN(name, call)                                                               \
    ccnl_status name(const ccnl_config* config) {                                          \
        if (!config) return fail(CCNL_INVALID_ARGUMENT, #name ": config is NULL");         \
        return guarded([&] { call(with_log(config)); });                                   \
    }

CCNL_RUN(ccnl_run_retrofit, ccnl::cmd_retrofit)
CCNL_RUN(ccnl_run_train, ccnl::cmd_train)
CCNL_RUN(ccnl_run_eval, ccnl::cmd_eval)
CCNL_RUN(ccnl_run_ablate, ccnl::cmd_ablate)
CCNL_RUN(ccnl_run_synth, ccnl::cmd_synth)

#undef CCNL_RUN

ccnl_status ccnl_model_load(const char* path, ccnl_model** out) {
    if (!path || !out) return fail(CCNL_INVALID_ARGUMENT, "ccnl_model_load: NULL argument");
    return guarded([&] { *out = new ccnl_model{ccnl::load_checkpoint(path)}; });
}

ccnl_status ccnl_model_save(const ccnl_model* model, const char* path) {
    if (!model || !path) return fail(CCNL_INVALID_ARGUMENT, "ccnl_model_save: NULL argument");
    return guarded([&] { ccnl::save_checkpoint(model->model, path); });
}

void ccnl_model_destroy(ccnl_model* model) { delete model; }

const char* ccnl_model_ablation(const ccnl_model* model) {
    if (!model) return "";
    return ccnl::ablation_tag(model->model.config().ablation).data();
}

ccnl_status ccnl_model_predict(const ccnl_model* model, const char* source_text, const char* target_text, int* label,
                               double probabilities[2]) {
    if (!model || !source_text || !target_text || !label) {
        return fail(CCNL_INVALID_ARGUMENT, "ccnl_model_predict: NULL argument");
    }
    return guarded([&] {
        ccnl::ParallelExample ex{ccnl::Example{"", source_text, 0}, target_text};
        const ccnl::Tensor p = model->model.forward(model->model.encode(ex));
        *label = ccnl::decide(p.values());
        if (probabilities) {
            probabilities[0] = p[0];
            probabilities[1] = p[1];
        }
    });
}

ccnl_status ccnl_macro_f1(const int* gold, const int* predicted, size_t n, double* out) {
    if ((!gold || !predicted) && n > 0) return fail(CCNL_INVALID_ARGUMENT, "ccnl_macro_f1: NULL labels");
    if (!out) return fail(CCNL_INVALID_ARGUMENT, "ccnl_macro_f1: out is NULL");
    return guarded([&] { *out = ccnl::macro_f1(std::span<const int>(gold, n), std::span<const int>(predicted, n)); });
}

}  // extern "C"
