#include "tcdiv/tcdiv.h"

#include <cstring>
#include <exception>
#include <string>
#include <utility>

#include "exp/experiment.hpp"
#include "util/error.hpp"
#include "util/version.hpp"

struct tcdiv_config {
    tcdiv::exp::ExperimentConfig cfg;
};

struct tcdiv_results {
    tcdiv::exp::RunArtifacts run;
    std::string csv;
};

namespace {

thread_local std::string t_last_error;

tcdiv_status fail(tcdiv_status status, std::string message) {
    t_last_error = std::move(message);
    return status;
}

// Runs a callable, translating exceptions into status codes.
template <typename F>
tcdiv_status guarded(F&& f) noexcept {
    try {
        return f();
    } catch (const tcdiv::InvalidArgument& e) {
        return fail(TCDIV_INVALID_ARGUMENT, e.what());
    } catch (const tcdiv::ShapeError& e) {
        return fail(TCDIV_INVALID_ARGUMENT, e.what());
    } catch (const tcdiv::IoError& e) {
        return fail(TCDIV_IO_ERROR, e.what());
    } catch (const tcdiv::FormatError& e) {
        return fail(TCDIV_FORMAT_ERROR, e.what());
    } catch (const tcdiv::NumericError& e) {
        return fail(TCDIV_NUMERIC_ERROR, e.what());
    } catch (const std::exception& e) {
        return fail(TCDIV_INTERNAL_ERROR, e.what());
    } catch (...) {
        return fail(TCDIV_INTERNAL_ERROR, "unknown internal error");
    }
}

tcdiv_status finish_run(tcdiv::exp::RunArtifacts run, tcdiv_results** out_results) {
    auto* results = new tcdiv_results{std::move(run), {}};
    results->csv = tcdiv::exp::results_to_csv(results->run.table);
    *out_results = results;
    if (results->run.any_failed) {
        std::string detail;
        for (const tcdiv::exp::SeedReport& r : results->run.seeds)
            if (!r.ok) {
                if (!detail.empty()) detail += "; ";
                detail += "seed " + std::to_string(r.seed) + ": " + r.error;
            }
        return fail(TCDIV_PARTIAL_FAILURE, detail);
    }
    return TCDIV_OK;
}

}  // namespace

extern "C" {

const char* tcdiv_version(void) { return tcdiv::kVersion; }

const char* tcdiv_status_string(tcdiv_status status) {
    switch (status) {
        case TCDIV_OK: return "ok";
        case TCDIV_INVALID_ARGUMENT: return "invalid argument";
        case TCDIV_IO_ERROR: return "io error";
        case TCDIV_FORMAT_ERROR: return "format error";
        case TCDIV_NUMERIC_ERROR: return "numeric error";
        case TCDIV_PARTIAL_FAILURE: return "partial failure";
        case TCDIV_INTERNAL_ERROR: return "internal error";
    }
    return "unknown status";
}

const char* tcdiv_last_error(void) { return t_last_error.c_str(); }

tcdiv_status tcdiv_config_create(tcdiv_config** out_config) {
    if (!out_config) return fail(TCDIV_INVALID_ARGUMENT, "out_config is NULL");
    *out_config = nullptr;
    return guarded([&] {
        *out_config = new tcdiv_config{tcdiv::exp::default_config()};
        return TCDIV_OK;
    });
}

tcdiv_status tcdiv_config_load(const char* path, tcdiv_config** out_config) {
    if (!out_config) return fail(TCDIV_INVALID_ARGUMENT, "out_config is NULL");
    *out_config = nullptr;
    if (!path) return fail(TCDIV_INVALID_ARGUMENT, "path is NULL");
    return guarded([&] {
        *out_config = new tcdiv_config{tcdiv::exp::load_config(std::filesystem::path(path), {})};
        return TCDIV_OK;
    });
}

tcdiv_status tcdiv_config_set(tcdiv_config* config, const char* key, const char* value) {
    if (!config) return fail(TCDIV_INVALID_ARGUMENT, "config is NULL");
    if (!key) return fail(TCDIV_INVALID_ARGUMENT, "key is NULL");
    if (!value) return fail(TCDIV_INVALID_ARGUMENT, "value is NULL");
    return guarded([&] {
        tcdiv::exp::apply_override(config->cfg, key, value);
        return TCDIV_OK;
    });
}

void tcdiv_config_destroy(tcdiv_config* config) { delete config; }

tcdiv_status tcdiv_generate(const tcdiv_config* config) {
    if (!config) return fail(TCDIV_INVALID_ARGUMENT, "config is NULL");
    return guarded([&] {
        tcdiv::exp::generate_all_datasets(config->cfg);
        return TCDIV_OK;
    });
}

tcdiv_status tcdiv_run(const tcdiv_config* config, tcdiv_results** out_results) {
    if (!out_results) return fail(TCDIV_INVALID_ARGUMENT, "out_results is NULL");
    *out_results = nullptr;
    if (!config) return fail(TCDIV_INVALID_ARGUMENT, "config is NULL");
    return guarded(
        [&] { return finish_run(tcdiv::exp::run_experiment(config->cfg), out_results); });
}

tcdiv_status tcdiv_train(const tcdiv_config* config, uint64_t seed,
                         tcdiv_results** out_results) {
    if (!out_results) return fail(TCDIV_INVALID_ARGUMENT, "out_results is NULL");
    *out_results = nullptr;
    if (!config) return fail(TCDIV_INVALID_ARGUMENT, "config is NULL");
    return guarded(
        [&] { return finish_run(tcdiv::exp::train_one_seed(config->cfg, seed), out_results); });
}

tcdiv_status tcdiv_evaluate(const tcdiv_config* config, uint64_t seed,
                            tcdiv_results** out_results) {
    if (!out_results) return fail(TCDIV_INVALID_ARGUMENT, "out_results is NULL");
    *out_results = nullptr;
    if (!config) return fail(TCDIV_INVALID_ARGUMENT, "config is NULL");
    return guarded([&] {
        return finish_run(tcdiv::exp::evaluate_one_seed(config->cfg, seed), out_results);
    });
}

tcdiv_status tcdiv_report(const tcdiv_config* config, tcdiv_results** out_results) {
    if (!out_results) return fail(TCDIV_INVALID_ARGUMENT, "out_results is NULL");
    *out_results = nullptr;
    if (!config) return fail(TCDIV_INVALID_ARGUMENT, "config is NULL");
    return guarded(
        [&] { return finish_run(tcdiv::exp::report_from_artifacts(config->cfg), out_results); });
}

tcdiv_status tcdiv_results_csv(const tcdiv_results* results, const char** out_csv) {
    if (!out_csv) return fail(TCDIV_INVALID_ARGUMENT, "out_csv is NULL");
    *out_csv = nullptr;
    if (!results) return fail(TCDIV_INVALID_ARGUMENT, "results is NULL");
    *out_csv = results->csv.c_str();
    return TCDIV_OK;
}

tcdiv_status tcdiv_results_row_count(const tcdiv_results* results, size_t* out_count) {
    if (!out_count) return fail(TCDIV_INVALID_ARGUMENT, "out_count is NULL");
    *out_count = 0;
    if (!results) return fail(TCDIV_INVALID_ARGUMENT, "results is NULL");
    *out_count = results->run.table.rows.size();
    return TCDIV_OK;
}

tcdiv_status tcdiv_results_row(const tcdiv_results* results, size_t index,
                               const char** out_method, const char** out_protocol,
                               const char** out_condition, double* out_mean, double* out_sd,
                               int32_t* out_n_seeds) {
    if (!results) return fail(TCDIV_INVALID_ARGUMENT, "results is NULL");
    if (index >= results->run.table.rows.size())
        return fail(TCDIV_INVALID_ARGUMENT,
                    "row " + std::to_string(index) + " out of range; table has " +
                        std::to_string(results->run.table.rows.size()) + " rows");
    const tcdiv::exp::ResultRow& row = results->run.table.rows[index];
    if (out_method) *out_method = row.method.c_str();
    if (out_protocol) *out_protocol = row.protocol.c_str();
    if (out_condition) *out_condition = row.condition.c_str();
    if (out_mean) *out_mean = row.mean;
    if (out_sd) *out_sd = row.sd;
    if (out_n_seeds) *out_n_seeds = row.n_seeds;
    return TCDIV_OK;
}

int tcdiv_results_any_failed(const tcdiv_results* results) {
    return !results || results->run.any_failed ? 1 : 0;
}

void tcdiv_results_destroy(tcdiv_results* results) { delete results; }

}  // extern "C"
