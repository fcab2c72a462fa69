// Command-line front end. Everything goes through the public C interface in
// tcdiv/tcdiv.h; no internal headers are used here.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <tcdiv/tcdiv.h>

namespace {

struct Options {
    std::string config_path;
    std::string variant;
    std::string method;
    std::string out_dir;
    std::string mnist_dir;
    std::optional<int64_t> n_models;
    std::optional<int64_t> epochs;
    std::optional<int64_t> workers;
    std::optional<uint64_t> seed;
    std::vector<std::string> sets;
    bool overwrite = false;
};

void add_common_options(CLI::App& cmd, Options& o, bool seed_selects_one) {
    cmd.add_option("--config", o.config_path, "key=value configuration file")
        ->check(CLI::ExistingFile);
    cmd.add_option("--variant", o.variant, "cmnist | rcmnist | tcmnist");
    cmd.add_option("--method", o.method, "conditional_tc | unconditional_tc | erm");
    cmd.add_option("--n-models", o.n_models, "models trained jointly");
    cmd.add_option("--epochs", o.epochs, "training epochs");
    cmd.add_option("--out", o.out_dir, "run directory for artifacts");
    cmd.add_option("--workers", o.workers, "parallel seed workers");
    cmd.add_option("--mnist-dir", o.mnist_dir,
                   "directory with the IDX files (default: $TCDIV_MNIST_DIR)");
    cmd.add_option("--seed", o.seed,
                   seed_selects_one ? "seed to process (default 0)"
                                    : "restrict the configured seed list to this one seed");
    cmd.add_option("--set", o.sets, "extra KEY=VALUE override; repeatable");
    cmd.add_flag("--overwrite", o.overwrite, "replace existing artifacts");
}

// Builds the library configuration in precedence order: file, flags, --set.
tcdiv_config* build_config(const Options& o, bool seed_selects_one) {
    tcdiv_config* cfg = nullptr;
    tcdiv_status st = o.config_path.empty() ? tcdiv_config_create(&cfg)
                                            : tcdiv_config_load(o.config_path.c_str(), &cfg);
    if (st != TCDIV_OK) return nullptr;

    auto set = [&](const char* key, const std::string& value) {
        if (st == TCDIV_OK) st = tcdiv_config_set(cfg, key, value.c_str());
    };
    if (!o.variant.empty()) set("variant", o.variant);
    if (!o.method.empty()) set("method", o.method);
    if (o.n_models) set("n_models", std::to_string(*o.n_models));
    if (o.epochs) set("epochs", std::to_string(*o.epochs));
    if (!o.out_dir.empty()) set("output_dir", o.out_dir);
    if (!o.mnist_dir.empty()) set("mnist_dir", o.mnist_dir);
    if (o.workers) set("workers", std::to_string(*o.workers));
    if (o.overwrite) set("overwrite", "true");
    if (o.seed && !seed_selects_one) set("seeds", std::to_string(*o.seed));
    for (const std::string& kv : o.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "error: --set expects KEY=VALUE, got '%s'\n", kv.c_str());
            tcdiv_config_destroy(cfg);
            return nullptr;
        }
        set(kv.substr(0, eq).c_str(), kv.substr(eq + 1));
    }
    if (st != TCDIV_OK) {
        std::fprintf(stderr, "error (%s): %s\n", tcdiv_status_string(st), tcdiv_last_error());
        tcdiv_config_destroy(cfg);
        return nullptr;
    }
    return cfg;
}

int finish(tcdiv_status st, tcdiv_results* results) {
    if (results) {
        const char* csv = nullptr;
        if (tcdiv_results_csv(results, &csv) == TCDIV_OK) std::fputs(csv, stdout);
    }
    if (st != TCDIV_OK)
        std::fprintf(stderr, "error (%s): %s\n", tcdiv_status_string(st), tcdiv_last_error());
    tcdiv_results_destroy(results);
    if (st == TCDIV_OK) return 0;
    return st == TCDIV_PARTIAL_FAILURE ? 2 : 1;
}

int run_verb(const std::string& verb, const Options& o, bool seed_selects_one) {
    tcdiv_config* cfg = build_config(o, seed_selects_one);
    if (!cfg) {
        if (tcdiv_last_error()[0])
            std::fprintf(stderr, "error: %s\n", tcdiv_last_error());
        return 1;
    }
    tcdiv_results* results = nullptr;
    tcdiv_status st = TCDIV_OK;
    if (verb == "generate") {
        st = tcdiv_generate(cfg);
        if (st == TCDIV_OK) std::puts("datasets generated");
    } else if (verb == "run") {
        st = tcdiv_run(cfg, &results);
    } else if (verb == "train") {
        st = tcdiv_train(cfg, o.seed.value_or(0), &results);
    } else if (verb == "evaluate") {
        st = tcdiv_evaluate(cfg, o.seed.value_or(0), &results);
    } else if (verb == "report") {
        st = tcdiv_report(cfg, &results);
    }
    tcdiv_config_destroy(cfg);
    return finish(st, results);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tcdiv: classifier collections with diverse predictive signals"};
    app.set_version_flag("--version", tcdiv_version());
    app.require_subcommand(1);

    struct Verb {
        const char* name;
        const char* help;
        bool seed_selects_one;
        Options opts;
        CLI::App* cmd = nullptr;
    };
    Verb verbs[] = {
        {"generate", "generate and cache the datasets for every seed", false, {}, nullptr},
        {"train", "train one seed and store its artifacts", true, {}, nullptr},
        {"evaluate", "re-score one trained seed's checkpoint", true, {}, nullptr},
        {"run", "full pipeline: generate, train, evaluate, aggregate", false, {}, nullptr},
        {"report", "aggregate existing per-seed artifacts", false, {}, nullptr},
    };
    for (Verb& v : verbs) {
        v.cmd = app.add_subcommand(v.name, v.help);
        add_common_options(*v.cmd, v.opts, v.seed_selects_one);
    }

    CLI11_PARSE(app, argc, argv);

    for (const Verb& v : verbs)
        if (v.cmd->parsed()) return run_verb(v.name, v.opts, v.seed_selects_one);
    return 1;  // unreachable: a subcommand is required
}
