#include "exp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "eval/protocols.hpp"
#include "util/error.hpp"
#include "util/hash.hpp"
#include "util/version.hpp"

namespace tcdiv::exp {
namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        double v = std::stod(value, &used);
        if (used == value.size()) return v;
    } catch (const std::exception&) {
    }
    throw InvalidArgument("config: " + key + " expects a number, got '" + value + "'");
}

int64_t parse_integer(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        int64_t v = std::stoll(value, &used);
        if (used == value.size()) return v;
    } catch (const std::exception&) {
    }
    throw InvalidArgument("config: " + key + " expects an integer, got '" + value + "'");
}

bool parse_flag(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw InvalidArgument("config: " + key + " expects true/false, got '" + value + "'");
}

std::vector<uint64_t> parse_seeds(const std::string& value) {
    std::vector<uint64_t> seeds;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        int64_t v = parse_integer("seeds", item);
        if (v < 0) throw InvalidArgument("config: seeds must be >= 0, got " + item);
        seeds.push_back(static_cast<uint64_t>(v));
    }
    if (seeds.empty()) throw InvalidArgument("config: seeds expects a comma-separated list");
    return seeds;
}

data::ColoredDataset make_train_split(const data::RawDigits& raw,
                                      const data::GeneratorConfig& gcfg, data::Variant variant) {
    switch (variant) {
        case data::Variant::CMnist: return data::make_cmnist_train(raw, gcfg);
        case data::Variant::RCMnist: return data::make_rcmnist_train(raw, gcfg);
        case data::Variant::TCMnist: return data::make_tcmnist_train(raw, gcfg);
    }
    throw InvalidArgument("unknown variant");
}

// Load one cached split or build it through `make` and cache it.
template <typename Make>
data::ColoredDataset cached_split(const std::optional<std::filesystem::path>& cache_dir,
                                  data::Variant variant, data::Role role,
                                  const data::GeneratorConfig& gcfg, Make make) {
    if (!cache_dir) return make();
    std::filesystem::path file =
        *cache_dir /
        data::dataset_cache_name(variant, role, gcfg.shift, data::generator_config_hash(gcfg));
    if (std::filesystem::exists(file)) return data::load_dataset(file);
    data::ColoredDataset ds = make();
    std::filesystem::create_directories(*cache_dir);
    data::save_dataset(file, ds);
    return ds;
}

data::ShiftedTestset cached_testset(const std::optional<std::filesystem::path>& cache_dir,
                                    const data::RawDigits& raw, const data::GeneratorConfig& gcfg,
                                    data::Variant variant) {
    // The three roles come from one generator call, so they are cached and
    // reloaded as a unit.
    data::ShiftedTestset out;
    std::optional<data::ShiftedTestset> built;
    auto one = [&](data::Role role, data::ColoredDataset data::ShiftedTestset::*member) {
        return cached_split(cache_dir, variant, role, gcfg, [&]() {
            if (!built) built = data::make_shifted_testset(raw, gcfg, variant);
            return std::move((*built).*member);
        });
    };
    out.adapt_train = one(data::Role::AdaptTrain, &data::ShiftedTestset::adapt_train);
    out.adapt_val = one(data::Role::AdaptVal, &data::ShiftedTestset::adapt_val);
    out.adapt_test = one(data::Role::AdaptTest, &data::ShiftedTestset::adapt_test);
    return out;
}

void append_protocols(std::vector<SeedEntry>& entries, const nets::ModelCollection& collection,
                      const data::ShiftedTestset& ts, const std::string& condition) {
    eval::FrozenOutputs tr = eval::compute_frozen_outputs(collection, ts.adapt_train);
    eval::FrozenOutputs va = eval::compute_frozen_outputs(collection, ts.adapt_val);
    eval::FrozenOutputs te = eval::compute_frozen_outputs(collection, ts.adapt_test);
    entries.push_back({"best", condition, eval::protocol_best(tr, va, te), 0.0});
    double l2 = 0.0;
    double acc = eval::protocol_ensemble(tr, va, te, eval::kDefaultL2Grid, &l2);
    entries.push_back({"ensemble", condition, acc, l2});
    acc = eval::protocol_linear(tr, va, te, eval::kDefaultL2Grid, &l2);
    entries.push_back({"linear", condition, acc, l2});
}

void check_not_emitted(const ExperimentConfig& cfg) {
    if (cfg.overwrite) return;
    for (const char* name : {"results.csv", "manifest.json"}) {
        std::filesystem::path p = cfg.output_dir / name;
        if (std::filesystem::exists(p))
            throw IoError(p.string() + " already exists; set overwrite to replace the run");
    }
}

json config_json(const ExperimentConfig& cfg) {
    json j;
    j["variant"] = data::variant_name(cfg.variant);
    j["method"] = method_name(cfg.method);
    j["seeds"] = cfg.seeds;
    j["n_models"] = cfg.train.n_models;
    j["beta"] = cfg.train.beta;
    j["batch_size"] = cfg.train.batch_size;
    j["m_negatives"] = cfg.train.m_negatives;
    j["epochs"] = cfg.train.epochs;
    j["critic_ratio"] = cfg.train.critic_ratio;
    j["lr"] = cfg.train.lr;
    j["conditional"] = cfg.train.conditional;
    j["label_flip_prob"] = cfg.generator.label_flip_prob;
    j["colour_flip_probs_per_env"] = cfg.generator.colour_flip_probs_per_env;
    j["colour2_flip_prob"] = cfg.generator.colour2_flip_prob;
    j["rotation_flip_prob"] = cfg.generator.rotation_flip_prob;
    j["mnist_dir"] = cfg.mnist_dir.string();
    j["output_dir"] = cfg.output_dir.string();
    j["workers"] = cfg.workers;
    return j;
}

}  // namespace

const char* method_name(Method m) {
    switch (m) {
        case Method::ConditionalTc: return "conditional_tc";
        case Method::UnconditionalTc: return "unconditional_tc";
        case Method::Erm: return "erm";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    if (name == "conditional_tc") return Method::ConditionalTc;
    if (name == "unconditional_tc") return Method::UnconditionalTc;
    if (name == "erm") return Method::Erm;
    throw InvalidArgument("unknown method '" + name +
                          "', want conditional_tc|unconditional_tc|erm");
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "variant") {
        cfg.variant = data::variant_from_name(value);
        bool tc = cfg.variant == data::Variant::TCMnist;
        cfg.train.epochs = tc ? 500 : 250;
        cfg.train.critic_ratio = tc ? 5 : 1;
    } else if (key == "method") {
        cfg.method = method_from_name(value);
    } else if (key == "seeds") {
        cfg.seeds = parse_seeds(value);
    } else if (key == "n_models") {
        cfg.train.n_models = static_cast<int>(parse_integer(key, value));
    } else if (key == "beta") {
        cfg.train.beta = parse_real(key, value);
    } else if (key == "batch_size") {
        cfg.train.batch_size = parse_integer(key, value);
    } else if (key == "m_negatives") {
        cfg.train.m_negatives = static_cast<int>(parse_integer(key, value));
    } else if (key == "epochs") {
        cfg.train.epochs = static_cast<int>(parse_integer(key, value));
    } else if (key == "critic_ratio") {
        cfg.train.critic_ratio = static_cast<int>(parse_integer(key, value));
    } else if (key == "lr") {
        cfg.train.lr = parse_real(key, value);
    } else if (key == "label_flip_prob") {
        cfg.generator.label_flip_prob = parse_real(key, value);
    } else if (key == "colour_flip_prob_env0") {
        cfg.generator.colour_flip_probs_per_env.at(0) = parse_real(key, value);
    } else if (key == "colour_flip_prob_env1") {
        cfg.generator.colour_flip_probs_per_env.at(1) = parse_real(key, value);
    } else if (key == "colour2_flip_prob") {
        cfg.generator.colour2_flip_prob = parse_real(key, value);
    } else if (key == "rotation_flip_prob") {
        cfg.generator.rotation_flip_prob = parse_real(key, value);
    } else if (key == "mnist_dir") {
        cfg.mnist_dir = value;
    } else if (key == "output_dir") {
        cfg.output_dir = value;
    } else if (key == "overwrite") {
        cfg.overwrite = parse_flag(key, value);
    } else if (key == "workers") {
        cfg.workers = static_cast<int>(parse_integer(key, value));
    } else {
        throw InvalidArgument("config: unknown key '" + key + "'");
    }
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             std::span<const std::string> overrides) {
    ExperimentConfig cfg = default_config();
    if (file) {
        std::ifstream in(*file);
        if (!in) throw IoError("cannot open config file " + file->string());
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            line = trim(line);
            if (line.empty() || line[0] == '#') continue;
            size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw FormatError(file->string() + ":" + std::to_string(line_no) +
                                  ": expected key=value, got '" + line + "'");
            apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }
    for (const std::string& o : overrides) {
        size_t eq = o.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument("override '" + o + "' is not key=value");
        apply_override(cfg, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
    normalize_config(cfg);
    return cfg;
}

void normalize_config(ExperimentConfig& cfg) {
    if (cfg.seeds.empty()) throw InvalidArgument("config: seeds must be nonempty");
    if (cfg.workers < 1) throw InvalidArgument("config: workers must be >= 1");
    if (cfg.method == Method::Erm) {
        cfg.train.n_models = 1;
        cfg.train.beta = 0.0;
        cfg.train.conditional = true;
    } else {
        cfg.train.conditional = cfg.method == Method::ConditionalTc;
    }
    if (cfg.mnist_dir.empty())
        if (const char* env = std::getenv("TCDIV_MNIST_DIR")) cfg.mnist_dir = env;
    train::check_config(cfg.train);
}

uint64_t experiment_config_hash(const ExperimentConfig& cfg) {
    uint64_t h = fnv1a("experiment-config-v1");
    h = fnv1a(data::variant_name(cfg.variant), h);
    h = fnv1a(method_name(cfg.method), h);
    for (uint64_t s : cfg.seeds) h = fnv1a_bytes(&s, sizeof(s), h);
    train::TrainConfig t = cfg.train;
    t.rng_seed = 0;
    uint64_t th = train::train_config_hash(t);
    h = fnv1a_bytes(&th, sizeof(th), h);
    data::GeneratorConfig g = cfg.generator;
    g.rng_seed = 0;
    g.shift = data::Shift::None;
    uint64_t gh = data::generator_config_hash(g);
    h = fnv1a_bytes(&gh, sizeof(gh), h);
    return h;
}

SeedDatasets generate_datasets(const ExperimentConfig& cfg, uint64_t seed,
                               const data::RawDigits& train_raw,
                               const data::RawDigits& test_raw,
                               const std::optional<std::filesystem::path>& cache_dir) {
    data::GeneratorConfig gcfg = cfg.generator;
    gcfg.rng_seed = seed;

    SeedDatasets out;
    gcfg.shift = data::Shift::None;
    out.train = cached_split(cache_dir, cfg.variant, data::Role::Train, gcfg,
                             [&] { return make_train_split(train_raw, gcfg, cfg.variant); });

    gcfg.shift = data::Shift::DigitOnly;
    out.digit_only = cached_testset(cache_dir, test_raw, gcfg, cfg.variant);

    if (cfg.variant == data::Variant::TCMnist) {
        gcfg.shift = data::Shift::Colour2Only;
        out.colour2_only = cached_testset(cache_dir, test_raw, gcfg, cfg.variant);
    }
    return out;
}

SeedReport run_seed(const ExperimentConfig& cfg, uint64_t seed,
                    const data::RawDigits& train_raw, const data::RawDigits& test_raw,
                    const std::optional<std::filesystem::path>& artifacts_dir,
                    const std::optional<std::filesystem::path>& cache_dir) {
    SeedReport r;
    r.seed = seed;
    auto t0 = std::chrono::steady_clock::now();
    try {
        SeedDatasets ds = generate_datasets(cfg, seed, train_raw, test_raw, cache_dir);
        train::TrainConfig tc = cfg.train;
        tc.rng_seed = seed;
        train::TrainState state =
            cfg.method == Method::Erm
                ? train::train_erm_baseline(ds.train, ds.digit_only.adapt_train,
                                            ds.digit_only.adapt_val, tc)
                : train::train_collection(ds.train, ds.digit_only.adapt_train,
                                          ds.digit_only.adapt_val, tc);
        r.best_epoch = state.best.epoch;
        r.best_val_accuracy = state.best.val_accuracy;
        append_protocols(r.entries, state.best.collection, ds.digit_only, "digit_only");
        if (ds.colour2_only)
            append_protocols(r.entries, state.best.collection, *ds.colour2_only, "colour2_only");
        r.ok = true;
        r.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (artifacts_dir) {
            std::filesystem::create_directories(*artifacts_dir);
            nets::save_checkpoint(*artifacts_dir / "checkpoint.bin", state.best);
            train::write_metrics_jsonl(*artifacts_dir / "metrics.jsonl", state.metrics);
            std::ofstream out(*artifacts_dir / "report.json", std::ios::trunc);
            out << seed_report_to_json(r) << '\n';
            if (!out) throw IoError("failed writing " + (*artifacts_dir / "report.json").string());
        }
    } catch (const std::exception& e) {
        r.ok = false;
        r.entries.clear();
        r.error = e.what();
        r.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return r;
}

SeedReport evaluate_seed(const ExperimentConfig& cfg, uint64_t seed,
                         const data::RawDigits& train_raw, const data::RawDigits& test_raw,
                         const std::filesystem::path& artifacts_dir,
                         const std::optional<std::filesystem::path>& cache_dir) {
    SeedReport r;
    r.seed = seed;
    auto t0 = std::chrono::steady_clock::now();
    try {
        nets::Checkpoint ckpt = nets::load_checkpoint(artifacts_dir / "checkpoint.bin");
        if (ckpt.collection.n() != cfg.train.n_models)
            throw InvalidArgument("checkpoint holds " + std::to_string(ckpt.collection.n()) +
                                  " models but the configuration expects " +
                                  std::to_string(cfg.train.n_models));
        SeedDatasets ds = generate_datasets(cfg, seed, train_raw, test_raw, cache_dir);
        if (ckpt.collection.input_dim() != ds.train.input_dim())
            throw InvalidArgument("checkpoint input width " +
                                  std::to_string(ckpt.collection.input_dim()) +
                                  " does not match dataset width " +
                                  std::to_string(ds.train.input_dim()));
        r.best_epoch = ckpt.epoch;
        r.best_val_accuracy = ckpt.val_accuracy;
        append_protocols(r.entries, ckpt.collection, ds.digit_only, "digit_only");
        if (ds.colour2_only)
            append_protocols(r.entries, ckpt.collection, *ds.colour2_only, "colour2_only");
        r.ok = true;
        r.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ofstream out(artifacts_dir / "report.json", std::ios::trunc);
        out << seed_report_to_json(r) << '\n';
        if (!out) throw IoError("failed writing " + (artifacts_dir / "report.json").string());
    } catch (const std::exception& e) {
        r.ok = false;
        r.entries.clear();
        r.error = e.what();
        r.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return r;
}

std::string seed_report_to_json(const SeedReport& r) {
    // Deliberately excludes wall-clock duration: a re-run with the same
    // configuration and seed must produce a byte-identical report. Durations
    // are recorded in the run manifest instead.
    json j;
    j["seed"] = r.seed;
    j["ok"] = r.ok;
    j["error"] = r.error;
    j["best_epoch"] = r.best_epoch;
    j["best_val_accuracy"] = r.best_val_accuracy;
    j["entries"] = json::array();
    for (const SeedEntry& e : r.entries)
        j["entries"].push_back({{"protocol", e.protocol},
                                {"condition", e.condition},
                                {"accuracy", e.accuracy},
                                {"chosen_l2", e.chosen_l2}});
    return j.dump();
}

SeedReport read_seed_report(const std::filesystem::path& json_file) {
    std::ifstream in(json_file);
    if (!in) throw IoError("cannot open seed report " + json_file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(json_file.string() + ": " + e.what());
    }
    SeedReport r;
    try {
        r.seed = j.at("seed").get<uint64_t>();
        r.ok = j.at("ok").get<bool>();
        r.error = j.at("error").get<std::string>();
        r.best_epoch = j.at("best_epoch").get<int>();
        r.best_val_accuracy = j.at("best_val_accuracy").get<double>();
        for (const json& e : j.at("entries"))
            r.entries.push_back({e.at("protocol").get<std::string>(),
                                 e.at("condition").get<std::string>(),
                                 e.at("accuracy").get<double>(),
                                 e.at("chosen_l2").get<double>()});
    } catch (const json::exception& e) {
        throw FormatError(json_file.string() + ": " + e.what());
    }
    return r;
}

ResultsTable aggregate_runs(std::span<const SeedReport> reports, const std::string& method,
                            int n_models) {
    if (reports.empty()) throw InvalidArgument("aggregate_runs: no reports");
    std::vector<std::string> conditions;
    for (const SeedReport& r : reports)
        for (const SeedEntry& e : r.entries)
            if (std::find(conditions.begin(), conditions.end(), e.condition) == conditions.end())
                conditions.push_back(e.condition);

    ResultsTable table;
    for (const std::string& condition : conditions) {
        for (const char* protocol : {"best", "ensemble", "linear"}) {
            std::vector<double> values;
            for (const SeedReport& r : reports) {
                if (!r.ok) continue;
                for (const SeedEntry& e : r.entries)
                    if (e.protocol == protocol && e.condition == condition)
                        values.push_back(e.accuracy);
            }
            if (values.empty()) continue;
            double mean = 0.0;
            for (double v : values) mean += v;
            mean /= static_cast<double>(values.size());
            double var = 0.0;
            for (double v : values) var += (v - mean) * (v - mean);
            var /= static_cast<double>(values.size());
            table.rows.push_back({method, n_models, protocol, condition, 100.0 * mean,
                                  100.0 * std::sqrt(var), static_cast<int>(values.size())});
        }
    }
    for (const SeedReport& r : reports)
        if (!r.ok)
            table.rows.push_back(
                {method, n_models, "failed", "seed " + std::to_string(r.seed), 0.0, 0.0, 0});
    return table;
}

std::string results_to_csv(const ResultsTable& t) {
    std::ostringstream out;
    out << "method,n_models,protocol,condition,mean,sd,n_seeds\n";
    char buf[64];
    for (const ResultRow& r : t.rows) {
        std::snprintf(buf, sizeof(buf), "%.4f,%.4f", r.mean, r.sd);
        out << r.method << ',' << r.n_models << ',' << r.protocol << ',' << r.condition << ','
            << buf << ',' << r.n_seeds << '\n';
    }
    return out.str();
}

void emit_reports(const RunArtifacts& run, const ExperimentConfig& cfg) {
    check_not_emitted(cfg);
    std::filesystem::create_directories(cfg.output_dir);

    std::ofstream csv(cfg.output_dir / "results.csv", std::ios::trunc);
    csv << results_to_csv(run.table);
    if (!csv) throw IoError("failed writing " + (cfg.output_dir / "results.csv").string());
    csv.close();

    json manifest;
    manifest["version"] = kVersion;
    manifest["config"] = config_json(cfg);
    manifest["config_hash"] = hex64(experiment_config_hash(cfg));
    json hashes = json::object();
    for (uint64_t seed : cfg.seeds) {
        data::GeneratorConfig g = cfg.generator;
        g.rng_seed = seed;
        json per;
        g.shift = data::Shift::None;
        per["train"] = hex64(data::generator_config_hash(g));
        g.shift = data::Shift::DigitOnly;
        per["digit_only"] = hex64(data::generator_config_hash(g));
        if (cfg.variant == data::Variant::TCMnist) {
            g.shift = data::Shift::Colour2Only;
            per["colour2_only"] = hex64(data::generator_config_hash(g));
        }
        hashes[std::to_string(seed)] = per;
    }
    manifest["dataset_hashes"] = hashes;
    manifest["seeds"] = json::array();
    for (const SeedReport& r : run.seeds)
        manifest["seeds"].push_back({{"seed", r.seed},
                                     {"ok", r.ok},
                                     {"error", r.error},
                                     {"best_epoch", r.best_epoch},
                                     {"duration_seconds", r.duration_seconds}});

    std::ofstream mf(cfg.output_dir / "manifest.json", std::ios::trunc);
    mf << manifest.dump(2) << '\n';
    if (!mf) throw IoError("failed writing " + (cfg.output_dir / "manifest.json").string());
}

std::filesystem::path resolve_mnist_file(const std::filesystem::path& dir,
                                         const std::string& stem) {
    for (const std::string& name : {stem, stem + ".gz"}) {
        std::filesystem::path p = dir / name;
        if (std::filesystem::exists(p)) return p;
    }
    throw IoError("missing MNIST file: " + (dir / stem).string() + " (or .gz)");
}

namespace {

struct RawPair {
    data::RawDigits train, test;
};

RawPair load_mnist(const ExperimentConfig& cfg) {
    if (cfg.mnist_dir.empty())
        throw InvalidArgument(
            "no MNIST directory configured; set mnist_dir or TCDIV_MNIST_DIR");
    const std::filesystem::path train_images =
        resolve_mnist_file(cfg.mnist_dir, "train-images-idx3-ubyte");
    const std::filesystem::path train_labels =
        resolve_mnist_file(cfg.mnist_dir, "train-labels-idx1-ubyte");
    const std::filesystem::path test_images =
        resolve_mnist_file(cfg.mnist_dir, "t10k-images-idx3-ubyte");
    const std::filesystem::path test_labels =
        resolve_mnist_file(cfg.mnist_dir, "t10k-labels-idx1-ubyte");
    RawPair raw;
    raw.train = data::load_raw_digits(train_images, train_labels);
    raw.test = data::load_raw_digits(test_images, test_labels);
    return raw;
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& config) {
    ExperimentConfig cfg = config;
    normalize_config(cfg);
    check_not_emitted(cfg);
    RawPair raw = load_mnist(cfg);

    RunArtifacts run;
    run.seeds.resize(cfg.seeds.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < cfg.seeds.size(); i = next.fetch_add(1)) {
            uint64_t seed = cfg.seeds[i];
            run.seeds[i] = run_seed(cfg, seed, raw.train, raw.test,
                                    cfg.output_dir / ("seed-" + std::to_string(seed)),
                                    cfg.output_dir / "datasets");
        }
    };
    int workers = std::min<int>(cfg.workers, static_cast<int>(cfg.seeds.size()));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    run.any_failed = false;
    for (const SeedReport& r : run.seeds) run.any_failed |= !r.ok;
    run.table = aggregate_runs(run.seeds, method_name(cfg.method), cfg.train.n_models);
    emit_reports(run, cfg);
    return run;
}

void generate_all_datasets(const ExperimentConfig& config) {
    ExperimentConfig cfg = config;
    normalize_config(cfg);
    RawPair raw = load_mnist(cfg);
    for (uint64_t seed : cfg.seeds)
        generate_datasets(cfg, seed, raw.train, raw.test, cfg.output_dir / "datasets");
}

RunArtifacts report_from_artifacts(const ExperimentConfig& config) {
    ExperimentConfig cfg = config;
    normalize_config(cfg);
    RunArtifacts run;
    for (uint64_t seed : cfg.seeds) {
        std::filesystem::path file =
            cfg.output_dir / ("seed-" + std::to_string(seed)) / "report.json";
        if (std::filesystem::exists(file)) {
            run.seeds.push_back(read_seed_report(file));
        } else {
            SeedReport missing;
            missing.seed = seed;
            missing.error = "missing artifact " + file.string();
            run.seeds.push_back(std::move(missing));
        }
    }
    for (const SeedReport& r : run.seeds) run.any_failed |= !r.ok;
    run.table = aggregate_runs(run.seeds, method_name(cfg.method), cfg.train.n_models);
    emit_reports(run, cfg);
    return run;
}

namespace {

RunArtifacts one_seed_run(const ExperimentConfig& config, uint64_t seed, bool train) {
    ExperimentConfig cfg = config;
    normalize_config(cfg);
    if (cfg.output_dir.empty()) throw InvalidArgument("no output directory configured");
    std::filesystem::path seed_dir = cfg.output_dir / ("seed-" + std::to_string(seed));
    std::filesystem::path cache_dir = cfg.output_dir / "datasets";
    if (train && !cfg.overwrite && std::filesystem::exists(seed_dir / "checkpoint.bin"))
        throw IoError((seed_dir / "checkpoint.bin").string() +
                      " already exists; set overwrite to retrain this seed");
    RawPair raw = load_mnist(cfg);

    RunArtifacts run;
    run.seeds.push_back(train
                            ? run_seed(cfg, seed, raw.train, raw.test, seed_dir, cache_dir)
                            : evaluate_seed(cfg, seed, raw.train, raw.test, seed_dir, cache_dir));
    run.any_failed = !run.seeds.front().ok;
    run.table = aggregate_runs(run.seeds, method_name(cfg.method), cfg.train.n_models);
    return run;
}

}  // namespace

RunArtifacts train_one_seed(const ExperimentConfig& cfg, uint64_t seed) {
    return one_seed_run(cfg, seed, true);
}

RunArtifacts evaluate_one_seed(const ExperimentConfig& cfg, uint64_t seed) {
    return one_seed_run(cfg, seed, false);
}

}  // namespace tcdiv::exp
