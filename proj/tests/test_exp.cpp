#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "exp/experiment.hpp"
#include "support/synthetic_digits.hpp"
#include "util/error.hpp"
#include "util/hash.hpp"

using namespace tcdiv;
using namespace tcdiv::exp;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

uint64_t dataset_fingerprint(const data::ColoredDataset& ds) {
    uint64_t h = fnv1a_bytes(ds.inputs.data(),
                             static_cast<size_t>(ds.inputs.numel()) * sizeof(double));
    return fnv1a_bytes(ds.labels.data(), ds.labels.size() * sizeof(int32_t), h);
}

const data::RawDigits& small_train_raw() {
    static data::RawDigits raw = testsup::make_synthetic_digits(512, 61);
    return raw;
}

const data::RawDigits& small_test_raw() {
    static data::RawDigits raw = testsup::make_synthetic_digits(10000, 62);
    return raw;
}

// One config small enough for end-to-end runs in a unit test.
ExperimentConfig tiny_cfg() {
    ExperimentConfig cfg;
    cfg.method = Method::Erm;
    cfg.seeds = {0};
    cfg.train.batch_size = 128;
    cfg.train.epochs = 1;
    cfg.train.m_negatives = 8;
    normalize_config(cfg);
    return cfg;
}

struct SharedRun {
    fs::path mnist, out;
    ExperimentConfig cfg;
    RunArtifacts artifacts;
};

// A full conditional-TC run on synthetic digits; computed once, used by
// several cases below.
const SharedRun& shared_run() {
    static SharedRun r = [] {
        SharedRun s;
        s.mnist = fresh_dir("tcdiv_exp_mnist");
        testsup::write_synthetic_corpus(s.mnist, 512, 10000, 91);
        s.out = fresh_dir("tcdiv_exp_run");
        s.cfg = ExperimentConfig{};
        s.cfg.method = Method::ConditionalTc;
        s.cfg.seeds = {0};
        s.cfg.train.n_models = 2;
        s.cfg.train.batch_size = 128;
        s.cfg.train.epochs = 1;
        s.cfg.train.m_negatives = 8;
        s.cfg.mnist_dir = s.mnist;
        s.cfg.output_dir = s.out;
        normalize_config(s.cfg);
        s.artifacts = run_experiment(s.cfg);
        return s;
    }();
    return r;
}

}  // namespace

TEST_CASE("method names round-trip") {
    for (Method m : {Method::ConditionalTc, Method::UnconditionalTc, Method::Erm})
        CHECK(method_from_name(method_name(m)) == m);
    CHECK_THROWS_AS(method_from_name("irm"), InvalidArgument);
}

TEST_CASE("config files, overrides, and normalization") {
    fs::path dir = fresh_dir("tcdiv_exp_cfg");
    fs::path file = dir / "exp.cfg";
    {
        std::ofstream out(file);
        out << "# comment line\n"
            << "variant = tcmnist\n"
            << "method = unconditional_tc\n"
            << "seeds = 3, 4\n"
            << "beta = 5\n"
            << "\n"
            << "lr = 2e-5\n";
    }
    ExperimentConfig cfg = load_config(file, {});
    CHECK(cfg.variant == data::Variant::TCMnist);
    CHECK(cfg.method == Method::UnconditionalTc);
    CHECK_FALSE(cfg.train.conditional);
    CHECK(cfg.seeds == std::vector<uint64_t>{3, 4});
    CHECK(cfg.train.beta == 5.0);
    CHECK(cfg.train.lr == 2e-5);
    CHECK(cfg.train.epochs == 500);      // variant default
    CHECK(cfg.train.critic_ratio == 5);  // variant default

    std::vector<std::string> overrides{"epochs=7", "method=erm", "n_models=4"};
    cfg = load_config(file, overrides);
    CHECK(cfg.train.epochs == 7);
    CHECK(cfg.method == Method::Erm);
    CHECK(cfg.train.n_models == 1);  // erm forces a single model
    CHECK(cfg.train.beta == 0.0);

    std::ofstream(dir / "bad.cfg") << "epochs 7\n";
    CHECK_THROWS_AS(load_config(dir / "bad.cfg", {}), FormatError);
    CHECK_THROWS_AS(load_config(dir / "missing.cfg", {}), IoError);
    CHECK_THROWS_AS(load_config(std::nullopt, std::vector<std::string>{"nonsense"}),
                    InvalidArgument);
    CHECK_THROWS_AS(load_config(std::nullopt, std::vector<std::string>{"no_such_key=1"}),
                    InvalidArgument);
    CHECK_THROWS_AS(load_config(std::nullopt, std::vector<std::string>{"epochs=soon"}),
                    InvalidArgument);
    CHECK_THROWS_AS(load_config(std::nullopt, std::vector<std::string>{"seeds="}),
                    InvalidArgument);
    CHECK_THROWS_AS(load_config(std::nullopt, std::vector<std::string>{"seeds=-1"}),
                    InvalidArgument);
    fs::remove_all(dir);
}

TEST_CASE("mnist dir falls back to the environment") {
    ExperimentConfig cfg = load_config(std::nullopt, {});
    CHECK(cfg.mnist_dir.empty());
    setenv("TCDIV_MNIST_DIR", "/tmp/somewhere", 1);
    cfg = load_config(std::nullopt, {});
    CHECK(cfg.mnist_dir == fs::path("/tmp/somewhere"));
    cfg = load_config(std::nullopt, std::vector<std::string>{"mnist_dir=/explicit"});
    CHECK(cfg.mnist_dir == fs::path("/explicit"));
    unsetenv("TCDIV_MNIST_DIR");
}

TEST_CASE("experiment config hash tracks semantic fields only") {
    ExperimentConfig base;
    uint64_t h = experiment_config_hash(base);
    ExperimentConfig c = base;
    c.variant = data::Variant::RCMnist;
    CHECK(experiment_config_hash(c) != h);
    c = base;
    c.method = Method::Erm;
    CHECK(experiment_config_hash(c) != h);
    c = base;
    c.seeds = {1};
    CHECK(experiment_config_hash(c) != h);
    c = base;
    c.train.beta = 2.0;
    CHECK(experiment_config_hash(c) != h);
    c = base;
    c.generator.label_flip_prob = 0.3;
    CHECK(experiment_config_hash(c) != h);
    c = base;
    c.output_dir = "elsewhere";
    c.mnist_dir = "other";
    c.workers = 4;
    c.overwrite = true;
    CHECK(experiment_config_hash(c) == h);
}

TEST_CASE("datasets cache and reload bit-identically") {
    fs::path cache = fresh_dir("tcdiv_exp_cache");
    ExperimentConfig cfg = tiny_cfg();
    cfg.variant = data::Variant::TCMnist;

    SeedDatasets fresh = generate_datasets(cfg, 3, small_train_raw(), small_test_raw(),
                                           std::nullopt);
    SeedDatasets first = generate_datasets(cfg, 3, small_train_raw(), small_test_raw(), cache);
    SeedDatasets second = generate_datasets(cfg, 3, small_train_raw(), small_test_raw(), cache);

    CHECK(dataset_fingerprint(fresh.train) == dataset_fingerprint(first.train));
    CHECK(dataset_fingerprint(first.train) == dataset_fingerprint(second.train));
    CHECK(dataset_fingerprint(first.digit_only.adapt_test) ==
          dataset_fingerprint(second.digit_only.adapt_test));
    REQUIRE(first.colour2_only.has_value());
    CHECK(dataset_fingerprint(first.colour2_only->adapt_val) ==
          dataset_fingerprint(second.colour2_only->adapt_val));
    CHECK_FALSE(fs::is_empty(cache));

    ExperimentConfig cm = tiny_cfg();  // C-MNIST has no colour2 condition
    SeedDatasets plain = generate_datasets(cm, 3, small_train_raw(), small_test_raw(),
                                           std::nullopt);
    CHECK_FALSE(plain.colour2_only.has_value());
    CHECK(plain.train.channels == 2);
    fs::remove_all(cache);
}

TEST_CASE("run_seed trains, evaluates, and writes artifacts") {
    fs::path dir = fresh_dir("tcdiv_exp_seed");
    ExperimentConfig cfg = tiny_cfg();
    SeedReport r = run_seed(cfg, 1, small_train_raw(), small_test_raw(), dir, std::nullopt);
    REQUIRE(r.ok);
    CHECK(r.error.empty());
    CHECK(r.seed == 1);
    CHECK(r.best_epoch == 0);
    CHECK(r.duration_seconds > 0.0);
    REQUIRE(r.entries.size() == 3);  // three protocols, one condition
    for (const SeedEntry& e : r.entries) {
        CHECK(e.condition == "digit_only");
        CHECK(e.accuracy >= 0.0);
        CHECK(e.accuracy <= 1.0);
    }
    CHECK(fs::exists(dir / "checkpoint.bin"));
    CHECK(fs::exists(dir / "metrics.jsonl"));

    SeedReport back = read_seed_report(dir / "report.json");
    CHECK(seed_report_to_json(back) == seed_report_to_json(r));

    nets::Checkpoint ckpt = nets::load_checkpoint(dir / "checkpoint.bin");
    CHECK(ckpt.collection.n() == 1);
    CHECK(ckpt.epoch == 0);
    fs::remove_all(dir);
}

TEST_CASE("failing seeds are captured, not thrown") {
    ExperimentConfig cfg = tiny_cfg();
    cfg.train.batch_size = 4096;  // larger than the training set
    SeedReport r = run_seed(cfg, 0, small_train_raw(), small_test_raw(), std::nullopt,
                            std::nullopt);
    CHECK_FALSE(r.ok);
    CHECK(r.entries.empty());
    CHECK(r.error.find("smaller than one batch") != std::string::npos);

    ResultsTable t = aggregate_runs(std::vector<SeedReport>{r}, "erm", 1);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].protocol == "failed");
    CHECK(t.rows[0].condition == "seed 0");
    CHECK(t.rows[0].n_seeds == 0);
}

TEST_CASE("aggregation computes means and population deviations") {
    auto entry = [](const char* p, const char* c, double a) {
        return SeedEntry{p, c, a, 0.0};
    };
    SeedReport a;
    a.seed = 0;
    a.ok = true;
    a.entries = {entry("linear", "digit_only", 0.6), entry("best", "digit_only", 0.5)};
    SeedReport b = a;
    b.seed = 1;
    b.entries = {entry("linear", "digit_only", 0.8), entry("best", "digit_only", 0.5)};

    ResultsTable t = aggregate_runs(std::vector<SeedReport>{a, b}, "erm", 1);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0].protocol == "best");
    CHECK(t.rows[0].mean == doctest::Approx(50.0));
    CHECK(t.rows[0].sd == doctest::Approx(0.0));
    CHECK(t.rows[1].protocol == "linear");
    CHECK(t.rows[1].mean == doctest::Approx(70.0));
    CHECK(t.rows[1].sd == doctest::Approx(10.0));
    CHECK(t.rows[1].n_seeds == 2);

    ResultsTable solo = aggregate_runs(std::vector<SeedReport>{a}, "erm", 1);
    CHECK(solo.rows[1].sd == 0.0);
    CHECK(solo.rows[1].n_seeds == 1);

    std::string csv = results_to_csv(t);
    CHECK(csv.find("method,n_models,protocol,condition,mean,sd,n_seeds\n") == 0);
    CHECK(csv.find("erm,1,linear,digit_only,70.0000,10.0000,2") != std::string::npos);
}

TEST_CASE("full experiment writes table, manifest, and seed artifacts") {
    const SharedRun& run = shared_run();
    CHECK_FALSE(run.artifacts.any_failed);
    REQUIRE(run.artifacts.table.rows.size() == 3);
    for (const ResultRow& row : run.artifacts.table.rows) {
        CHECK(row.method == "conditional_tc");
        CHECK(row.n_models == 2);
        CHECK(row.condition == "digit_only");
        CHECK(row.n_seeds == 1);
        CHECK(row.sd == 0.0);
        CHECK(row.mean >= 0.0);
        CHECK(row.mean <= 100.0);
    }
    CHECK(fs::exists(run.out / "results.csv"));
    CHECK(fs::exists(run.out / "seed-0" / "checkpoint.bin"));
    CHECK(fs::exists(run.out / "seed-0" / "metrics.jsonl"));
    CHECK_FALSE(fs::is_empty(run.out / "datasets"));

    nlohmann::json manifest = nlohmann::json::parse(slurp(run.out / "manifest.json"));
    CHECK(manifest["config_hash"].get<std::string>() ==
          hex64(experiment_config_hash(run.cfg)));
    CHECK(manifest["seeds"].size() == 1);
    CHECK(manifest["seeds"][0]["ok"].get<bool>());
    data::GeneratorConfig g = run.cfg.generator;
    g.rng_seed = 0;
    CHECK(manifest["dataset_hashes"]["0"]["train"].get<std::string>() ==
          hex64(data::generator_config_hash(g)));
}

TEST_CASE("existing runs are protected unless overwrite is set") {
    const SharedRun& run = shared_run();
    ExperimentConfig cfg = run.cfg;
    cfg.overwrite = false;
    CHECK_THROWS_AS(run_experiment(cfg), IoError);

    std::string before = slurp(run.out / "results.csv");
    cfg.overwrite = true;
    RunArtifacts again = run_experiment(cfg);
    CHECK_FALSE(again.any_failed);
    CHECK(slurp(run.out / "results.csv") == before);  // deterministic re-run
}

TEST_CASE("report verb re-aggregates existing artifacts") {
    const SharedRun& run = shared_run();
    std::string before = slurp(run.out / "results.csv");

    ExperimentConfig cfg = run.cfg;
    cfg.overwrite = true;
    RunArtifacts again = report_from_artifacts(cfg);
    CHECK_FALSE(again.any_failed);
    CHECK(slurp(run.out / "results.csv") == before);

    cfg.seeds = {0, 5};  // seed 5 has no artifacts
    RunArtifacts partial = report_from_artifacts(cfg);
    CHECK(partial.any_failed);
    bool found = false;
    for (const ResultRow& row : partial.table.rows)
        if (row.protocol == "failed" && row.condition == "seed 5") found = true;
    CHECK(found);
}

TEST_CASE("single-seed train and evaluate verbs share artifacts") {
    const SharedRun& run = shared_run();
    ExperimentConfig cfg = run.cfg;

    // Without overwrite, retraining seed 0 must refuse to clobber it.
    cfg.overwrite = false;
    CHECK_THROWS_AS(train_one_seed(cfg, 0), IoError);

    // Re-scoring the stored checkpoint reproduces the training-time numbers.
    RunArtifacts scored = evaluate_one_seed(cfg, 0);
    REQUIRE_FALSE(scored.any_failed);
    const SeedReport& fresh = scored.seeds.front();
    const SeedReport& orig = run.artifacts.seeds.front();
    CHECK(fresh.best_epoch == orig.best_epoch);
    CHECK(fresh.best_val_accuracy == doctest::Approx(orig.best_val_accuracy));
    REQUIRE(fresh.entries.size() == orig.entries.size());
    for (size_t i = 0; i < fresh.entries.size(); ++i) {
        CHECK(fresh.entries[i].protocol == orig.entries[i].protocol);
        CHECK(fresh.entries[i].accuracy == doctest::Approx(orig.entries[i].accuracy));
    }

    // Training a brand-new seed works and its report lands on disk.
    cfg.overwrite = false;
    RunArtifacts extra = train_one_seed(cfg, 7);
    REQUIRE_FALSE(extra.any_failed);
    CHECK(fs::exists(run.out / "seed-7" / "checkpoint.bin"));
    REQUIRE(extra.table.rows.size() == 3);
    for (const ResultRow& row : extra.table.rows) CHECK(row.n_seeds == 1);

    // Evaluating a seed that was never trained is a captured failure.
    RunArtifacts missing = evaluate_one_seed(cfg, 9);
    CHECK(missing.any_failed);
    CHECK(missing.seeds.front().error.find("checkpoint") != std::string::npos);

    // A model-count mismatch is caught before any evaluation happens.
    ExperimentConfig wrong = run.cfg;
    wrong.train.n_models = 3;
    RunArtifacts bad = evaluate_one_seed(wrong, 0);
    CHECK(bad.any_failed);
    CHECK(bad.seeds.front().error.find("models") != std::string::npos);
}

TEST_CASE("missing MNIST files fail immediately with the path") {
    ExperimentConfig cfg = tiny_cfg();
    cfg.mnist_dir = "/nonexistent-mnist";
    cfg.output_dir = fresh_dir("tcdiv_exp_nomnist");
    try {
        run_experiment(cfg);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("train-images-idx3-ubyte") != std::string::npos);
        CHECK(std::string(e.what()).find("/nonexistent-mnist") != std::string::npos);
    }
    fs::remove_all(cfg.output_dir);

    ExperimentConfig none = tiny_cfg();
    none.output_dir = fresh_dir("tcdiv_exp_nodir");
    CHECK_THROWS_AS(run_experiment(none), InvalidArgument);  // no dir configured at all
    fs::remove_all(none.output_dir);
}
