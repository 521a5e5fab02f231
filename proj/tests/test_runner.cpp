#include "qslab/runner.hpp"

#include "qslab/io.hpp"

#include <json.hpp>

#include <doctest.h>

#include <filesystem>
#include <string>

using namespace qslab;
using namespace qslab::runner;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

fs::path only_run_dir(const fs::path& out) {
    for (const auto& entry : fs::directory_iterator(out)) {
        if (entry.is_directory()) {
            return entry.path();
        }
    }
    throw std::runtime_error("no run dir under " + out.string());
}

}  // namespace

TEST_CASE("defaults match the pinned experiment constants") {
    auto config = resolve_config(ExperimentKind::theorem_check, {});
    CHECK(config.eta == doctest::Approx(1.0));
    CHECK(config.delta == doctest::Approx(0.5));
    CHECK(config.alpha == doctest::Approx(1e-3));
    CHECK(config.rollouts == 8);
    CHECK(config.gamma == doctest::Approx(0.3));
    CHECK(config.group_size == 8);
    CHECK(config.num_options == 4);
    CHECK(config.doc_boost == doctest::Approx(2.0));
    CHECK(config.tiers == std::vector<double>{0.8, 0.5, 0.2});
}

TEST_CASE("config validation and strictness") {
    ConfigInputs bad_gamma;
    bad_gamma.set_overrides = {"gamma=1.5"};
    try {
        resolve_config(ExperimentKind::train_solver, bad_gamma);
        CHECK(false);
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("gamma must be in [0,1]") != std::string::npos);
    }

    ConfigInputs unknown;
    unknown.set_overrides = {"gamme=0.2"};
    try {
        resolve_config(ExperimentKind::train_solver, unknown);
        CHECK(false);
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("unknown config field 'gamme'") != std::string::npos);
    }

    ConfigInputs bad_delta;
    bad_delta.set_overrides = {"delta=2.0"};
    CHECK_THROWS(resolve_config(ExperimentKind::theorem_check, bad_delta));
    // the same delta is fine for experiments that never use it
    CHECK_NOTHROW(resolve_config(ExperimentKind::train_questioner, bad_delta));
}

TEST_CASE("flags override file values and the manifest keeps the resolved config") {
    TempDir tmp("qslab-test-config");
    auto config_path = (tmp.path / "config.json").string();
    write_text_file(config_path, "{\"seed\": 5, \"gamma\": 0.25}\n");

    ConfigInputs inputs;
    inputs.config_path = config_path;
    inputs.has_seed = true;
    inputs.seed = 9;
    auto config = resolve_config(ExperimentKind::theorem_check, inputs);
    CHECK(config.seed == 9);
    CHECK(config.gamma == doctest::Approx(0.25));

    auto round_trip = config_from_json(config_to_json(config), config.kind);
    CHECK(round_trip == config);
}

TEST_CASE("synthetic corpus generation and stats") {
    auto one = generate_synthetic_corpus(1, 0.0, 0.0, 3);
    CHECK(one.size() == 1);

    auto flat = generate_synthetic_corpus(100, 0.0, 0.0, 3);
    for (const auto& doc : flat) {
        CHECK(doc.difficulty_offset == 0.0);
    }

    auto corpus = generate_synthetic_corpus(10000, 0.0, 1.0, 3);
    auto stats = corpus_stats(corpus);
    CHECK(stats.count == 10000);
    // uniform[0,1]: sd = 1/sqrt(12)
    CHECK(std::fabs(stats.offset_mean - 0.5) < 3.0 / (std::sqrt(12.0) * 100.0));
    long total = 0;
    for (const auto& bucket : stats.histogram) {
        total += bucket.count;
    }
    CHECK(total == stats.count);
}

TEST_CASE("corpus round trip and malformed lines") {
    TempDir tmp("qslab-test-corpus");
    auto path = (tmp.path / "corpus.jsonl").string();
    auto corpus = generate_synthetic_corpus(25, -0.2, 0.2, 8);
    save_corpus(corpus, path);
    auto loaded = load_corpus(path);
    REQUIRE(loaded.size() == corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        CHECK(loaded[i].doc_id == corpus[i].doc_id);
        CHECK(loaded[i].difficulty_offset == corpus[i].difficulty_offset);
    }

    auto bad_path = (tmp.path / "bad.jsonl").string();
    std::string text = read_text_file(path);
    size_t first = text.find('\n');
    size_t second = text.find('\n', first + 1);
    write_text_file(bad_path, text.substr(0, second + 1) + "{oops\n" + text.substr(second + 1));
    try {
        load_corpus(bad_path);
        CHECK(false);
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("policy checkpoints round trip at full precision") {
    auto policy = make_questioner_policy({0.8, 0.5, 0.2}, 0.0, std::log(0.37), -1.234567890123);
    policy.tier(0.8).mean = -1.3862943611198906;
    auto restored = policy_from_json(policy_to_json(policy));
    CHECK(restored.tier(0.8).mean == policy.tier(0.8).mean);
    CHECK(restored.emission_log_scale == policy.emission_log_scale);
    CHECK(restored.grounding_logit == policy.grounding_logit);
}

TEST_CASE("theorem-check experiment writes a confirming report") {
    TempDir tmp("qslab-test-run");
    RunConfig config;
    config.kind = ExperimentKind::theorem_check;
    config.out = tmp.path.string();
    auto result = run_experiment(config);
    CHECK(result.exit_code == 0);

    auto dir = fs::path(result.run_dir);
    auto report = nlohmann::json::parse(read_text_file((dir / "reversal_report.json").string()));
    CHECK(report["reversal_confirmed"].get<bool>());
    CHECK(report["delta_j"].get<double>() < 0.0);

    auto manifest = nlohmann::json::parse(read_text_file((dir / "manifest.json").string()));
    CHECK(manifest["status"] == "complete");
    auto restored = config_from_json(manifest["config"].dump(), config.kind);
    CHECK(restored == config);
}

TEST_CASE("identical seeds give digest-identical trajectories") {
    TempDir tmp("qslab-test-determinism");
    RunConfig config;
    config.kind = ExperimentKind::coupled_sim;
    config.out = tmp.path.string();
    config.seed = 1234;
    config.mc_samples = 500;  // exercise the Monte Carlo path too

    auto first = run_experiment(config);
    auto second = run_experiment(config);
    CHECK(first.exit_code == 0);
    CHECK(second.exit_code == 0);
    CHECK(first.run_dir != second.run_dir);
    auto digest_a = file_digest((fs::path(first.run_dir) / "trajectory.csv").string());
    auto digest_b = file_digest((fs::path(second.run_dir) / "trajectory.csv").string());
    CHECK(digest_a == digest_b);
}

TEST_CASE("grad-check experiment passes its tolerances") {
    TempDir tmp("qslab-test-gradcheck");
    RunConfig config;
    config.kind = ExperimentKind::grad_check;
    config.out = tmp.path.string();
    auto result = run_experiment(config);
    CHECK(result.exit_code == 0);
    auto report = nlohmann::json::parse(
        read_text_file((fs::path(result.run_dir) / "gradcheck.json").string()));
    CHECK(report["all_pass"].get<bool>());
}

TEST_CASE("curriculum and shuffled runs consume the same questions") {
    TempDir tmp("qslab-test-solver-run");
    RunConfig config;
    config.kind = ExperimentKind::train_solver;
    config.out = tmp.path.string();
    // desk-size settings keep this test quick
    config.questioner_steps = 40;
    config.per_tier_count = 64;
    config.batch = 16;
    config.validation_size = 48;
    config.eval_questions_per_tier = 10;

    auto curriculum = run_experiment(config);
    config.shuffle = true;
    auto shuffled = run_experiment(config);
    CHECK(curriculum.exit_code == 0);
    CHECK(shuffled.exit_code == 0);

    auto summary_a = nlohmann::json::parse(
        read_text_file((fs::path(curriculum.run_dir) / "summary.json").string()));
    auto summary_b = nlohmann::json::parse(
        read_text_file((fs::path(shuffled.run_dir) / "summary.json").string()));
    CHECK(summary_a["question_multiset_digest"] == summary_b["question_multiset_digest"]);
    CHECK_FALSE(summary_a["shuffled"].get<bool>());
    CHECK(summary_b["shuffled"].get<bool>());

    // curriculum batches walk the tiers in easy-to-hard order
    auto curve = read_text_file((fs::path(curriculum.run_dir) / "solver_curve.csv").string());
    CHECK(curve.find("step,phase_tier,mean_train_reward,acceptance_rate,active_items,phi") == 0);
}

TEST_CASE("a reused offline set must match its questioner checkpoint") {
    TempDir tmp("qslab-test-reuse");
    RunConfig config;
    config.kind = ExperimentKind::train_solver;
    config.out = tmp.path.string();
    config.questioner_steps = 30;
    config.per_tier_count = 32;
    config.batch = 16;
    config.validation_size = 30;

    auto first = run_experiment(config);
    REQUIRE(first.exit_code == 0);

    // replaying with the saved checkpoint and set works
    RunConfig reuse = config;
    reuse.questioner_checkpoint = (fs::path(first.run_dir) / "policy.json").string();
    reuse.offline_set_path = (fs::path(first.run_dir) / "offline_set.jsonl").string();
    auto replay = run_experiment(reuse);
    CHECK(replay.exit_code == 0);

    // a set built by one policy cannot be paired with another
    RunConfig mismatched = config;
    mismatched.offline_set_path = reuse.offline_set_path;
    mismatched.questioner_steps = 31;  // different inline policy
    auto broken = run_experiment(mismatched);
    CHECK(broken.exit_code == 1);
    auto error = nlohmann::json::parse(
        read_text_file((fs::path(broken.run_dir) / "error.json").string()));
    CHECK(std::string(error["error"]).find("hash mismatch") != std::string::npos);
}

TEST_CASE("ablation arms share questions and the margin helps") {
    RunConfig config;
    config.kind = ExperimentKind::ablation;
    config.questioner_steps = 60;
    config.per_tier_count = 128;
    config.batch = 32;
    config.validation_size = 60;

    auto boosted = solver_pipeline(config, config.doc_boost);
    auto unboosted = solver_pipeline(config, 0.0);

    auto ids = [](const std::vector<OfflineItem>& items) {
        std::vector<uint64_t> out;
        for (const auto& item : items) {
            out.push_back(item.question.id);
        }
        return out;
    };
    CHECK(ids(boosted.ordered) == ids(unboosted.ordered));  // same items, same order
    CHECK(boosted.train.state.student.ability > unboosted.train.state.student.ability);
}

TEST_CASE("the manifest records override provenance") {
    TempDir tmp("qslab-test-provenance");
    RunConfig config;
    config.kind = ExperimentKind::theorem_check;
    config.out = tmp.path.string();
    config.seed = 11;

    RunProvenance provenance;
    provenance.config_file = "experiment.json";
    provenance.set_overrides = {"gamma=0.25"};
    provenance.flag_overrides = {"seed=11"};
    auto result = run_experiment(config, provenance);
    CHECK(result.exit_code == 0);

    auto manifest = nlohmann::json::parse(
        read_text_file((fs::path(result.run_dir) / "manifest.json").string()));
    CHECK(manifest["provenance"]["config_file"] == "experiment.json");
    CHECK(manifest["provenance"]["set_overrides"][0] == "gamma=0.25");
    CHECK(manifest["provenance"]["flag_overrides"][0] == "seed=11");
}

TEST_CASE("errors produce a machine-readable record and nonzero status") {
    TempDir tmp("qslab-test-error");
    RunConfig config;
    config.kind = ExperimentKind::train_solver;
    config.out = tmp.path.string();
    config.questioner_checkpoint = (tmp.path / "missing.json").string();
    auto result = run_experiment(config);
    CHECK(result.exit_code == 1);
    auto dir = fs::path(result.run_dir);
    CHECK(fs::exists(dir / "error.json"));
    auto manifest = nlohmann::json::parse(read_text_file((dir / "manifest.json").string()));
    CHECK(manifest["status"] == "incomplete");
}
