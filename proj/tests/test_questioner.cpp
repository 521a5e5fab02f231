#include "qslab/questioner.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <vector>

using namespace qslab;

namespace {

DifficultyEstimatorConfig default_estimator() {
    DifficultyEstimatorConfig est;
    est.rollouts = 8;
    est.base_solver = {0.0, 2.0};
    est.num_options = 4;
    return est;
}

Corpus single_doc_corpus() { return {neutral_doc()}; }

}  // namespace

TEST_CASE("question generation limits") {
    auto policy = make_questioner_policy({0.5}, 1.25, std::log(0.4), 50.0);
    RngStream rng(11);
    for (int i = 0; i < 500; ++i) {
        auto s = rng.child(uint64_t(i));
        auto q = generate_question(policy, neutral_doc(), 0.5, 4, s);
        CHECK(q.grounded);  // logit 50 saturates the grounding rate
        CHECK(q.tier_target == doctest::Approx(0.5));
        CHECK(q.num_options == 4);
    }

    auto degenerate = make_questioner_policy({0.5}, 1.25, -1000.0, 0.0);
    auto s = rng.child("degenerate");
    auto q = generate_question(degenerate, neutral_doc(), 0.5, 4, s);
    CHECK(q.latent_difficulty == doctest::Approx(1.25));  // zero emission spread

    auto other = rng.child("unknown");
    CHECK_THROWS_WITH_AS(generate_question(policy, neutral_doc(), 0.8, 4, other), "unknown tier",
                         std::invalid_argument);
}

TEST_CASE("emitted difficulty mean follows the tier mean") {
    const double mean = -0.7;
    const double scale = 0.9;
    auto policy = make_questioner_policy({0.2}, mean, std::log(scale), 0.0);
    RngStream rng(12);
    const int n = 10000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        auto s = rng.child(uint64_t(i));
        sum += generate_question(policy, neutral_doc(), 0.2, 4, s).latent_difficulty;
    }
    CHECK(std::fabs(sum / n - mean) < 3.0 * scale / 100.0);
}

TEST_CASE("document offsets shift emitted difficulty additively") {
    auto policy = make_questioner_policy({0.5}, 0.3, -1000.0, 8.0);
    CorpusDoc shifted{"doc-a", 0.45};
    RngStream rng(13);
    auto s = rng.child("shifted");
    auto q = generate_question(policy, shifted, 0.5, 4, s);
    CHECK(q.latent_difficulty == doctest::Approx(0.75));
    CHECK(q.doc_id == "doc-a");
}

TEST_CASE("difficulty estimation limit cases") {
    auto est = default_estimator();
    SyntheticQuestion q;
    q.id = 7;
    q.num_options = 4;
    q.latent_difficulty = 0.0;

    RngStream rng(21);
    est.base_solver = {50.0, 0.0};
    auto easy_stream = rng.child("easy");
    CHECK(estimate_difficulty(q, est, est.base_solver, easy_stream) == doctest::Approx(1.0));

    est.base_solver = {-50.0, 0.0};
    q.num_options = 2;
    SolverProfile strong_teacher{50.0, 0.0};
    auto hard_stream = rng.child("hard");
    CHECK(estimate_difficulty(q, est, strong_teacher, hard_stream) == doctest::Approx(0.0));
}

TEST_CASE("estimated difficulty matches the composed enumeration") {
    // base ability equals the latent difficulty, privileged teacher margin 2
    auto est = default_estimator();
    SyntheticQuestion q;
    q.num_options = 4;
    q.latent_difficulty = 0.0;

    double p_teacher = logistic(2.0);
    double p_student = 0.5;
    double p_label = pseudo_label_distribution(p_teacher, 8, 4).p_label_correct();
    double expected = p_label * p_student + (1.0 - p_label) * (1.0 - p_student) / 3.0;

    RngStream rng(22);
    const int n = 20000;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        q.id = uint64_t(i) + 1;
        auto s = rng.child(uint64_t(i));
        double d = estimate_difficulty(q, est, est.base_solver, s);
        sum += d;
        sum_sq += d * d;
    }
    double mean = sum / n;
    double se = std::sqrt((sum_sq / n - mean * mean) / n);
    CHECK(std::fabs(mean - expected) < 3.0 * se);
}

TEST_CASE("questioner reward formula") {
    SyntheticQuestion q;
    q.grounded = true;
    q.tier_target = 0.5;
    CHECK(questioner_reward(q, 0.5) == doctest::Approx(1.0));
    q.tier_target = 0.8;
    CHECK(questioner_reward(q, 0.2) == doctest::Approx(0.4));
    q.grounded = false;
    CHECK(questioner_reward(q, 0.8) == doctest::Approx(-1.0));
    CHECK_THROWS(questioner_reward(q, 1.2));

    // range, and the unit value only at an exact tier match
    q.grounded = true;
    for (int i = 0; i <= 100; ++i) {
        double d = i / 100.0;
        double r = questioner_reward(q, d);
        CHECK(r <= 1.0);
        CHECK(r >= -1.0);
        if (d != q.tier_target) {
            CHECK(r < 1.0);
        }
    }
}

TEST_CASE("group relative advantages") {
    auto flat = group_relative_advantage({1.0, 1.0, 1.0, 1.0});
    for (double a : flat) {
        CHECK(a == 0.0);
    }

    auto pair = group_relative_advantage({1.0, -1.0});
    CHECK(pair[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(pair[1] == doctest::Approx(-1.0).epsilon(1e-6));

    // hand-computed: mean 0.2, population std sqrt(0.54)
    auto adv = group_relative_advantage({0.4, 1.0, -1.0, 0.4});
    double std_dev = std::sqrt(0.54);
    CHECK(adv[0] == doctest::Approx(0.2 / std_dev).epsilon(1e-6));
    CHECK(adv[1] == doctest::Approx(0.8 / std_dev).epsilon(1e-6));
    CHECK(adv[2] == doctest::Approx(-1.2 / std_dev).epsilon(1e-6));
    CHECK(adv[3] == doctest::Approx(0.2 / std_dev).epsilon(1e-6));

    CHECK_THROWS(group_relative_advantage({1.0}));

    RngStream rng(8);
    for (int rep = 0; rep < 100; ++rep) {
        auto s = rng.child(uint64_t(rep));
        std::vector<double> rewards;
        int n = 2 + int(s.below(10));
        for (int i = 0; i < n; ++i) {
            rewards.push_back(-1.0 + 2.0 * s.uniform());
        }
        auto advantages = group_relative_advantage(rewards);
        double mean = 0.0;
        for (double a : advantages) {
            mean += a;
        }
        CHECK(std::fabs(mean / n) < 1e-10);
    }
}

TEST_CASE("grounding propensity rises under the penalty") {
    QuestionerTrainConfig cfg;
    cfg.steps = 200;
    cfg.estimator = default_estimator();
    auto initial = make_questioner_policy({0.8, 0.5, 0.2}, 0.0, std::log(0.5), -2.0);
    RngStream rng(0);
    auto result = train_questioner(initial, single_doc_corpus(), cfg, rng);
    CHECK(result.policy.grounding_rate() > 0.9);
}

TEST_CASE("trained policy calibrates tiers at seed 0") {
    QuestionerTrainConfig cfg;
    cfg.steps = 500;
    cfg.estimator = default_estimator();
    auto initial = make_questioner_policy({0.8, 0.5, 0.2}, 0.0, std::log(0.5), -2.0);
    RngStream rng(0);
    auto result = train_questioner(initial, single_doc_corpus(), cfg, rng);

    // the medium tier settles at the base solver's boundary
    CHECK(std::fabs(result.policy.tier(0.5).mean) < 0.3);

    RngStream eval_rng(100);
    auto calibration = evaluate_questioner(result.policy, cfg.estimator, 500, eval_rng);
    REQUIRE(calibration.size() == 3);
    CHECK(calibration[0].mean_difficulty > calibration[1].mean_difficulty);
    CHECK(calibration[1].mean_difficulty > calibration[2].mean_difficulty);

    // measuring the same frozen policy twice with fresh seeds agrees within noise
    RngStream obj_a(201);
    RngStream obj_b(202);
    auto a = decoupled_objective_value(result.policy, cfg.estimator, 10000, obj_a);
    auto b = decoupled_objective_value(result.policy, cfg.estimator, 10000, obj_b);
    CHECK(std::fabs(a.value - b.value) <
          3.0 * std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error));
}

TEST_CASE("decoupled objective ignores everything but the frozen estimator") {
    auto policy = make_questioner_policy({0.8, 0.5, 0.2}, 0.1, std::log(0.4), 1.5);
    auto est = default_estimator();

    RngStream rng_a(55);
    auto before = decoupled_objective_value(policy, est, 2000, rng_a);

    // a training solver moving from phi to phi+1 is invisible to the objective
    SolverProfile training_solver{0.0, 0.0};
    training_solver.ability += 1.0;
    RngStream rng_b(55);
    auto after = decoupled_objective_value(policy, est, 2000, rng_b);
    CHECK(before.value == after.value);  // bit-identical
    CHECK(before.std_error == after.std_error);
}

TEST_CASE("all-ungrounded policies earn the penalty everywhere") {
    auto policy = make_questioner_policy({0.8, 0.5, 0.2}, 0.0, std::log(0.5), -50.0);
    RngStream rng(66);
    auto value = decoupled_objective_value(policy, default_estimator(), 500, rng);
    CHECK(value.value == doctest::Approx(-1.0));
    CHECK(value.std_error == doctest::Approx(0.0));
}

TEST_CASE("boundary-calibrated policy stays below the perfect reward") {
    auto policy = make_questioner_policy({0.5}, 0.0, -1000.0, 50.0);
    RngStream rng(67);
    auto value = decoupled_objective_value(policy, default_estimator(), 4000, rng);
    CHECK(value.value < 1.0);  // finite rollouts keep |D - tier| noisy
    CHECK(value.value > 0.75);
}
