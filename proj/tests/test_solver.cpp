#include "qslab/solver.hpp"

#include "qslab/io.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

using namespace qslab;

namespace {

QuestionerPolicy frozen_test_policy() {
    auto policy = make_questioner_policy({0.8, 0.5, 0.2}, 0.0, std::log(0.3), 8.0);
    policy.tier(0.8).mean = -1.4;
    policy.tier(0.2).mean = 1.4;
    return policy;
}

std::vector<uint64_t> sorted_ids(const std::vector<OfflineItem>& items) {
    std::vector<uint64_t> ids;
    for (const auto& item : items) {
        ids.push_back(item.question.id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<OfflineItem> fixed_items(double latent, int count, double tier = 0.5) {
    std::vector<OfflineItem> items;
    for (int i = 0; i < count; ++i) {
        SyntheticQuestion q;
        q.id = uint64_t(i) + 1;
        q.latent_difficulty = latent;
        q.num_options = 4;
        q.tier_target = tier;
        items.push_back({"doc", tier, q});
    }
    return items;
}

}  // namespace

TEST_CASE("offline set construction") {
    auto policy = frozen_test_policy();
    Corpus corpus{{"a", 0.0}, {"b", 0.1}};
    auto set = build_offline_set(policy, corpus, {0.8, 0.5, 0.2}, 10, 9);
    CHECK(set.items.size() == 30);
    CHECK(set.manifest.tier_counts.size() == 3);
    CHECK(set.manifest.policy_hash == policy_hash(policy));

    auto again = build_offline_set(policy, corpus, {0.8, 0.5, 0.2}, 10, 9);
    REQUIRE(again.items.size() == set.items.size());
    for (size_t i = 0; i < set.items.size(); ++i) {
        CHECK(again.items[i].question.id == set.items[i].question.id);
        CHECK(again.items[i].question.latent_difficulty ==
              set.items[i].question.latent_difficulty);
    }

    auto empty = build_offline_set(policy, corpus, {0.8, 0.5, 0.2}, 0, 9);
    CHECK(empty.items.empty());

    CHECK_THROWS(build_offline_set(policy, {}, {0.5}, 10, 9));

    // full-size request: synthetic questions are always well-formed, so the
    // set is exactly three tiers of twenty thousand
    auto full = build_offline_set(policy, corpus, {0.8, 0.5, 0.2}, 20000, 9);
    CHECK(full.items.size() == 60000);
}

TEST_CASE("curriculum ordering") {
    auto policy = frozen_test_policy();
    Corpus corpus{{"a", 0.0}};
    auto set = build_offline_set(policy, corpus, {0.8, 0.5, 0.2}, 12, 3);

    CurriculumSchedule schedule{{0.8, 1}, {0.5, 1}, {0.2, 1}};
    auto ordered = order_curriculum(set, schedule);
    CHECK(ordered.size() == 36);
    for (size_t i = 0; i < 12; ++i) {
        CHECK(ordered[i].tier_target == doctest::Approx(0.8));
        CHECK(ordered[i + 12].tier_target == doctest::Approx(0.5));
        CHECK(ordered[i + 24].tier_target == doctest::Approx(0.2));
    }
    // stable within a phase
    for (size_t i = 1; i < 12; ++i) {
        bool found_order = false;
        for (const auto& item : set.items) {
            if (item.question.id == ordered[i - 1].question.id) {
                found_order = true;
                break;
            }
            if (item.question.id == ordered[i].question.id) {
                break;
            }
        }
        CHECK(found_order);
    }

    auto single = order_curriculum(set, {{0.5, 1}});
    CHECK(single.size() == 12);
    for (const auto& item : single) {
        CHECK(item.tier_target == doctest::Approx(0.5));
    }

    CHECK_THROWS(order_curriculum(set, {{0.9, 1}}));
    CHECK_THROWS(validate_schedule({{0.2, 1}, {0.8, 1}}));  // hard before easy
}

TEST_CASE("shuffled control preserves the question multiset") {
    auto policy = frozen_test_policy();
    Corpus corpus{{"a", 0.0}};
    auto set = build_offline_set(policy, corpus, {0.8, 0.5, 0.2}, 20, 3);
    CurriculumSchedule schedule{{0.8, 1}, {0.5, 1}, {0.2, 1}};

    RngStream rng(4);
    auto shuffled = shuffled_control(set, schedule, rng);
    auto ordered = order_curriculum(set, schedule);
    CHECK(sorted_ids(shuffled) == sorted_ids(ordered));

    bool any_moved = false;
    for (size_t i = 0; i < ordered.size(); ++i) {
        if (ordered[i].question.id != shuffled[i].question.id) {
            any_moved = true;
            break;
        }
    }
    CHECK(any_moved);

    RngStream rng2(4);
    auto repeat = shuffled_control(set, schedule, rng2);
    for (size_t i = 0; i < repeat.size(); ++i) {
        CHECK(repeat[i].question.id == shuffled[i].question.id);
    }
}

TEST_CASE("pseudo labeling accepts confident teachers") {
    SolverTrainState state;
    state.student = {50.0, 0.0};
    auto items = fixed_items(0.0, 1);
    RngStream rng(5);
    auto result = pseudo_label_item(items[0], state, 8, 0.3, rng);
    CHECK(result.accepted);
    CHECK(result.label.label_index == 0);
    CHECK(result.label.agreement == doctest::Approx(1.0));
}

TEST_CASE("acceptance probability matches the exact enumeration") {
    // teacher sits exactly at the boundary: p = 0.5, K = 4, N = 8
    SolverTrainState state;
    state.student = {-2.0, 2.0};
    auto exact = pseudo_label_distribution(0.5, 8, 4).p_accept(0.3);

    auto items = fixed_items(0.0, 1);
    const int trials = 10000;
    RngStream rng(6);
    int accepted = 0;
    for (int t = 0; t < trials; ++t) {
        items[0].question.id = uint64_t(t) + 1;
        auto result = pseudo_label_item(items[0], state, 8, 0.3, rng);
        if (result.accepted) {
            ++accepted;
        }
    }
    double rate = double(accepted) / trials;
    double se = std::sqrt(exact * (1 - exact) / trials);
    CHECK(std::fabs(rate - exact) < 3.0 * std::max(se, 1e-4));
}

TEST_CASE("solver reward is the exact match indicator") {
    PseudoLabel label;
    label.label_index = 2;
    CHECK(solver_reward({2, false}, label) == 1);
    CHECK(solver_reward({1, false}, label) == 0);
    CHECK(solver_reward({0, true}, label) == 0);
}

TEST_CASE("expected reward and gradient") {
    SyntheticQuestion q;
    q.num_options = 4;
    q.latent_difficulty = 0.0;

    auto surely_right = expected_reward_and_grad(0.0, q, 1.0);
    CHECK(surely_right.expected_reward == doctest::Approx(0.5));
    CHECK(surely_right.grad_phi == doctest::Approx(0.25));

    auto surely_wrong = expected_reward_and_grad(0.0, q, 0.0);
    CHECK(surely_wrong.grad_phi < 0.0);

    auto mixed = expected_reward_and_grad(0.0, q, 0.9);
    CHECK(mixed.expected_reward == doctest::Approx(0.466667).epsilon(1e-5));

    const double h = 3e-5;
    for (double phi : {-1.0, 0.0, 0.7}) {
        for (double plc : {1.0, 0.9, 0.3, 0.0}) {
            auto rg = expected_reward_and_grad(phi, q, plc);
            double fd = (expected_reward_and_grad(phi + h, q, plc).expected_reward -
                         expected_reward_and_grad(phi - h, q, plc).expected_reward) /
                        (2 * h);
            CHECK(std::fabs(rg.grad_phi - fd) / std::max(1.0, std::fabs(rg.grad_phi)) < 1e-8);
        }
    }
}

TEST_CASE("near-perfect labels push ability up every step") {
    SolverTrainState state;
    state.student = {0.0, 5.0};  // teacher almost never mislabels
    auto items = fixed_items(-1.0, 256);
    SolverTrainConfig cfg;
    cfg.batch = 32;
    cfg.lr = 0.1;
    RngStream rng(7);
    auto result = train_solver(state, items, cfg, rng);
    double prev = 0.0;
    for (const auto& pt : result.curve) {
        bool increased = pt.phi > prev || &pt == &result.curve.front();
        CHECK(increased);
        prev = pt.phi;
    }
    CHECK(result.state.accepted_count + result.state.rejected_count == 256);
    CHECK(result.state.student.ability > 0.0);
}

TEST_CASE("privileged margin rescues hard-tier training") {
    // hard tier for a base ability of 0: sigma(-1.4) is close to 0.2, where
    // an unboosted teacher's votes are flattest and its labels mostly wrong
    auto items = fixed_items(1.4, 512, 0.2);
    SolverTrainConfig cfg;
    cfg.batch = 64;
    cfg.lr = 0.1;

    SolverTrainState boosted;
    boosted.student = {0.0, 2.0};
    RngStream rng_a(8);
    auto with_boost = train_solver(boosted, items, cfg, rng_a);

    SolverTrainState plain;
    plain.student = {0.0, 0.0};
    RngStream rng_b(8);
    auto without_boost = train_solver(plain, items, cfg, rng_b);

    CHECK(with_boost.state.student.ability > without_boost.state.student.ability);
    double acc_with = double(with_boost.state.accepted_count) / 512.0;
    double acc_without = double(without_boost.state.accepted_count) / 512.0;
    CHECK(acc_with > acc_without);
}

TEST_CASE("shared teacher tracks the student exactly") {
    SolverTrainState state;
    state.student = {0.0, 2.0};
    auto items = fixed_items(0.5, 64);
    SolverTrainConfig cfg;
    cfg.batch = 16;
    cfg.lr = 0.2;
    RngStream rng(9);
    auto result = train_solver(state, items, cfg, rng);

    auto teacher = result.state.teacher();
    for (int i = -5; i <= 5; ++i) {
        SyntheticQuestion q;
        q.num_options = 4;
        q.latent_difficulty = 0.4 * i;
        double expected = success_probability(
            SolverProfile{result.state.student.ability + 2.0, 0.0}, q, false);
        CHECK(success_probability(teacher, q, true) == doctest::Approx(expected).epsilon(1e-15));
    }
}

TEST_CASE("sampled update mode also learns") {
    SolverTrainState state;
    state.student = {-0.5, 3.0};
    auto items = fixed_items(0.0, 512);
    SolverTrainConfig cfg;
    cfg.batch = 64;
    cfg.lr = 0.2;
    cfg.mode = UpdateMode::sampled;
    RngStream rng(10);
    auto result = train_solver(state, items, cfg, rng);
    CHECK(result.state.student.ability > -0.3);
}

TEST_CASE("coupled baseline shapes and freezing behavior") {
    CoupledBaselineConfig cfg;
    cfg.rounds = 1;
    cfg.questioner_steps = 5;
    cfg.solver_batches = 2;
    cfg.batch = 16;
    RngStream rng(11);
    auto result = run_coupled_baseline(cfg, rng);
    CHECK(result.rounds.size() == 1);

    // near-zero solver lr freezes the target; later rounds should score at
    // least as well as the first against the stationary boundary
    CoupledBaselineConfig frozen;
    frozen.rounds = 3;
    frozen.questioner_steps = 30;
    frozen.solver_batches = 1;
    frozen.batch = 8;
    frozen.solver_lr = 1e-12;
    RngStream rng2(12);
    auto trend = run_coupled_baseline(frozen, rng2);
    REQUIRE(trend.rounds.size() == 3);
    CHECK(trend.rounds[2].mean_questioner_reward >=
          trend.rounds[0].mean_questioner_reward - 0.02);
    CHECK(std::fabs(trend.rounds[2].solver.ability - trend.rounds[0].solver.ability) < 1e-9);
}

TEST_CASE("offline set round trip and parse errors") {
    auto policy = frozen_test_policy();
    Corpus corpus{{"a", 0.0}};
    auto set = build_offline_set(policy, corpus, {0.8, 0.5}, 5, 13);

    auto dir = std::filesystem::temp_directory_path() / "qslab-test-offline";
    std::filesystem::create_directories(dir);
    auto path = (dir / "set.jsonl").string();
    save_offline_set(set, path);
    auto loaded = load_offline_set(path);
    CHECK(loaded.manifest.policy_hash == set.manifest.policy_hash);
    CHECK(loaded.manifest.seed == set.manifest.seed);
    REQUIRE(loaded.items.size() == set.items.size());
    for (size_t i = 0; i < set.items.size(); ++i) {
        CHECK(loaded.items[i].question.id == set.items[i].question.id);
        CHECK(loaded.items[i].question.latent_difficulty ==
              set.items[i].question.latent_difficulty);
    }

    // corrupt the third line and expect the line number in the error
    auto broken_path = (dir / "broken.jsonl").string();
    {
        std::string text = qslab::read_text_file(path);
        size_t first = text.find('\n');
        size_t second = text.find('\n', first + 1);
        std::string broken = text.substr(0, second + 1) + "not json\n" + text.substr(second + 1);
        qslab::write_text_file(broken_path, broken);
    }
    try {
        load_offline_set(broken_path);
        CHECK(false);
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}
