#include "qslab/solver.hpp"

#include "qslab/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace qslab {

uint64_t policy_hash(const QuestionerPolicy& policy) {
    nlohmann::json j;
    for (const auto& t : policy.tiers) {
        j["tiers"].push_back({{"target", t.target}, {"mean", t.mean}});
    }
    j["emission_log_scale"] = policy.emission_log_scale;
    j["grounding_logit"] = policy.grounding_logit;
    return fnv1a64(j.dump());
}

OfflineQuestionSet build_offline_set(const QuestionerPolicy& frozen, const Corpus& corpus,
                                     const std::vector<double>& tiers, int per_tier_count,
                                     uint64_t seed, int num_options) {
    if (corpus.empty()) {
        throw std::invalid_argument("build_offline_set: corpus must not be empty");
    }
    if (per_tier_count < 0) {
        throw std::invalid_argument("build_offline_set: per_tier_count must be >= 0");
    }
    OfflineQuestionSet set;
    set.manifest.policy_hash = policy_hash(frozen);
    set.manifest.seed = seed;
    RngStream rng(seed);
    auto root = rng.child("offline-set");
    for (size_t ti = 0; ti < tiers.size(); ++ti) {
        double tier = tiers[ti];
        auto tier_stream = root.child("tier").child(uint64_t(ti));
        for (int i = 0; i < per_tier_count; ++i) {
            auto item_stream = tier_stream.child("item").child(uint64_t(i));
            const CorpusDoc& doc = corpus[size_t(item_stream.child("doc").below(corpus.size()))];
            auto q_stream = item_stream.child("question");
            SyntheticQuestion q = generate_question(frozen, doc, tier, num_options, q_stream);
            set.items.push_back({doc.doc_id, tier, std::move(q)});
        }
        set.manifest.tier_counts.push_back({tier, per_tier_count});
    }
    return set;
}

void validate_schedule(const CurriculumSchedule& schedule) {
    if (schedule.empty()) {
        throw std::invalid_argument("curriculum schedule must not be empty");
    }
    for (size_t i = 1; i < schedule.size(); ++i) {
        if (schedule[i].tier_target > schedule[i - 1].tier_target) {
            throw std::invalid_argument(
                "curriculum schedule must run easy to hard (non-increasing tier targets)");
        }
    }
}

std::vector<OfflineItem> order_curriculum(const OfflineQuestionSet& set,
                                          const CurriculumSchedule& schedule) {
    validate_schedule(schedule);
    std::vector<OfflineItem> ordered;
    for (const auto& phase : schedule) {
        size_t before = ordered.size();
        for (const auto& item : set.items) {
            if (item.tier_target == phase.tier_target) {
                ordered.push_back(item);
            }
        }
        if (ordered.size() == before) {
            throw std::invalid_argument("order_curriculum: missing tier in offline set");
        }
    }
    return ordered;
}

std::vector<OfflineItem> shuffled_control(const OfflineQuestionSet& set,
                                          const CurriculumSchedule& schedule, RngStream& rng) {
    std::vector<OfflineItem> items = order_curriculum(set, schedule);
    auto s = rng.child("shuffle");
    for (size_t i = items.size(); i > 1; --i) {
        size_t j = size_t(s.below(i));
        std::swap(items[i - 1], items[j]);
    }
    return items;
}

SolverProfile SolverTrainState::teacher() const {
    return teacher_is_shared ? student : frozen_teacher;
}

PseudoLabelResult pseudo_label_item(const OfflineItem& item, const SolverTrainState& state,
                                    int rollouts, double gamma, RngStream& rng) {
    if (rollouts < 1) {
        throw std::invalid_argument("pseudo_label_item: rollouts must be >= 1");
    }
    SolverProfile teacher = state.teacher();
    auto stream = rng.child(item.question.id).child("label");
    std::vector<AnswerSample> votes;
    votes.reserve(size_t(rollouts));
    for (int j = 0; j < rollouts; ++j) {
        auto s = stream.child(uint64_t(j));
        votes.push_back(sample_answer(s, teacher, item.question, true));
    }
    PseudoLabelResult result;
    result.label = majority_vote(votes, item.question.num_options);
    result.accepted = filter_by_agreement(result.label, gamma);
    return result;
}

int solver_reward(const AnswerSample& answer, const PseudoLabel& label) {
    return answer.option_index == label.label_index ? 1 : 0;
}

RewardGrad expected_reward_and_grad(double student_phi, const SyntheticQuestion& question,
                                    double p_label_correct) {
    double z = student_phi - question.latent_difficulty;
    double s = logistic(z);
    double sp = logistic_deriv(z);
    double k1 = double(question.num_options - 1);
    RewardGrad rg;
    rg.expected_reward = p_label_correct * s + (1.0 - p_label_correct) * (1.0 - s) / k1;
    rg.grad_phi = sp * (p_label_correct - (1.0 - p_label_correct) / k1);
    return rg;
}

double oracle_validation_reward(const SolverProfile& profile,
                                const std::vector<SyntheticQuestion>& questions) {
    if (questions.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const auto& q : questions) {
        sum += success_probability(profile, q, false);
    }
    return sum / double(questions.size());
}

SolverTrainResult train_solver(const SolverTrainState& initial,
                               const std::vector<OfflineItem>& ordered,
                               const SolverTrainConfig& cfg, RngStream& rng) {
    if (ordered.empty()) {
        throw std::invalid_argument("train_solver: no items");
    }
    if (cfg.batch < 1) {
        throw std::invalid_argument("train_solver: batch must be >= 1");
    }

    SolverTrainResult result;
    result.state = initial;
    SolverTrainState& state = result.state;
    result.snapshots.push_back({0, state.student});

    size_t total = ordered.size();
    int steps = int((total + size_t(cfg.batch) - 1) / size_t(cfg.batch));
    auto label_root = rng.child("labels");
    auto train_root = rng.child("train-draws");

    for (int step = 0; step < steps; ++step) {
        size_t begin = size_t(step) * size_t(cfg.batch);
        size_t end = std::min(total, begin + size_t(cfg.batch));
        size_t batch_n = end - begin;

        double tier_sum = 0.0;
        double reward_sum = 0.0;
        double grad_sum = 0.0;
        int accepted = 0;

        // Sampled mode needs the batch rewards before the baseline correction.
        std::vector<double> sampled_rewards;
        std::vector<double> sampled_dlogp;

        for (size_t i = begin; i < end; ++i) {
            const OfflineItem& item = ordered[i];
            tier_sum += item.tier_target;
            auto plr = pseudo_label_item(item, state, cfg.rollouts, cfg.gamma, label_root);
            if (!plr.accepted) {
                state.rejected_count++;
                continue;
            }
            state.accepted_count++;
            ++accepted;
            if (cfg.mode == UpdateMode::analytic) {
                double plc = plr.label.label_index == 0 ? 1.0 : 0.0;
                RewardGrad rg =
                    expected_reward_and_grad(state.student.ability, item.question, plc);
                reward_sum += rg.expected_reward;
                grad_sum += rg.grad_phi;
            } else {
                auto s = train_root.child(item.question.id);
                AnswerSample a = sample_answer(s, state.student, item.question, false);
                double r = solver_reward(a, plr.label);
                double z = state.student.ability - item.question.latent_difficulty;
                double p = logistic(z);
                sampled_rewards.push_back(r);
                sampled_dlogp.push_back(a.correct ? (1.0 - p) : -p);
                reward_sum += r;
            }
        }

        double mean_grad = 0.0;
        if (cfg.mode == UpdateMode::analytic) {
            if (accepted > 0) {
                mean_grad = grad_sum / accepted;
            }
        } else if (!sampled_rewards.empty()) {
            double baseline =
                std::accumulate(sampled_rewards.begin(), sampled_rewards.end(), 0.0) /
                double(sampled_rewards.size());
            for (size_t i = 0; i < sampled_rewards.size(); ++i) {
                mean_grad += (sampled_rewards[i] - baseline) * sampled_dlogp[i];
            }
            mean_grad /= double(sampled_rewards.size());
        }
        state.student.ability += cfg.lr * mean_grad;

        SolverCurvePoint pt;
        pt.step = step;
        pt.phase_tier = tier_sum / double(batch_n);
        pt.mean_train_reward = accepted > 0 ? reward_sum / accepted : 0.0;
        pt.acceptance_rate = double(accepted) / double(batch_n);
        pt.active_items = accepted;
        pt.phi = state.student.ability;
        pt.val_reward = oracle_validation_reward(state.student, cfg.validation);
        state.reward_history.push_back(pt.mean_train_reward);
        result.curve.push_back(pt);

        int done = step + 1;
        if ((cfg.snapshot_every > 0 && done % cfg.snapshot_every == 0 && done < steps) ||
            done == steps) {
            result.snapshots.push_back({done, state.student});
        }
    }
    return result;
}

CoupledBaselineResult run_coupled_baseline(const CoupledBaselineConfig& cfg, RngStream& rng) {
    if (cfg.rounds < 1) {
        throw std::invalid_argument("run_coupled_baseline: rounds must be >= 1");
    }

    CoupledBaselineResult result;
    SolverProfile solver{cfg.init_ability, cfg.doc_boost};
    result.initial_solver = solver;

    // Boundary-seeking emitter with a single conditioning tier; grounding is
    // pinned on because the boundary reward ignores it.
    QuestionerPolicy policy = make_questioner_policy(
        {0.5}, cfg.init_ability + cfg.init_mean_offset, cfg.init_log_scale, 8.0);

    Corpus corpus{neutral_doc()};

    for (int round = 0; round < cfg.rounds; ++round) {
        auto round_stream = rng.child("round").child(uint64_t(round));

        QuestionerTrainConfig qcfg;
        qcfg.steps = cfg.questioner_steps;
        qcfg.group_size = cfg.group_size;
        qcfg.lr = cfg.questioner_lr;
        qcfg.reward_kind = QuestionerRewardKind::boundary;
        qcfg.estimator.rollouts = cfg.rollouts;
        qcfg.estimator.num_options = cfg.num_options;
        qcfg.estimator.base_solver = solver;  // frozen for this round

        auto q_stream = round_stream.child("questioner");
        auto q_result = train_questioner(policy, corpus, qcfg, q_stream);
        policy = q_result.policy;
        double q_reward = 0.0;
        for (const auto& pt : q_result.curve) {
            q_reward += pt.mean_reward;
        }
        q_reward /= double(q_result.curve.size());

        OfflineQuestionSet set =
            build_offline_set(policy, corpus, {0.5}, cfg.solver_batches * cfg.batch,
                              round_stream.child("set").key(), cfg.num_options);

        SolverTrainState state;
        state.student = solver;
        state.teacher_is_shared = true;

        SolverTrainConfig scfg;
        scfg.rollouts = cfg.rollouts;
        scfg.gamma = cfg.gamma;
        scfg.lr = cfg.solver_lr;
        scfg.batch = cfg.batch;
        scfg.mode = cfg.mode;
        scfg.snapshot_every = 0;

        auto s_stream = round_stream.child("solver");
        auto s_result = train_solver(state, set.items, scfg, s_stream);
        solver = s_result.state.student;
        double s_reward = 0.0;
        for (const auto& pt : s_result.curve) {
            s_reward += pt.mean_train_reward;
        }
        s_reward /= double(s_result.curve.size());

        result.rounds.push_back({policy, solver, q_reward, s_reward});
    }
    return result;
}

namespace {

nlohmann::json question_to_json(const SyntheticQuestion& q) {
    return {{"id", q.id},
            {"latent_difficulty", q.latent_difficulty},
            {"grounded", q.grounded},
            {"num_options", q.num_options},
            {"doc_id", q.doc_id},
            {"tier_target", q.tier_target}};
}

SyntheticQuestion question_from_json(const nlohmann::json& j) {
    SyntheticQuestion q;
    q.id = j.at("id").get<uint64_t>();
    q.latent_difficulty = j.at("latent_difficulty").get<double>();
    q.grounded = j.at("grounded").get<bool>();
    q.num_options = j.at("num_options").get<int>();
    q.doc_id = j.at("doc_id").get<std::string>();
    q.tier_target = j.at("tier_target").get<double>();
    validate(q);
    return q;
}

}  // namespace

void save_offline_set(const OfflineQuestionSet& set, const std::string& path) {
    nlohmann::json header;
    header["kind"] = "offline-question-set";
    header["policy_hash"] = to_hex(set.manifest.policy_hash);
    header["seed"] = set.manifest.seed;
    for (const auto& [tier, count] : set.manifest.tier_counts) {
        header["tier_counts"].push_back({{"tier", tier}, {"count", count}});
    }
    std::string out = header.dump();
    out += '\n';
    for (const auto& item : set.items) {
        nlohmann::json rec{{"doc_id", item.doc_id},
                           {"tier_target", item.tier_target},
                           {"question", question_to_json(item.question)}};
        out += rec.dump();
        out += '\n';
    }
    write_text_file(path, out);
}

OfflineQuestionSet load_offline_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open offline set: " + path);
    }
    OfflineQuestionSet set;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (line_no == 1) {
            if (j.value("kind", "") != "offline-question-set") {
                throw std::runtime_error(path + ": line 1: missing offline-question-set header");
            }
            set.manifest.policy_hash = from_hex(j.at("policy_hash").get<std::string>());
            set.manifest.seed = j.at("seed").get<uint64_t>();
            if (j.contains("tier_counts")) {
                for (const auto& tc : j["tier_counts"]) {
                    set.manifest.tier_counts.push_back(
                        {tc.at("tier").get<double>(), tc.at("count").get<int>()});
                }
            }
            continue;
        }
        set.items.push_back({j.at("doc_id").get<std::string>(), j.at("tier_target").get<double>(),
                             question_from_json(j.at("question"))});
    }
    if (line_no == 0) {
        throw std::runtime_error(path + ": empty offline set file");
    }
    return set;
}

}  // namespace qslab
