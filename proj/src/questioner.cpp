#include "qslab/questioner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qslab {

const CorpusDoc& neutral_doc() {
    static const CorpusDoc doc{"neutral", 0.0};
    return doc;
}

double QuestionerPolicy::emission_scale() const {
    return std::exp(emission_log_scale);
}

double QuestionerPolicy::grounding_rate() const {
    return logistic(grounding_logit);
}

const QuestionerPolicy::Tier& QuestionerPolicy::tier(double target) const {
    for (const auto& t : tiers) {
        if (t.target == target) {
            return t;
        }
    }
    throw std::invalid_argument("unknown tier");
}

QuestionerPolicy::Tier& QuestionerPolicy::tier(double target) {
    for (auto& t : tiers) {
        if (t.target == target) {
            return t;
        }
    }
    throw std::invalid_argument("unknown tier");
}

std::vector<double> QuestionerPolicy::tier_targets() const {
    std::vector<double> targets;
    targets.reserve(tiers.size());
    for (const auto& t : tiers) {
        targets.push_back(t.target);
    }
    return targets;
}

QuestionerPolicy make_questioner_policy(const std::vector<double>& tiers, double init_mean,
                                        double init_log_scale, double init_grounding_logit) {
    if (tiers.empty()) {
        throw std::invalid_argument("policy needs at least one tier");
    }
    QuestionerPolicy policy;
    for (double t : tiers) {
        if (!(t >= 0.0 && t <= 1.0)) {
            throw std::invalid_argument("tiers must lie in [0,1]");
        }
        policy.tiers.push_back({t, init_mean});
    }
    policy.emission_log_scale = init_log_scale;
    policy.grounding_logit = init_grounding_logit;
    return policy;
}

SyntheticQuestion generate_question(const QuestionerPolicy& policy, const CorpusDoc& doc,
                                    double tier_target, int num_options, RngStream& rng) {
    const auto& tier = policy.tier(tier_target);
    SyntheticQuestion q;
    q.id = rng.key();
    q.latent_difficulty =
        tier.mean + doc.difficulty_offset + policy.emission_scale() * rng.normal();
    q.grounded = rng.uniform() < policy.grounding_rate();
    q.num_options = num_options;
    q.doc_id = doc.doc_id;
    q.tier_target = tier_target;
    return q;
}

double estimate_difficulty(const SyntheticQuestion& question, const DifficultyEstimatorConfig& cfg,
                           const SolverProfile& teacher, RngStream& rng) {
    if (cfg.rollouts < 1) {
        throw std::invalid_argument("rollouts must be >= 1");
    }
    auto qs = rng.child(question.id);
    auto teacher_stream = qs.child("teacher");
    std::vector<AnswerSample> votes;
    votes.reserve(size_t(cfg.rollouts));
    for (int j = 0; j < cfg.rollouts; ++j) {
        auto s = teacher_stream.child(uint64_t(j));
        votes.push_back(sample_answer(s, teacher, question, true));
    }
    PseudoLabel label = majority_vote(votes, cfg.num_options);

    auto student_stream = qs.child("student");
    std::vector<AnswerSample> tries;
    tries.reserve(size_t(cfg.rollouts));
    for (int j = 0; j < cfg.rollouts; ++j) {
        auto s = student_stream.child(uint64_t(j));
        tries.push_back(sample_answer(s, cfg.base_solver, question, false));
    }
    return empirical_success_rate(tries, label);
}

double questioner_reward(const SyntheticQuestion& question, double estimated_difficulty) {
    if (!(estimated_difficulty >= 0.0 && estimated_difficulty <= 1.0)) {
        throw std::invalid_argument("estimated difficulty must be in [0,1]");
    }
    if (!question.grounded) {
        return -1.0;
    }
    return 1.0 - std::fabs(estimated_difficulty - question.tier_target);
}

std::vector<double> group_relative_advantage(const std::vector<double>& rewards) {
    if (rewards.size() < 2) {
        throw std::invalid_argument("group size must be at least 2");
    }
    double mean = 0.0;
    for (double r : rewards) {
        mean += r;
    }
    mean /= double(rewards.size());
    double var = 0.0;
    for (double r : rewards) {
        var += (r - mean) * (r - mean);
    }
    var /= double(rewards.size());
    double std_dev = std::sqrt(var);
    std::vector<double> advantages(rewards.size(), 0.0);
    if (std_dev == 0.0) {
        return advantages;  // all-equal groups carry no signal
    }
    for (size_t i = 0; i < rewards.size(); ++i) {
        advantages[i] = (rewards[i] - mean) / (std_dev + 1e-8);
    }
    return advantages;
}

namespace {

// Per-parameter Adam slot; updated lazily so untouched parameters keep no
// stale momentum.
struct AdamSlot {
    double m = 0.0;
    double v = 0.0;
    long t = 0;

    double step(double grad, const QuestionerTrainConfig& cfg) {
        ++t;
        m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
        v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad * grad;
        double m_hat = m / (1.0 - std::pow(cfg.adam_beta1, double(t)));
        double v_hat = v / (1.0 - std::pow(cfg.adam_beta2, double(t)));
        return cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
};

}  // namespace

QuestionerTrainResult train_questioner(const QuestionerPolicy& initial, const Corpus& corpus,
                                       const QuestionerTrainConfig& cfg, RngStream& rng) {
    if (cfg.steps < 1) {
        throw std::invalid_argument("steps must be >= 1");
    }
    if (cfg.group_size < 2) {
        throw std::invalid_argument("group size must be at least 2");
    }
    if (corpus.empty()) {
        throw std::invalid_argument("corpus must not be empty");
    }

    QuestionerTrainResult result;
    result.policy = initial;
    QuestionerPolicy& policy = result.policy;
    const SolverProfile& teacher = cfg.estimator.base_solver;

    std::vector<AdamSlot> mean_slots(policy.tiers.size());
    AdamSlot scale_slot;
    AdamSlot logit_slot;

    for (int step = 0; step < cfg.steps; ++step) {
        auto step_stream = rng.child("step").child(uint64_t(step));
        for (size_t ti = 0; ti < policy.tiers.size(); ++ti) {
            double tier_target = policy.tiers[ti].target;
            auto tier_stream = step_stream.child("tier").child(uint64_t(ti));

            TrainingGroup group;
            group.tier_target = tier_target;
            std::vector<const CorpusDoc*> docs;
            double mean_at_emit = policy.tiers[ti].mean;
            double scale_at_emit = policy.emission_scale();
            double grate_at_emit = policy.grounding_rate();

            double sum_difficulty = 0.0;
            int estimated = 0;
            int grounded_count = 0;
            for (int g = 0; g < cfg.group_size; ++g) {
                auto sample_stream = tier_stream.child("sample").child(uint64_t(g));
                const CorpusDoc& doc =
                    corpus[size_t(sample_stream.child("doc").below(corpus.size()))];
                auto q_stream = sample_stream.child("question");
                SyntheticQuestion q = generate_question(policy, doc, tier_target,
                                                        cfg.estimator.num_options, q_stream);
                docs.push_back(&doc);
                double reward;
                if (cfg.reward_kind == QuestionerRewardKind::boundary) {
                    auto est_stream = tier_stream.child("estimate");
                    double d = estimate_difficulty(q, cfg.estimator, teacher, est_stream);
                    reward = -std::fabs(d - 0.5);
                    sum_difficulty += d;
                    ++estimated;
                } else if (q.grounded) {
                    auto est_stream = tier_stream.child("estimate");
                    double d = estimate_difficulty(q, cfg.estimator, teacher, est_stream);
                    reward = questioner_reward(q, d);
                    sum_difficulty += d;
                    ++estimated;
                } else {
                    reward = -1.0;  // short-circuit: no rollouts spent
                }
                if (q.grounded) {
                    ++grounded_count;
                }
                group.questions.push_back(std::move(q));
                group.rewards.push_back(reward);
            }
            group.advantages = group_relative_advantage(group.rewards);

            double grad_mean = 0.0;
            double grad_scale = 0.0;
            double grad_logit = 0.0;
            for (int g = 0; g < cfg.group_size; ++g) {
                const SyntheticQuestion& q = group.questions[size_t(g)];
                double a = group.advantages[size_t(g)];
                double z = (q.latent_difficulty - mean_at_emit - docs[size_t(g)]->difficulty_offset) /
                           scale_at_emit;
                grad_mean += a * z / scale_at_emit;
                grad_scale += a * (z * z - 1.0);
                grad_logit += a * ((q.grounded ? 1.0 : 0.0) - grate_at_emit);
            }
            grad_mean /= cfg.group_size;
            grad_scale /= cfg.group_size;
            grad_logit /= cfg.group_size;

            policy.tiers[ti].mean += mean_slots[ti].step(grad_mean, cfg);
            policy.emission_log_scale += scale_slot.step(grad_scale, cfg);
            policy.grounding_logit += logit_slot.step(grad_logit, cfg);

            double mean_reward = 0.0;
            for (double r : group.rewards) {
                mean_reward += r;
            }
            mean_reward /= cfg.group_size;

            RewardCurvePoint pt;
            pt.step = step;
            pt.tier = tier_target;
            pt.mean_reward = mean_reward;
            pt.mean_estimated_difficulty =
                estimated > 0 ? sum_difficulty / estimated
                              : std::numeric_limits<double>::quiet_NaN();
            pt.grounding_rate = double(grounded_count) / cfg.group_size;
            result.curve.push_back(pt);
        }
    }
    return result;
}

MeanWithError decoupled_objective_value(const QuestionerPolicy& policy,
                                        const DifficultyEstimatorConfig& cfg, int mc_questions,
                                        RngStream& rng) {
    if (mc_questions < 1) {
        throw std::invalid_argument("mc_questions must be >= 1");
    }
    const SolverProfile& teacher = cfg.base_solver;
    double sum = 0.0;
    double sum_sq = 0.0;
    auto targets = policy.tier_targets();
    for (int i = 0; i < mc_questions; ++i) {
        double tier_target = targets[size_t(i) % targets.size()];
        auto q_stream = rng.child("question").child(uint64_t(i));
        SyntheticQuestion q =
            generate_question(policy, neutral_doc(), tier_target, cfg.num_options, q_stream);
        double reward;
        if (q.grounded) {
            auto est_stream = rng.child("estimate");
            reward = questioner_reward(q, estimate_difficulty(q, cfg, teacher, est_stream));
        } else {
            reward = -1.0;
        }
        sum += reward;
        sum_sq += reward * reward;
    }
    double mean = sum / mc_questions;
    double var = std::max(0.0, sum_sq / mc_questions - mean * mean);
    return {mean, std::sqrt(var / mc_questions)};
}

std::vector<TierCalibration> evaluate_questioner(const QuestionerPolicy& policy,
                                                 const DifficultyEstimatorConfig& cfg,
                                                 int per_tier, RngStream& rng) {
    if (per_tier < 1) {
        throw std::invalid_argument("per_tier must be >= 1");
    }
    const SolverProfile& teacher = cfg.base_solver;
    std::vector<TierCalibration> out;
    for (size_t ti = 0; ti < policy.tiers.size(); ++ti) {
        double tier_target = policy.tiers[ti].target;
        auto tier_stream = rng.child("eval-tier").child(uint64_t(ti));
        TierCalibration cal;
        cal.tier = tier_target;
        cal.questions = per_tier;
        for (int i = 0; i < per_tier; ++i) {
            auto q_stream = tier_stream.child("question").child(uint64_t(i));
            SyntheticQuestion q =
                generate_question(policy, neutral_doc(), tier_target, cfg.num_options, q_stream);
            auto est_stream = tier_stream.child("estimate");
            double d = estimate_difficulty(q, cfg, teacher, est_stream);
            cal.mean_difficulty += d;
            cal.mean_abs_error += std::fabs(d - tier_target);
            cal.grounded_fraction += q.grounded ? 1.0 : 0.0;
        }
        cal.mean_difficulty /= per_tier;
        cal.mean_abs_error /= per_tier;
        cal.grounded_fraction /= per_tier;
        out.push_back(cal);
    }
    return out;
}

}  // namespace qslab
