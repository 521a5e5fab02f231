#pragma once

#include "qslab/core.hpp"
#include "qslab/rng.hpp"

#include <string>
#include <vector>

namespace qslab {

struct CorpusDoc {
    std::string doc_id;
    double difficulty_offset = 0.0;  // additive shift on emitted difficulty
};

using Corpus = std::vector<CorpusDoc>;

/// A document with no difficulty shift, for evaluation paths that do not
/// condition on real corpus material.
const CorpusDoc& neutral_doc();

/// Parameterized question emitter: one latent-difficulty mean per tier,
/// a shared emission spread, and a grounding propensity.
struct QuestionerPolicy {
    struct Tier {
        double target = 0.5;  // conditioning success-rate tier
        double mean = 0.0;    // emitted latent-difficulty mean
    };

    std::vector<Tier> tiers;
    double emission_log_scale = 0.0;
    double grounding_logit = 0.0;

    double emission_scale() const;
    double grounding_rate() const;
    /// Throws "unknown tier" when target is not configured.
    const Tier& tier(double target) const;
    Tier& tier(double target);
    std::vector<double> tier_targets() const;
};

QuestionerPolicy make_questioner_policy(const std::vector<double>& tiers, double init_mean,
                                        double init_log_scale, double init_grounding_logit);

/// latent_difficulty ~ Normal(mean_tier + doc offset, scale),
/// grounded ~ Bernoulli(grounding_rate). The question id is derived from the
/// stream key, so identical generation paths give identical ids.
SyntheticQuestion generate_question(const QuestionerPolicy&, const CorpusDoc&, double tier_target,
                                    int num_options, RngStream&);

/// Frozen difficulty estimator: N rollouts of the base solver scored against
/// the teacher's majority-vote label.
struct DifficultyEstimatorConfig {
    int rollouts = 8;          // N
    SolverProfile base_solver; // frozen; doc_boost is the privileged margin
    int num_options = 4;       // K
};

/// Teacher answers with the document (its doc_boost applies), the base
/// solver answers without it; returns the base solver's empirical success
/// rate against the voted label. Draws are keyed by question id.
double estimate_difficulty(const SyntheticQuestion&, const DifficultyEstimatorConfig&,
                           const SolverProfile& teacher, RngStream&);

/// Grounded questions earn 1 - |difficulty - tier|; ungrounded ones earn -1.
double questioner_reward(const SyntheticQuestion&, double estimated_difficulty);

/// (r - mean) / (population std + 1e-8); all-equal groups get exact zeros.
/// Throws for groups smaller than 2.
std::vector<double> group_relative_advantage(const std::vector<double>& rewards);

struct TrainingGroup {
    double tier_target = 0.5;
    std::vector<SyntheticQuestion> questions;
    std::vector<double> rewards;
    std::vector<double> advantages;
};

enum class QuestionerRewardKind {
    tier_match,  // 1 - |D - tier| with the ungrounded penalty
    boundary,    // -|D - 1/2| against the supplied solver (coupled baseline)
};

struct QuestionerTrainConfig {
    int steps = 500;
    int group_size = 8;  // G
    double lr = 0.05;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    QuestionerRewardKind reward_kind = QuestionerRewardKind::tier_match;
    DifficultyEstimatorConfig estimator;
};

struct RewardCurvePoint {
    int step = 0;
    double tier = 0.5;
    double mean_reward = 0.0;
    double mean_estimated_difficulty = 0.0;  // over estimated questions; NaN if none
    double grounding_rate = 0.0;             // fraction grounded in the group
};

struct QuestionerTrainResult {
    QuestionerPolicy policy;
    std::vector<RewardCurvePoint> curve;
};

/// Score-function ascent with group-relative advantages, Adam-conditioned
/// per parameter. One gradient step per (step, tier) group. Ungrounded
/// questions short-circuit to the -1 reward without difficulty rollouts.
QuestionerTrainResult train_questioner(const QuestionerPolicy& initial, const Corpus&,
                                       const QuestionerTrainConfig&, RngStream&);

/// Monte Carlo mean of the tier-match reward for a fixed policy against the
/// frozen estimator; tiers are sampled round-robin. Independent of any
/// solver other than the estimator's.
MeanWithError decoupled_objective_value(const QuestionerPolicy&, const DifficultyEstimatorConfig&,
                                        int mc_questions, RngStream&);

struct TierCalibration {
    double tier = 0.5;
    double mean_difficulty = 0.0;
    double mean_abs_error = 0.0;  // mean |D - tier|
    double grounded_fraction = 0.0;
    int questions = 0;
};

/// Measures per-tier estimated difficulty for a frozen policy; difficulty is
/// estimated for every question regardless of grounding.
std::vector<TierCalibration> evaluate_questioner(const QuestionerPolicy&,
                                                 const DifficultyEstimatorConfig&, int per_tier,
                                                 RngStream&);

}  // namespace qslab
