#pragma once

#include "qslab/core.hpp"
#include "qslab/questioner.hpp"
#include "qslab/rng.hpp"

#include <string>
#include <vector>

namespace qslab {

struct OfflineItem {
    std::string doc_id;
    double tier_target = 0.5;
    SyntheticQuestion question;
};

struct OfflineSetManifest {
    uint64_t policy_hash = 0;
    uint64_t seed = 0;
    std::vector<std::pair<double, int>> tier_counts;
};

struct OfflineQuestionSet {
    OfflineSetManifest manifest;
    std::vector<OfflineItem> items;
};

/// 64-bit digest of the policy parameters, recorded in set manifests.
uint64_t policy_hash(const QuestionerPolicy&);

/// Draws per_tier_count questions for each tier from the frozen policy,
/// sampling documents uniformly from the corpus. Identical (policy, seed)
/// inputs give a bit-identical set.
OfflineQuestionSet build_offline_set(const QuestionerPolicy& frozen, const Corpus&,
                                     const std::vector<double>& tiers, int per_tier_count,
                                     uint64_t seed, int num_options = 4);

struct CurriculumPhase {
    double tier_target = 0.5;
    int step_budget = 0;
};

using CurriculumSchedule = std::vector<CurriculumPhase>;

/// Phase targets must be ordered easy to hard (non-increasing success rate).
void validate_schedule(const CurriculumSchedule&);

/// Stable filter-and-concatenate: all items of the first phase's tier, then
/// the next, preserving generation order within a tier. Throws when a phase
/// tier is missing from the set.
std::vector<OfflineItem> order_curriculum(const OfflineQuestionSet&, const CurriculumSchedule&);

/// Control arm: the same multiset of items in a seeded uniform permutation.
std::vector<OfflineItem> shuffled_control(const OfflineQuestionSet&, const CurriculumSchedule&,
                                          RngStream&);

struct SolverTrainState {
    SolverProfile student;
    bool teacher_is_shared = true;
    SolverProfile frozen_teacher;  // used only when teacher_is_shared is false
    long accepted_count = 0;
    long rejected_count = 0;
    std::vector<double> reward_history;

    /// The labeling teacher: tracks the student when shared.
    SolverProfile teacher() const;
};

struct PseudoLabelResult {
    PseudoLabel label;
    bool accepted = false;
};

/// Teacher votes with document access; the label passes iff agreement >= gamma.
PseudoLabelResult pseudo_label_item(const OfflineItem&, const SolverTrainState&, int rollouts,
                                    double gamma, RngStream&);

/// 1 iff the answer matches the label.
int solver_reward(const AnswerSample&, const PseudoLabel&);

struct RewardGrad {
    double expected_reward = 0.0;
    double grad_phi = 0.0;
};

/// Closed-form expected correctness reward and its ability derivative for a
/// label that is correct with probability p_label_correct (wrong labels are
/// exchangeable over the K-1 distractors).
RewardGrad expected_reward_and_grad(double student_phi, const SyntheticQuestion&,
                                    double p_label_correct);

enum class UpdateMode { analytic, sampled };

struct SolverTrainConfig {
    int rollouts = 8;
    double gamma = 0.3;
    double lr = 0.2;
    int batch = 64;
    UpdateMode mode = UpdateMode::analytic;
    int snapshot_every = 16;  // steps between retained snapshots; <= 0 keeps endpoints only
    std::vector<SyntheticQuestion> validation;  // scored against oracle truth
};

struct SolverCurvePoint {
    int step = 0;
    double phase_tier = 0.5;   // mean tier of the batch
    double mean_train_reward = 0.0;
    double acceptance_rate = 0.0;
    int active_items = 0;      // accepted items in the batch
    double phi = 0.0;          // ability after the update
    double val_reward = 0.0;   // expected correctness on the validation set
};

struct SolverSnapshot {
    int step = 0;  // number of completed steps
    SolverProfile profile;
};

struct SolverTrainResult {
    SolverTrainState state;
    std::vector<SolverCurvePoint> curve;
    std::vector<SolverSnapshot> snapshots;
};

/// One pass over the ordered items in batches: pseudo-label with the current
/// teacher, filter by gamma, then ascend the student's ability on the mean
/// expected-reward gradient (analytic) or on REINFORCE with sampled answers.
SolverTrainResult train_solver(const SolverTrainState& initial,
                               const std::vector<OfflineItem>& ordered, const SolverTrainConfig&,
                               RngStream&);

/// Expected correctness against oracle-true answers, averaged over questions.
double oracle_validation_reward(const SolverProfile&, const std::vector<SyntheticQuestion>&);

struct CoupledBaselineConfig {
    int rounds = 5;
    int questioner_steps = 40;   // per round
    int solver_batches = 20;     // per round
    int batch = 64;
    int group_size = 8;
    int rollouts = 8;
    int num_options = 4;
    double questioner_lr = 0.05;
    double solver_lr = 0.02;
    double gamma = 0.3;
    double doc_boost = 0.0;          // self-labeling baseline has no privileged margin
    double init_ability = 0.0;
    double init_mean_offset = -1.0;  // questioner starts below the solver boundary
    double init_log_scale = -0.6931471805599453;  // scale 0.5
    UpdateMode mode = UpdateMode::analytic;
};

struct CoupledRound {
    QuestionerPolicy questioner;  // after this round's questioner training
    SolverProfile solver;         // after this round's solver training
    double mean_questioner_reward = 0.0;
    double mean_solver_reward = 0.0;
};

struct CoupledBaselineResult {
    SolverProfile initial_solver;
    std::vector<CoupledRound> rounds;
};

/// Alternating baseline: each round trains the questioner toward the frozen
/// solver's boundary (reward -|s_hat - 1/2| with self-voted labels), then
/// trains the solver on that questioner's questions.
CoupledBaselineResult run_coupled_baseline(const CoupledBaselineConfig&, RngStream&);

/// External format: manifest header line, then one record per item.
void save_offline_set(const OfflineQuestionSet&, const std::string& path);
OfflineQuestionSet load_offline_set(const std::string& path);

}  // namespace qslab
