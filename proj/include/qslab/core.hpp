#pragma once

#include "qslab/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace qslab {

/// Numerically stable logistic function sigma(z) = 1 / (1 + exp(-z)).
double logistic(double z);

/// sigma'(z) = sigma(z) * (1 - sigma(z)).
double logistic_deriv(double z);

/// Monte Carlo estimate with its standard error.
struct MeanWithError {
    double value = 0.0;
    double std_error = 0.0;
};

/// Scalar-ability answerer. doc_boost is the ability increment available
/// when the source document is visible.
struct SolverProfile {
    double ability = 0.0;
    double doc_boost = 0.0;
};

void validate(const SolverProfile& profile);

struct SyntheticQuestion {
    uint64_t id = 0;
    double latent_difficulty = 0.0;  // same axis as ability
    bool grounded = true;
    int num_options = 4;             // K >= 2
    std::string doc_id;
    double tier_target = 0.5;        // target success rate it was generated for
};

void validate(const SyntheticQuestion& question);

/// One sampled answer. Option 0 is the correct option by convention;
/// distractors are exchangeable, so the convention is unobservable.
struct AnswerSample {
    int option_index = 0;
    bool correct = false;
};

struct PseudoLabel {
    int label_index = 0;
    double agreement = 0.0;  // max(vote_counts) / sum(vote_counts)
    std::vector<int> vote_counts;
};

/// P(correct answer) = sigma(ability + doc_boost * [with_doc] - latent_difficulty).
double success_probability(const SolverProfile&, const SyntheticQuestion&, bool with_doc);

/// Maps a uniform draw to an answer given success probability p and K options.
/// Wrong answers are uniform over the K-1 distractors. Monotone in p for a
/// fixed draw, so shared draws couple answerers of different ability.
AnswerSample answer_from_uniform(double u, double p_correct, int num_options);

/// Draws one answer; consumes one uniform from the stream.
AnswerSample sample_answer(RngStream&, const SolverProfile&, const SyntheticQuestion&, bool with_doc);

/// Modal option over the votes; ties resolved toward the lowest index.
/// Throws on an empty sample list.
PseudoLabel majority_vote(const std::vector<AnswerSample>& samples, int num_options);

/// Keep a label iff agreement >= gamma (boundary inclusive).
bool filter_by_agreement(const PseudoLabel&, double gamma);

/// Fraction of samples matching the label. Throws on an empty list.
double empirical_success_rate(const std::vector<AnswerSample>&, const PseudoLabel&);

/// Exact law of majority voting over num_votes answers when the answerer is
/// correct with probability p_correct and distractors are exchangeable.
struct VoteOutcome {
    bool label_correct = false;
    int modal_count = 0;
    double probability = 0.0;
};

struct PseudoLabelDistribution {
    int num_votes = 0;
    std::vector<VoteOutcome> outcomes;

    double p_label_correct() const;
    double mean_agreement() const;
    /// P(modal_count / num_votes >= gamma).
    double p_accept(double gamma) const;
};

/// Enumerates every vote split exactly. Caps: num_votes <= 12, num_options <= 8;
/// throws "enumeration too large" beyond them.
PseudoLabelDistribution pseudo_label_distribution(double p_correct, int num_votes, int num_options);

}  // namespace qslab
