#include "qslab/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace qslab {

double logistic(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    double e = std::exp(z);
    return e / (1.0 + e);
}

double logistic_deriv(double z) {
    double s = logistic(z);
    return s * (1.0 - s);
}

void validate(const SolverProfile& profile) {
    if (!std::isfinite(profile.ability)) {
        throw std::invalid_argument("solver ability must be finite");
    }
    if (!(profile.doc_boost >= 0.0) || !std::isfinite(profile.doc_boost)) {
        throw std::invalid_argument("doc_boost must be finite and >= 0");
    }
}

void validate(const SyntheticQuestion& question) {
    if (question.num_options < 2) {
        throw std::invalid_argument("num_options must be >= 2");
    }
    if (!(question.tier_target >= 0.0 && question.tier_target <= 1.0)) {
        throw std::invalid_argument("tier_target must be in [0,1]");
    }
    if (!std::isfinite(question.latent_difficulty)) {
        throw std::invalid_argument("latent_difficulty must be finite");
    }
}

double success_probability(const SolverProfile& profile, const SyntheticQuestion& question,
                           bool with_doc) {
    double ability = profile.ability + (with_doc ? profile.doc_boost : 0.0);
    return logistic(ability - question.latent_difficulty);
}

AnswerSample answer_from_uniform(double u, double p_correct, int num_options) {
    if (u < p_correct) {
        return {0, true};
    }
    // Remaining mass split evenly over the distractors.
    double wrong_mass = 1.0 - p_correct;
    int idx;
    if (wrong_mass <= 0.0) {
        idx = 1;
    } else {
        idx = 1 + int((u - p_correct) / wrong_mass * (num_options - 1));
        idx = std::min(idx, num_options - 1);
    }
    return {idx, false};
}

AnswerSample sample_answer(RngStream& rng, const SolverProfile& profile,
                           const SyntheticQuestion& question, bool with_doc) {
    double p = success_probability(profile, question, with_doc);
    return answer_from_uniform(rng.uniform(), p, question.num_options);
}

PseudoLabel majority_vote(const std::vector<AnswerSample>& samples, int num_options) {
    if (samples.empty()) {
        throw std::invalid_argument("majority_vote: no votes");
    }
    std::vector<int> counts(size_t(num_options), 0);
    for (const auto& s : samples) {
        if (s.option_index < 0 || s.option_index >= num_options) {
            throw std::invalid_argument("majority_vote: option index out of range");
        }
        counts[size_t(s.option_index)]++;
    }
    int best = 0;
    for (int i = 1; i < num_options; ++i) {
        if (counts[size_t(i)] > counts[size_t(best)]) {
            best = i;
        }
    }
    PseudoLabel label;
    label.label_index = best;
    label.agreement = double(counts[size_t(best)]) / double(samples.size());
    label.vote_counts = std::move(counts);
    return label;
}

bool filter_by_agreement(const PseudoLabel& label, double gamma) {
    return label.agreement >= gamma;
}

double empirical_success_rate(const std::vector<AnswerSample>& samples, const PseudoLabel& label) {
    if (samples.empty()) {
        throw std::invalid_argument("empirical_success_rate: no samples");
    }
    size_t hits = 0;
    for (const auto& s : samples) {
        if (s.option_index == label.label_index) {
            ++hits;
        }
    }
    return double(hits) / double(samples.size());
}

double PseudoLabelDistribution::p_label_correct() const {
    double p = 0.0;
    for (const auto& o : outcomes) {
        if (o.label_correct) {
            p += o.probability;
        }
    }
    return p;
}

double PseudoLabelDistribution::mean_agreement() const {
    double m = 0.0;
    for (const auto& o : outcomes) {
        m += o.probability * double(o.modal_count) / double(num_votes);
    }
    return m;
}

double PseudoLabelDistribution::p_accept(double gamma) const {
    double p = 0.0;
    for (const auto& o : outcomes) {
        if (double(o.modal_count) / double(num_votes) >= gamma) {
            p += o.probability;
        }
    }
    return p;
}

namespace {

// Recursively assigns vote counts to options 0..K-1 and accumulates the
// multinomial probability of each split.
void enumerate_splits(int option, int remaining, int num_options, double p_correct,
                      double p_wrong, const std::vector<double>& factorial,
                      std::vector<int>& counts, std::map<std::pair<bool, int>, double>& acc) {
    if (option == num_options - 1) {
        counts[size_t(option)] = remaining;
        int modal = 0;
        int label = 0;
        for (int i = 0; i < num_options; ++i) {
            if (counts[size_t(i)] > modal) {
                modal = counts[size_t(i)];
                label = i;
            }
        }
        int total = 0;
        double coef = 1.0;
        double prob = 1.0;
        for (int i = 0; i < num_options; ++i) {
            total += counts[size_t(i)];
            coef /= factorial[size_t(counts[size_t(i)])];
            double p = (i == 0) ? p_correct : p_wrong;
            prob *= std::pow(p, counts[size_t(i)]);
        }
        coef *= factorial[size_t(total)];
        acc[{label == 0, modal}] += coef * prob;
        return;
    }
    for (int k = 0; k <= remaining; ++k) {
        counts[size_t(option)] = k;
        enumerate_splits(option + 1, remaining - k, num_options, p_correct, p_wrong, factorial,
                         counts, acc);
    }
}

}  // namespace

PseudoLabelDistribution pseudo_label_distribution(double p_correct, int num_votes,
                                                  int num_options) {
    if (num_votes < 1 || num_options < 2) {
        throw std::invalid_argument("pseudo_label_distribution: need num_votes >= 1, num_options >= 2");
    }
    if (num_votes > 12 || num_options > 8) {
        throw std::invalid_argument("pseudo_label_distribution: enumeration too large");
    }
    if (!(p_correct >= 0.0 && p_correct <= 1.0)) {
        throw std::invalid_argument("pseudo_label_distribution: p_correct must be in [0,1]");
    }

    std::vector<double> factorial(size_t(num_votes) + 1, 1.0);
    for (int i = 1; i <= num_votes; ++i) {
        factorial[size_t(i)] = factorial[size_t(i - 1)] * i;
    }

    double p_wrong = (1.0 - p_correct) / double(num_options - 1);
    std::map<std::pair<bool, int>, double> acc;
    std::vector<int> counts(size_t(num_options), 0);
    enumerate_splits(0, num_votes, num_options, p_correct, p_wrong, factorial, counts, acc);

    PseudoLabelDistribution dist;
    dist.num_votes = num_votes;
    dist.outcomes.reserve(acc.size());
    for (const auto& [key, prob] : acc) {
        dist.outcomes.push_back({key.first, key.second, prob});
    }
    return dist;
}

}  // namespace qslab
