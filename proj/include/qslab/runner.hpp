#pragma once

#include "qslab/config.hpp"
#include "qslab/core.hpp"
#include "qslab/diagnostics.hpp"
#include "qslab/questioner.hpp"
#include "qslab/solver.hpp"
#include "qslab/toy_dynamics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace qslab::runner {

// ---- synthetic corpus utilities -------------------------------------------

Corpus generate_synthetic_corpus(int size, double offset_min, double offset_max, uint64_t seed);

void save_corpus(const Corpus&, const std::string& path);

/// Line-delimited records; malformed lines are reported with their number.
Corpus load_corpus(const std::string& path);

struct CorpusStats {
    long count = 0;
    double offset_min = 0.0;
    double offset_max = 0.0;
    double offset_mean = 0.0;
    struct Bucket {
        double lo = 0.0;
        double hi = 0.0;
        long count = 0;
    };
    std::vector<Bucket> histogram;
};

CorpusStats corpus_stats(const Corpus&);
std::string corpus_stats_json(const CorpusStats&);

// ---- questioner checkpoints ------------------------------------------------

std::string policy_to_json(const QuestionerPolicy&);
QuestionerPolicy policy_from_json(const std::string& json_text);

// ---- pure experiment pipelines ---------------------------------------------

/// The corpus an experiment runs on: loaded from corpus_path when set,
/// generated from (corpus_size, offsets, seed) otherwise.
Corpus resolve_corpus(const RunConfig&);

DifficultyEstimatorConfig estimator_from(const RunConfig&);

struct QuestionerOutcome {
    QuestionerTrainResult train;
    std::vector<TierCalibration> calibration;
    MeanWithError objective;
};

QuestionerOutcome questioner_pipeline(const RunConfig&);

struct SolverOutcome {
    QuestionerPolicy frozen_policy;
    OfflineQuestionSet set;
    std::vector<OfflineItem> ordered;  // curriculum or shuffled order
    SolverTrainResult train;
    std::vector<SyntheticQuestion> validation;
    int steps_to_val_target = -1;  // -1 when never reached
};

SolverOutcome solver_pipeline(const RunConfig&);

/// Same pipeline with the stage-2 teacher margin overridden; stage 1 and the
/// offline set are untouched, so paired ablation arms share their questions.
SolverOutcome solver_pipeline(const RunConfig&, double student_doc_boost);

struct HeatmapOutcome {
    CoupledBaselineResult coupled;
    AccuracyMatrix coupled_matrix;
    MonotonicityReport coupled_report;  // diagonal pairs round i with post-round solver i
    QuestionerPolicy decoupled_policy;
    std::vector<SolverSnapshot> decoupled_snapshots;
    AccuracyMatrix decoupled_matrix;
    MonotonicityReport decoupled_report;
};

HeatmapOutcome heatmap_pipeline(const RunConfig&);

struct GradCheckOutcome {
    double toy_max_rel_error = 0.0;        // analytic vs central differences, off-kink
    double solver_max_rel_error = 0.0;     // expected-reward gradient vs central differences
    double questioner_rel_error = 0.0;     // score-function gradient vs seeded differences
    double questioner_grad = 0.0;
    double questioner_fd = 0.0;
    bool toy_pass = false;
    bool solver_pass = false;
    bool questioner_pass = false;
    bool all_pass = false;
};

GradCheckOutcome grad_check_pipeline(const RunConfig&);

// ---- experiment runner -------------------------------------------------------

struct RunResult {
    int exit_code = 1;
    std::string run_dir;
    std::vector<std::string> artifacts;
};

/// Where each config value came from; recorded in the manifest.
struct RunProvenance {
    std::string config_file;                 // empty = defaults only
    std::vector<std::string> set_overrides;  // applied after the file
    std::vector<std::string> flag_overrides; // applied last
};

/// Creates a fresh run directory under config.out, dispatches on kind,
/// writes artifacts plus a manifest with per-file digests. Errors produce a
/// machine-readable error.json and a nonzero exit code.
RunResult run_experiment(const RunConfig&, const RunProvenance& provenance = {});

// CSV writers shared by experiments and tests.
std::string trajectory_csv(const toy::Trajectory&);
std::string reward_curve_csv(const std::vector<RewardCurvePoint>&);
std::string solver_curve_csv(const std::vector<SolverCurvePoint>&);
std::string validation_curve_csv(const std::vector<SolverCurvePoint>&);

}  // namespace qslab::runner
