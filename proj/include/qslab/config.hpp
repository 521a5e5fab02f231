#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qslab::runner {

inline constexpr const char* kToolVersion = "0.1.0";

enum class ExperimentKind {
    theorem_check,
    coupled_sim,
    train_questioner,
    train_solver,
    heatmap,
    grad_check,
    ablation,
};

std::string kind_name(ExperimentKind kind);
ExperimentKind kind_from_name(const std::string& name);

// Flat, strictly-validated experiment configuration. Defaults are the
// pinned experiment constants; file values and --set overrides replace
// them field by field.
struct RunConfig {
    ExperimentKind kind = ExperimentKind::theorem_check;
    uint64_t seed = 0;
    std::string out = "runs";

    // one-dimensional dynamics
    double eta = 1.0;
    double delta = 0.5;
    double alpha = 1e-3;
    double fd_step = 1e-5;
    double concentration_eps = 0.05;
    int iterations = 20;
    int mc_samples = 0;
    std::string policy_kind = "gaussian";  // coupled-sim initial policy
    double policy_location = 0.5;          // relative to phi0
    double policy_log_scale = -1.6094379124341003;  // scale 0.2
    double phi0 = 0.0;

    // shared estimation constants
    int rollouts = 8;      // votes / rollouts per estimate
    int num_options = 4;   // options per question
    double gamma = 0.3;    // agreement acceptance threshold
    double doc_boost = 2.0;
    double base_ability = 0.0;
    std::vector<double> tiers = {0.8, 0.5, 0.2};

    // questioner training
    int group_size = 8;
    int questioner_steps = 500;
    double questioner_lr = 0.05;
    double init_emission_mean = 0.0;
    double init_emission_log_scale = -0.6931471805599453;  // scale 0.5
    double init_grounding_logit = -2.0;
    int eval_questions_per_tier = 2000;
    int mc_questions = 3000;

    // corpus
    std::string corpus_path;
    int corpus_size = 1000;
    double offset_min = 0.0;
    double offset_max = 0.0;

    // solver training
    int per_tier_count = 2048;
    int batch = 64;
    double solver_lr = 0.2;
    double student_ability = -1.5;
    std::string update_mode = "analytic";
    int snapshot_every = 16;
    int validation_size = 512;
    double val_target = 0.7;
    bool shuffle = false;
    std::string questioner_checkpoint;
    std::string offline_set_path;

    // coupled baseline and heatmap diagnostics
    int rounds = 5;
    int coupled_questioner_steps = 40;
    int coupled_solver_batches = 20;
    int coupled_batch = 64;
    double coupled_questioner_lr = 0.05;
    double coupled_solver_lr = 0.05;
    double coupled_doc_boost = 0.0;
    int coupled_rollouts = 7;     // odd, so binary self-voting never ties
    int coupled_num_options = 2;
    double coupled_init_mean_offset = -1.0;
    double coupled_init_log_scale = -0.6931471805599453;
    int per_cell_questions = 400;
    int n_eval = 8;
    double tau_threshold = 0.8;
    double diag_band_lo = 0.35;
    double diag_band_hi = 0.55;

    bool operator==(const RunConfig&) const = default;
};

/// Serialized form (exact round trip through load).
std::string config_to_json(const RunConfig&);

/// Strict parse: unknown fields are errors, every value is validated
/// against its module preconditions.
RunConfig config_from_json(const std::string& json_text, ExperimentKind kind);

/// file (optional) -> --set overrides -> direct flag overrides.
struct ConfigInputs {
    std::string config_path;                 // empty = defaults
    std::vector<std::string> set_overrides;  // "field=value"
    bool has_seed = false;
    uint64_t seed = 0;
    std::string out;   // empty = keep
    bool shuffle = false;
    bool has_shuffle = false;
};

RunConfig resolve_config(ExperimentKind kind, const ConfigInputs& inputs);

/// Throws std::invalid_argument naming the offending field.
void validate_config(const RunConfig&);

}  // namespace qslab::runner
