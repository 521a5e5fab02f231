#include "qslab/config.hpp"

#include "qslab/io.hpp"

#include <json.hpp>

#include <cmath>
#include <set>
#include <stdexcept>

namespace qslab::runner {

using nlohmann::json;

std::string kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::theorem_check: return "theorem-check";
        case ExperimentKind::coupled_sim: return "coupled-sim";
        case ExperimentKind::train_questioner: return "train-questioner";
        case ExperimentKind::train_solver: return "train-solver";
        case ExperimentKind::heatmap: return "heatmap";
        case ExperimentKind::grad_check: return "grad-check";
        case ExperimentKind::ablation: return "ablation";
    }
    throw std::logic_error("unreachable experiment kind");
}

ExperimentKind kind_from_name(const std::string& name) {
    for (auto kind : {ExperimentKind::theorem_check, ExperimentKind::coupled_sim,
                      ExperimentKind::train_questioner, ExperimentKind::train_solver,
                      ExperimentKind::heatmap, ExperimentKind::grad_check,
                      ExperimentKind::ablation}) {
        if (kind_name(kind) == name) {
            return kind;
        }
    }
    throw std::invalid_argument("unknown experiment kind '" + name + "'");
}

namespace {

json config_to_json_obj(const RunConfig& c) {
    json j;
    j["kind"] = kind_name(c.kind);
    j["seed"] = c.seed;
    j["out"] = c.out;
    j["eta"] = c.eta;
    j["delta"] = c.delta;
    j["alpha"] = c.alpha;
    j["fd_step"] = c.fd_step;
    j["concentration_eps"] = c.concentration_eps;
    j["iterations"] = c.iterations;
    j["mc_samples"] = c.mc_samples;
    j["policy_kind"] = c.policy_kind;
    j["policy_location"] = c.policy_location;
    j["policy_log_scale"] = c.policy_log_scale;
    j["phi0"] = c.phi0;
    j["rollouts"] = c.rollouts;
    j["num_options"] = c.num_options;
    j["gamma"] = c.gamma;
    j["doc_boost"] = c.doc_boost;
    j["base_ability"] = c.base_ability;
    j["tiers"] = c.tiers;
    j["group_size"] = c.group_size;
    j["questioner_steps"] = c.questioner_steps;
    j["questioner_lr"] = c.questioner_lr;
    j["init_emission_mean"] = c.init_emission_mean;
    j["init_emission_log_scale"] = c.init_emission_log_scale;
    j["init_grounding_logit"] = c.init_grounding_logit;
    j["eval_questions_per_tier"] = c.eval_questions_per_tier;
    j["mc_questions"] = c.mc_questions;
    j["corpus_path"] = c.corpus_path;
    j["corpus_size"] = c.corpus_size;
    j["offset_min"] = c.offset_min;
    j["offset_max"] = c.offset_max;
    j["per_tier_count"] = c.per_tier_count;
    j["batch"] = c.batch;
    j["solver_lr"] = c.solver_lr;
    j["student_ability"] = c.student_ability;
    j["update_mode"] = c.update_mode;
    j["snapshot_every"] = c.snapshot_every;
    j["validation_size"] = c.validation_size;
    j["val_target"] = c.val_target;
    j["shuffle"] = c.shuffle;
    j["questioner_checkpoint"] = c.questioner_checkpoint;
    j["offline_set_path"] = c.offline_set_path;
    j["rounds"] = c.rounds;
    j["coupled_questioner_steps"] = c.coupled_questioner_steps;
    j["coupled_solver_batches"] = c.coupled_solver_batches;
    j["coupled_batch"] = c.coupled_batch;
    j["coupled_questioner_lr"] = c.coupled_questioner_lr;
    j["coupled_solver_lr"] = c.coupled_solver_lr;
    j["coupled_doc_boost"] = c.coupled_doc_boost;
    j["coupled_rollouts"] = c.coupled_rollouts;
    j["coupled_num_options"] = c.coupled_num_options;
    j["coupled_init_mean_offset"] = c.coupled_init_mean_offset;
    j["coupled_init_log_scale"] = c.coupled_init_log_scale;
    j["per_cell_questions"] = c.per_cell_questions;
    j["n_eval"] = c.n_eval;
    j["tau_threshold"] = c.tau_threshold;
    j["diag_band_lo"] = c.diag_band_lo;
    j["diag_band_hi"] = c.diag_band_hi;
    return j;
}

// Applies one parsed field onto the config; throws on unknown names or
// type mismatches.
void apply_field(RunConfig& c, const std::string& key, const json& value) {
    auto as_double = [&](const char* name) -> double {
        if (!value.is_number()) {
            throw std::invalid_argument(std::string(name) + " must be a number");
        }
        return value.get<double>();
    };
    auto as_int = [&](const char* name) -> int {
        if (!value.is_number_integer()) {
            throw std::invalid_argument(std::string(name) + " must be an integer");
        }
        return value.get<int>();
    };
    auto as_string = [&](const char* name) -> std::string {
        if (!value.is_string()) {
            throw std::invalid_argument(std::string(name) + " must be a string");
        }
        return value.get<std::string>();
    };
    auto as_bool = [&](const char* name) -> bool {
        if (!value.is_boolean()) {
            throw std::invalid_argument(std::string(name) + " must be a boolean");
        }
        return value.get<bool>();
    };

    if (key == "kind") { c.kind = kind_from_name(as_string("kind")); }
    else if (key == "seed") { c.seed = value.get<uint64_t>(); }
    else if (key == "out") { c.out = as_string("out"); }
    else if (key == "eta") { c.eta = as_double("eta"); }
    else if (key == "delta") { c.delta = as_double("delta"); }
    else if (key == "alpha") { c.alpha = as_double("alpha"); }
    else if (key == "fd_step") { c.fd_step = as_double("fd_step"); }
    else if (key == "concentration_eps") { c.concentration_eps = as_double("concentration_eps"); }
    else if (key == "iterations") { c.iterations = as_int("iterations"); }
    else if (key == "mc_samples") { c.mc_samples = as_int("mc_samples"); }
    else if (key == "policy_kind") { c.policy_kind = as_string("policy_kind"); }
    else if (key == "policy_location") { c.policy_location = as_double("policy_location"); }
    else if (key == "policy_log_scale") { c.policy_log_scale = as_double("policy_log_scale"); }
    else if (key == "phi0") { c.phi0 = as_double("phi0"); }
    else if (key == "rollouts") { c.rollouts = as_int("rollouts"); }
    else if (key == "num_options") { c.num_options = as_int("num_options"); }
    else if (key == "gamma") { c.gamma = as_double("gamma"); }
    else if (key == "doc_boost") { c.doc_boost = as_double("doc_boost"); }
    else if (key == "base_ability") { c.base_ability = as_double("base_ability"); }
    else if (key == "tiers") {
        if (!value.is_array() || value.empty()) {
            throw std::invalid_argument("tiers must be a non-empty array");
        }
        c.tiers.clear();
        for (const auto& t : value) {
            c.tiers.push_back(t.get<double>());
        }
    }
    else if (key == "group_size") { c.group_size = as_int("group_size"); }
    else if (key == "questioner_steps") { c.questioner_steps = as_int("questioner_steps"); }
    else if (key == "questioner_lr") { c.questioner_lr = as_double("questioner_lr"); }
    else if (key == "init_emission_mean") { c.init_emission_mean = as_double("init_emission_mean"); }
    else if (key == "init_emission_log_scale") { c.init_emission_log_scale = as_double("init_emission_log_scale"); }
    else if (key == "init_grounding_logit") { c.init_grounding_logit = as_double("init_grounding_logit"); }
    else if (key == "eval_questions_per_tier") { c.eval_questions_per_tier = as_int("eval_questions_per_tier"); }
    else if (key == "mc_questions") { c.mc_questions = as_int("mc_questions"); }
    else if (key == "corpus_path") { c.corpus_path = as_string("corpus_path"); }
    else if (key == "corpus_size") { c.corpus_size = as_int("corpus_size"); }
    else if (key == "offset_min") { c.offset_min = as_double("offset_min"); }
    else if (key == "offset_max") { c.offset_max = as_double("offset_max"); }
    else if (key == "per_tier_count") { c.per_tier_count = as_int("per_tier_count"); }
    else if (key == "batch") { c.batch = as_int("batch"); }
    else if (key == "solver_lr") { c.solver_lr = as_double("solver_lr"); }
    else if (key == "student_ability") { c.student_ability = as_double("student_ability"); }
    else if (key == "update_mode") { c.update_mode = as_string("update_mode"); }
    else if (key == "snapshot_every") { c.snapshot_every = as_int("snapshot_every"); }
    else if (key == "validation_size") { c.validation_size = as_int("validation_size"); }
    else if (key == "val_target") { c.val_target = as_double("val_target"); }
    else if (key == "shuffle") { c.shuffle = as_bool("shuffle"); }
    else if (key == "questioner_checkpoint") { c.questioner_checkpoint = as_string("questioner_checkpoint"); }
    else if (key == "offline_set_path") { c.offline_set_path = as_string("offline_set_path"); }
    else if (key == "rounds") { c.rounds = as_int("rounds"); }
    else if (key == "coupled_questioner_steps") { c.coupled_questioner_steps = as_int("coupled_questioner_steps"); }
    else if (key == "coupled_solver_batches") { c.coupled_solver_batches = as_int("coupled_solver_batches"); }
    else if (key == "coupled_batch") { c.coupled_batch = as_int("coupled_batch"); }
    else if (key == "coupled_questioner_lr") { c.coupled_questioner_lr = as_double("coupled_questioner_lr"); }
    else if (key == "coupled_solver_lr") { c.coupled_solver_lr = as_double("coupled_solver_lr"); }
    else if (key == "coupled_doc_boost") { c.coupled_doc_boost = as_double("coupled_doc_boost"); }
    else if (key == "coupled_rollouts") { c.coupled_rollouts = as_int("coupled_rollouts"); }
    else if (key == "coupled_num_options") { c.coupled_num_options = as_int("coupled_num_options"); }
    else if (key == "coupled_init_mean_offset") { c.coupled_init_mean_offset = as_double("coupled_init_mean_offset"); }
    else if (key == "coupled_init_log_scale") { c.coupled_init_log_scale = as_double("coupled_init_log_scale"); }
    else if (key == "per_cell_questions") { c.per_cell_questions = as_int("per_cell_questions"); }
    else if (key == "n_eval") { c.n_eval = as_int("n_eval"); }
    else if (key == "tau_threshold") { c.tau_threshold = as_double("tau_threshold"); }
    else if (key == "diag_band_lo") { c.diag_band_lo = as_double("diag_band_lo"); }
    else if (key == "diag_band_hi") { c.diag_band_hi = as_double("diag_band_hi"); }
    else {
        throw std::invalid_argument("unknown config field '" + key + "'");
    }
}

json parse_scalar(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const std::exception&) {
        return json(text);  // bare strings are allowed in --set values
    }
}

}  // namespace

std::string config_to_json(const RunConfig& config) {
    return config_to_json_obj(config).dump(2) + "\n";
}

RunConfig config_from_json(const std::string& json_text, ExperimentKind kind) {
    json parsed;
    try {
        parsed = json::parse(json_text);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("config parse error: ") + e.what());
    }
    if (!parsed.is_object()) {
        throw std::invalid_argument("config must be a JSON object");
    }
    RunConfig config;
    config.kind = kind;
    for (const auto& [key, value] : parsed.items()) {
        if (key == "kind") {
            continue;  // the subcommand decides the kind
        }
        apply_field(config, key, value);
    }
    config.kind = kind;
    validate_config(config);
    return config;
}

RunConfig resolve_config(ExperimentKind kind, const ConfigInputs& inputs) {
    RunConfig config;
    config.kind = kind;
    if (!inputs.config_path.empty()) {
        config = config_from_json(read_text_file(inputs.config_path), kind);
    }
    for (const auto& override_spec : inputs.set_overrides) {
        auto eq = override_spec.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("--set expects field=value, got '" + override_spec + "'");
        }
        std::string key = override_spec.substr(0, eq);
        std::string value = override_spec.substr(eq + 1);
        apply_field(config, key, parse_scalar(value));
    }
    if (inputs.has_seed) {
        config.seed = inputs.seed;
    }
    if (!inputs.out.empty()) {
        config.out = inputs.out;
    }
    if (inputs.has_shuffle) {
        config.shuffle = inputs.shuffle;
    }
    config.kind = kind;
    validate_config(config);
    return config;
}

void validate_config(const RunConfig& c) {
    auto require = [](bool ok, const char* message) {
        if (!ok) {
            throw std::invalid_argument(message);
        }
    };

    require(c.gamma >= 0.0 && c.gamma <= 1.0, "gamma must be in [0,1]");
    require(c.rollouts >= 1, "rollouts must be >= 1");
    require(c.num_options >= 2, "num_options must be >= 2");
    require(c.group_size >= 2, "group_size must be >= 2");
    require(!c.tiers.empty(), "tiers must be non-empty");
    for (double t : c.tiers) {
        require(t >= 0.0 && t <= 1.0, "tiers must lie in [0,1]");
    }
    require(c.doc_boost >= 0.0, "doc_boost must be >= 0");
    require(c.coupled_doc_boost >= 0.0, "coupled_doc_boost must be >= 0");
    require(c.alpha > 0.0, "alpha must be > 0");
    require(c.fd_step > 0.0, "fd_step must be > 0");
    require(c.concentration_eps > 0.0, "concentration_eps must be > 0");
    require(c.iterations >= 1, "iterations must be >= 1");
    require(c.policy_kind == "gaussian" || c.policy_kind == "point_mass",
            "policy_kind must be 'gaussian' or 'point_mass'");
    require(c.questioner_steps >= 1, "questioner_steps must be >= 1");
    require(c.questioner_lr > 0.0, "questioner_lr must be > 0");
    require(c.eval_questions_per_tier >= 1, "eval_questions_per_tier must be >= 1");
    require(c.mc_questions >= 1, "mc_questions must be >= 1");
    require(c.corpus_size >= 1, "corpus_size must be >= 1");
    require(c.offset_min <= c.offset_max, "offset_min must be <= offset_max");
    require(c.per_tier_count >= 1, "per_tier_count must be >= 1");
    require(c.batch >= 1, "batch must be >= 1");
    require(c.solver_lr > 0.0, "solver_lr must be > 0");
    require(c.update_mode == "analytic" || c.update_mode == "sampled",
            "update_mode must be 'analytic' or 'sampled'");
    require(c.validation_size >= 1, "validation_size must be >= 1");
    require(c.val_target > 0.0 && c.val_target < 1.0, "val_target must be in (0,1)");
    require(c.rounds >= 1, "rounds must be >= 1");
    require(c.coupled_questioner_steps >= 1, "coupled_questioner_steps must be >= 1");
    require(c.coupled_solver_batches >= 1, "coupled_solver_batches must be >= 1");
    require(c.coupled_batch >= 1, "coupled_batch must be >= 1");
    require(c.coupled_questioner_lr > 0.0, "coupled_questioner_lr must be > 0");
    require(c.coupled_rollouts >= 1, "coupled_rollouts must be >= 1");
    require(c.coupled_num_options >= 2, "coupled_num_options must be >= 2");
    require(c.coupled_solver_lr > 0.0, "coupled_solver_lr must be > 0");
    require(c.per_cell_questions >= 1, "per_cell_questions must be >= 1");
    require(c.n_eval >= 1, "n_eval must be >= 1");
    require(c.diag_band_lo <= c.diag_band_hi, "diag_band_lo must be <= diag_band_hi");

    if (c.kind == ExperimentKind::theorem_check) {
        require(c.eta != 0.0, "eta must be nonzero");
        bool in_band = (c.eta > 0.0) ? (c.delta > 0.0 && c.delta < c.eta)
                                     : (c.delta < 0.0 && c.delta > c.eta);
        require(in_band, "delta must lie strictly between 0 and eta");
    }
    if (c.kind == ExperimentKind::train_solver || c.kind == ExperimentKind::ablation ||
        c.kind == ExperimentKind::heatmap) {
        // curriculum order is part of the contract, not a free parameter
        for (size_t i = 1; i < c.tiers.size(); ++i) {
            require(c.tiers[i] <= c.tiers[i - 1],
                    "tiers must be ordered easy to hard (non-increasing)");
        }
    }
    if (c.mc_samples < 0) {
        throw std::invalid_argument("mc_samples must be >= 0");
    }
}

}  // namespace qslab::runner
