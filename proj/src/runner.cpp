#include "qslab/runner.hpp"

#include "qslab/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace qslab::runner {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- synthetic corpus -------------------------------------------------------

Corpus generate_synthetic_corpus(int size, double offset_min, double offset_max, uint64_t seed) {
    if (size < 1) {
        throw std::invalid_argument("corpus_size must be >= 1");
    }
    if (offset_min > offset_max) {
        throw std::invalid_argument("offset_min must be <= offset_max");
    }
    Corpus corpus;
    corpus.reserve(size_t(size));
    RngStream rng(seed);
    auto stream = rng.child("corpus");
    for (int i = 0; i < size; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "doc-%06d", i);
        double u = stream.child(uint64_t(i)).uniform();
        corpus.push_back({id, offset_min + (offset_max - offset_min) * u});
    }
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::string out;
    for (const auto& doc : corpus) {
        json rec{{"doc_id", doc.doc_id}, {"difficulty_offset", doc.difficulty_offset}};
        out += rec.dump();
        out += '\n';
    }
    write_text_file(path, out);
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open corpus: " + path);
    }
    Corpus corpus;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            json j = json::parse(line);
            corpus.push_back(
                {j.at("doc_id").get<std::string>(), j.at("difficulty_offset").get<double>()});
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (corpus.empty()) {
        throw std::runtime_error(path + ": empty corpus");
    }
    return corpus;
}

CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats stats;
    stats.count = long(corpus.size());
    if (corpus.empty()) {
        return stats;
    }
    stats.offset_min = corpus[0].difficulty_offset;
    stats.offset_max = corpus[0].difficulty_offset;
    double sum = 0.0;
    for (const auto& doc : corpus) {
        stats.offset_min = std::min(stats.offset_min, doc.difficulty_offset);
        stats.offset_max = std::max(stats.offset_max, doc.difficulty_offset);
        sum += doc.difficulty_offset;
    }
    stats.offset_mean = sum / double(corpus.size());

    int buckets = stats.offset_min == stats.offset_max ? 1 : 10;
    double width = (stats.offset_max - stats.offset_min) / buckets;
    for (int b = 0; b < buckets; ++b) {
        stats.histogram.push_back({stats.offset_min + b * width,
                                   b + 1 == buckets ? stats.offset_max
                                                    : stats.offset_min + (b + 1) * width,
                                   0});
    }
    for (const auto& doc : corpus) {
        int b = 0;
        if (buckets > 1) {
            b = int((doc.difficulty_offset - stats.offset_min) / width);
            b = std::clamp(b, 0, buckets - 1);
        }
        stats.histogram[size_t(b)].count++;
    }
    return stats;
}

std::string corpus_stats_json(const CorpusStats& stats) {
    json j;
    j["count"] = stats.count;
    j["offset_min"] = stats.offset_min;
    j["offset_max"] = stats.offset_max;
    j["offset_mean"] = stats.offset_mean;
    for (const auto& bucket : stats.histogram) {
        j["histogram"].push_back({{"lo", bucket.lo}, {"hi", bucket.hi}, {"count", bucket.count}});
    }
    return j.dump(2) + "\n";
}

// ---- questioner checkpoints --------------------------------------------------

std::string policy_to_json(const QuestionerPolicy& policy) {
    json j;
    j["kind"] = "questioner-policy";
    j["tool_version"] = kToolVersion;
    for (const auto& tier : policy.tiers) {
        j["tiers"].push_back({{"target", tier.target}, {"mean", tier.mean}});
    }
    j["emission_log_scale"] = policy.emission_log_scale;
    j["grounding_logit"] = policy.grounding_logit;
    return j.dump(2) + "\n";
}

QuestionerPolicy policy_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    if (j.value("kind", "") != "questioner-policy") {
        throw std::runtime_error("not a questioner-policy checkpoint");
    }
    QuestionerPolicy policy;
    for (const auto& tier : j.at("tiers")) {
        policy.tiers.push_back({tier.at("target").get<double>(), tier.at("mean").get<double>()});
    }
    policy.emission_log_scale = j.at("emission_log_scale").get<double>();
    policy.grounding_logit = j.at("grounding_logit").get<double>();
    return policy;
}

// ---- pipelines ---------------------------------------------------------------

Corpus resolve_corpus(const RunConfig& config) {
    if (!config.corpus_path.empty()) {
        return load_corpus(config.corpus_path);
    }
    return generate_synthetic_corpus(config.corpus_size, config.offset_min, config.offset_max,
                                     config.seed);
}

DifficultyEstimatorConfig estimator_from(const RunConfig& config) {
    DifficultyEstimatorConfig est;
    est.rollouts = config.rollouts;
    est.base_solver = {config.base_ability, config.doc_boost};
    est.num_options = config.num_options;
    return est;
}

QuestionerOutcome questioner_pipeline(const RunConfig& config) {
    Corpus corpus = resolve_corpus(config);
    QuestionerPolicy initial =
        make_questioner_policy(config.tiers, config.init_emission_mean,
                               config.init_emission_log_scale, config.init_grounding_logit);
    QuestionerTrainConfig train_cfg;
    train_cfg.steps = config.questioner_steps;
    train_cfg.group_size = config.group_size;
    train_cfg.lr = config.questioner_lr;
    train_cfg.estimator = estimator_from(config);

    QuestionerOutcome outcome;
    RngStream root(config.seed);
    auto train_stream = root.child("train-questioner");
    outcome.train = train_questioner(initial, corpus, train_cfg, train_stream);
    auto cal_stream = root.child("calibration");
    outcome.calibration = evaluate_questioner(outcome.train.policy, train_cfg.estimator,
                                              config.eval_questions_per_tier, cal_stream);
    auto obj_stream = root.child("objective");
    outcome.objective = decoupled_objective_value(outcome.train.policy, train_cfg.estimator,
                                                  config.mc_questions, obj_stream);
    return outcome;
}

SolverOutcome solver_pipeline(const RunConfig& config) {
    return solver_pipeline(config, config.doc_boost);
}

SolverOutcome solver_pipeline(const RunConfig& config, double student_doc_boost) {
    Corpus corpus = resolve_corpus(config);
    RngStream root(config.seed);

    SolverOutcome outcome;
    if (!config.questioner_checkpoint.empty()) {
        outcome.frozen_policy = policy_from_json(read_text_file(config.questioner_checkpoint));
    } else {
        QuestionerPolicy initial =
            make_questioner_policy(config.tiers, config.init_emission_mean,
                                   config.init_emission_log_scale, config.init_grounding_logit);
        QuestionerTrainConfig train_cfg;
        train_cfg.steps = config.questioner_steps;
        train_cfg.group_size = config.group_size;
        train_cfg.lr = config.questioner_lr;
        train_cfg.estimator = estimator_from(config);
        auto train_stream = root.child("train-questioner");
        outcome.frozen_policy = train_questioner(initial, corpus, train_cfg, train_stream).policy;
    }

    if (!config.offline_set_path.empty()) {
        outcome.set = load_offline_set(config.offline_set_path);
        if (outcome.set.manifest.policy_hash != policy_hash(outcome.frozen_policy)) {
            throw std::runtime_error(
                "offline set at " + config.offline_set_path +
                " was built by a different questioner policy (hash mismatch)");
        }
    } else {
        outcome.set = build_offline_set(outcome.frozen_policy, corpus, config.tiers,
                                        config.per_tier_count, root.child("offline-set").key(),
                                        config.num_options);
    }

    CurriculumSchedule schedule;
    for (double tier : config.tiers) {
        schedule.push_back({tier, (config.per_tier_count + config.batch - 1) / config.batch});
    }
    if (config.shuffle) {
        auto order_stream = root.child("order");
        outcome.ordered = shuffled_control(outcome.set, schedule, order_stream);
    } else {
        outcome.ordered = order_curriculum(outcome.set, schedule);
    }

    auto val_stream = root.child("validation");
    outcome.validation.reserve(size_t(config.validation_size));
    for (int i = 0; i < config.validation_size; ++i) {
        double tier = config.tiers[size_t(i) % config.tiers.size()];
        auto q_stream = val_stream.child(uint64_t(i));
        outcome.validation.push_back(generate_question(outcome.frozen_policy, neutral_doc(), tier,
                                                       config.num_options, q_stream));
    }

    SolverTrainState state;
    state.student = {config.student_ability, student_doc_boost};
    state.teacher_is_shared = true;

    SolverTrainConfig train_cfg;
    train_cfg.rollouts = config.rollouts;
    train_cfg.gamma = config.gamma;
    train_cfg.lr = config.solver_lr;
    train_cfg.batch = config.batch;
    train_cfg.mode =
        config.update_mode == "sampled" ? UpdateMode::sampled : UpdateMode::analytic;
    train_cfg.snapshot_every = config.snapshot_every;
    train_cfg.validation = outcome.validation;

    auto train_stream = root.child("train-solver");
    outcome.train = train_solver(state, outcome.ordered, train_cfg, train_stream);

    outcome.steps_to_val_target = -1;
    for (const auto& pt : outcome.train.curve) {
        if (pt.val_reward >= config.val_target) {
            outcome.steps_to_val_target = pt.step + 1;
            break;
        }
    }

    long processed = outcome.train.state.accepted_count + outcome.train.state.rejected_count;
    if (processed != long(outcome.ordered.size())) {
        throw std::logic_error("acceptance bookkeeping mismatch");
    }
    return outcome;
}

HeatmapOutcome heatmap_pipeline(const RunConfig& config) {
    HeatmapOutcome outcome;

    CoupledBaselineConfig coupled_cfg;
    coupled_cfg.rounds = config.rounds;
    coupled_cfg.questioner_steps = config.coupled_questioner_steps;
    coupled_cfg.solver_batches = config.coupled_solver_batches;
    coupled_cfg.batch = config.coupled_batch;
    coupled_cfg.group_size = config.group_size;
    coupled_cfg.rollouts = config.coupled_rollouts;
    coupled_cfg.num_options = config.coupled_num_options;
    coupled_cfg.questioner_lr = config.coupled_questioner_lr;
    coupled_cfg.solver_lr = config.coupled_solver_lr;
    coupled_cfg.gamma = config.gamma;
    coupled_cfg.doc_boost = config.coupled_doc_boost;
    coupled_cfg.init_ability = config.base_ability;
    coupled_cfg.init_mean_offset = config.coupled_init_mean_offset;
    coupled_cfg.init_log_scale = config.coupled_init_log_scale;
    coupled_cfg.mode =
        config.update_mode == "sampled" ? UpdateMode::sampled : UpdateMode::analytic;

    RngStream root(config.seed);
    auto coupled_stream = root.child("coupled-baseline");
    outcome.coupled = run_coupled_baseline(coupled_cfg, coupled_stream);

    std::vector<QuestionSource> coupled_sources;
    std::vector<std::pair<std::string, SolverProfile>> coupled_solvers;
    coupled_solvers.push_back({"S0", outcome.coupled.initial_solver});
    for (size_t i = 0; i < outcome.coupled.rounds.size(); ++i) {
        coupled_sources.push_back(
            {outcome.coupled.rounds[i].questioner, 0.5, "Q" + std::to_string(i + 1)});
        coupled_solvers.push_back(
            {"S" + std::to_string(i + 1), outcome.coupled.rounds[i].solver});
    }
    auto coupled_matrix_stream = root.child("coupled-matrix");
    outcome.coupled_matrix =
        cross_accuracy_matrix(coupled_sources, coupled_solvers, config.per_cell_questions,
                              config.n_eval, config.coupled_num_options, coupled_matrix_stream);
    outcome.coupled_report = monotonicity_report(outcome.coupled_matrix, 1);

    SolverOutcome solver = solver_pipeline(config);
    outcome.decoupled_policy = solver.frozen_policy;
    outcome.decoupled_snapshots = solver.train.snapshots;

    std::vector<QuestionSource> tier_sources;
    for (double tier : config.tiers) {
        tier_sources.push_back(
            {outcome.decoupled_policy, tier, "tier-" + format_fixed(tier, 2)});
    }
    std::vector<std::pair<std::string, SolverProfile>> snapshot_solvers;
    for (const auto& snap : outcome.decoupled_snapshots) {
        snapshot_solvers.push_back({"S@" + std::to_string(snap.step), snap.profile});
    }
    auto decoupled_matrix_stream = root.child("decoupled-matrix");
    outcome.decoupled_matrix =
        cross_accuracy_matrix(tier_sources, snapshot_solvers, config.per_cell_questions,
                              config.n_eval, config.num_options, decoupled_matrix_stream);
    outcome.decoupled_report = monotonicity_report(outcome.decoupled_matrix, 0);
    return outcome;
}

GradCheckOutcome grad_check_pipeline(const RunConfig& config) {
    GradCheckOutcome outcome;
    double h = config.fd_step;
    double phi = config.phi0;

    // Point-mass gradient against central differences of the closed form,
    // away from the kink.
    for (double off : {-2.0, -1.0, -0.5, -0.3, 0.3, 0.5, 1.0, 2.0}) {
        toy::DifficultyPolicy1D policy;
        policy.kind = toy::PolicyKind::point_mass;
        policy.location = phi + off;
        double analytic = toy::coupled_objective_grad(policy, phi);
        toy::DifficultyPolicy1D plus = policy;
        toy::DifficultyPolicy1D minus = policy;
        plus.location += h;
        minus.location -= h;
        double fd = (toy::coupled_objective_quad(plus, phi) -
                     toy::coupled_objective_quad(minus, phi)) /
                    (2.0 * h);
        double rel = std::fabs(analytic - fd) / std::max(1.0, std::fabs(analytic));
        outcome.toy_max_rel_error = std::max(outcome.toy_max_rel_error, rel);
    }
    {
        // Gaussian path: the quadrature objective is piecewise smooth in the
        // location with one kink per node; test clear of all of them.
        double scale = 0.2;
        const auto& gh = toy::gauss_hermite32();
        double off = 0.3;
        for (double candidate : {0.3, 0.31, 0.32, 0.29, 0.34}) {
            double nearest = 1e9;
            for (double x : gh.nodes) {
                nearest = std::min(nearest, std::fabs(candidate + scale * M_SQRT2 * x));
            }
            if (nearest > 1e-3) {
                off = candidate;
                break;
            }
        }
        toy::DifficultyPolicy1D policy;
        policy.kind = toy::PolicyKind::gaussian;
        policy.location = phi + off;
        policy.log_scale = std::log(scale);
        double analytic = toy::coupled_objective_grad(policy, phi);
        toy::DifficultyPolicy1D plus = policy;
        toy::DifficultyPolicy1D minus = policy;
        plus.location += h;
        minus.location -= h;
        double fd = (toy::coupled_objective_quad(plus, phi) -
                     toy::coupled_objective_quad(minus, phi)) /
                    (2.0 * h);
        double rel = std::fabs(analytic - fd) / std::max(1.0, std::fabs(analytic));
        outcome.toy_max_rel_error = std::max(outcome.toy_max_rel_error, rel);
    }
    outcome.toy_pass = outcome.toy_max_rel_error < 1e-6;

    // Expected-reward gradient against central differences of the closed form.
    {
        SyntheticQuestion q;
        q.num_options = config.num_options;
        double hs = 3e-5;
        for (double z : {-1.0, 0.0, 0.7}) {
            q.latent_difficulty = -z;  // student_phi 0 below
            for (double plc : {1.0, 0.9, 0.0}) {
                RewardGrad rg = expected_reward_and_grad(0.0, q, plc);
                double fd = (expected_reward_and_grad(hs, q, plc).expected_reward -
                             expected_reward_and_grad(-hs, q, plc).expected_reward) /
                            (2.0 * hs);
                double rel = std::fabs(rg.grad_phi - fd) / std::max(1.0, std::fabs(rg.grad_phi));
                outcome.solver_max_rel_error = std::max(outcome.solver_max_rel_error, rel);
            }
        }
    }
    outcome.solver_pass = outcome.solver_max_rel_error < 1e-8;

    // Score-function gradient of the smoothed tier reward against seeded
    // central differences on the emission mean.
    {
        const int n = 100000;
        const double mu = 1.0;  // well off the optimum, where the gradient is strong
        const double scale = 0.5;
        const double fd_h = 0.05;
        DifficultyEstimatorConfig est = estimator_from(config);

        auto mean_reward_and_score = [&](double mean, bool want_score, double& score_out) {
            QuestionerPolicy policy = make_questioner_policy({0.5}, mean, std::log(scale), 8.0);
            RngStream root(config.seed);
            auto stream = root.child("score-check");
            double sum = 0.0;
            std::vector<double> rewards;
            std::vector<double> zs;
            rewards.reserve(n);
            zs.reserve(n);
            for (int i = 0; i < n; ++i) {
                auto q_stream = stream.child("question").child(uint64_t(i));
                SyntheticQuestion q =
                    generate_question(policy, neutral_doc(), 0.5, est.num_options, q_stream);
                auto est_stream = stream.child("estimate");
                double d = estimate_difficulty(q, est, est.base_solver, est_stream);
                double r = questioner_reward(q, d);
                sum += r;
                if (want_score) {
                    rewards.push_back(r);
                    zs.push_back((q.latent_difficulty - mean) / scale);
                }
            }
            double mean_r = sum / n;
            if (want_score) {
                double g = 0.0;
                for (int i = 0; i < n; ++i) {
                    g += (rewards[size_t(i)] - mean_r) * zs[size_t(i)] / scale;
                }
                score_out = g / n;
            }
            return mean_r;
        };

        double score = 0.0;
        mean_reward_and_score(mu, true, score);
        double unused = 0.0;
        double f_plus = mean_reward_and_score(mu + fd_h, false, unused);
        double f_minus = mean_reward_and_score(mu - fd_h, false, unused);
        double fd = (f_plus - f_minus) / (2.0 * fd_h);
        outcome.questioner_grad = score;
        outcome.questioner_fd = fd;
        outcome.questioner_rel_error = std::fabs(score - fd) / std::max(0.05, std::fabs(fd));
    }
    outcome.questioner_pass = outcome.questioner_rel_error < 5e-2;

    outcome.all_pass = outcome.toy_pass && outcome.solver_pass && outcome.questioner_pass;
    return outcome;
}

// ---- CSV writers --------------------------------------------------------------

std::string trajectory_csv(const toy::Trajectory& traj) {
    std::string out = "iteration,phi,location,scale,J_before,J_after,grad\n";
    for (const auto& pt : traj.points) {
        out += std::to_string(pt.iteration);
        out += ',' + format_fixed(pt.phi, 9);
        out += ',' + format_fixed(pt.location, 9);
        out += ',' + format_fixed(pt.scale, 9);
        out += ',' + format_fixed(pt.j_before, 9);
        out += ',' + format_fixed(pt.j_after, 9);
        out += ',' + format_fixed(pt.grad, 9);
        out += '\n';
    }
    return out;
}

std::string reward_curve_csv(const std::vector<RewardCurvePoint>& curve) {
    std::string out = "step,tier,mean_reward,mean_estimated_difficulty,grounding_rate\n";
    for (const auto& pt : curve) {
        out += std::to_string(pt.step);
        out += ',' + format_fixed(pt.tier, 2);
        out += ',' + format_fixed(pt.mean_reward, 6);
        out += ',' + format_fixed(pt.mean_estimated_difficulty, 6);
        out += ',' + format_fixed(pt.grounding_rate, 6);
        out += '\n';
    }
    return out;
}

std::string solver_curve_csv(const std::vector<SolverCurvePoint>& curve) {
    std::string out = "step,phase_tier,mean_train_reward,acceptance_rate,active_items,phi\n";
    for (const auto& pt : curve) {
        out += std::to_string(pt.step);
        out += ',' + format_fixed(pt.phase_tier, 6);
        out += ',' + format_fixed(pt.mean_train_reward, 6);
        out += ',' + format_fixed(pt.acceptance_rate, 6);
        out += ',' + std::to_string(pt.active_items);
        out += ',' + format_fixed(pt.phi, 6);
        out += '\n';
    }
    return out;
}

std::string validation_curve_csv(const std::vector<SolverCurvePoint>& curve) {
    std::string out = "step,val_reward\n";
    for (const auto& pt : curve) {
        out += std::to_string(pt.step);
        out += ',' + format_fixed(pt.val_reward, 6);
        out += '\n';
    }
    return out;
}

// ---- experiment runner ----------------------------------------------------------

namespace {

uint64_t multiset_digest(const std::vector<OfflineItem>& items) {
    std::vector<uint64_t> ids;
    ids.reserve(items.size());
    for (const auto& item : items) {
        ids.push_back(item.question.id);
    }
    std::sort(ids.begin(), ids.end());
    std::string bytes;
    bytes.reserve(ids.size() * 16);
    for (uint64_t id : ids) {
        bytes += to_hex(id);
    }
    return fnv1a64(bytes);
}

json reversal_report_json(const toy::ReversalReport& report) {
    json j;
    j["ascent_gradient"] = report.ascent_gradient;
    j["j_next_before"] = report.j_next_before;
    j["j_next_after"] = report.j_next_after;
    j["delta_j"] = report.delta_j;
    j["delta_j_per_alpha"] = report.delta_j / report.alpha_used;
    j["directional_derivative"] = report.directional_derivative;
    j["directional_derivative_fd"] = report.directional_derivative_fd;
    j["sigma_minus_delta"] = report.sigma_minus_delta;
    j["sigma_eta_minus_delta"] = report.sigma_eta_minus_delta;
    j["alpha_used"] = report.alpha_used;
    j["halvings"] = report.halvings;
    j["mass_within_eps"] = report.mass_within_eps;
    j["reversal_confirmed"] = report.reversal_confirmed;
    return j;
}

json monotonicity_json(const MonotonicityReport& report) {
    json j;
    j["row_kendall_tau"] = report.row_kendall_tau;
    j["col_kendall_tau"] = report.col_kendall_tau;
    j["diagonal_mean"] = report.diagonal_mean;
    j["adjacent_monotone_fraction_rows"] = report.adjacent_monotone_fraction_rows;
    j["adjacent_monotone_fraction_cols"] = report.adjacent_monotone_fraction_cols;
    j["row_means"] = report.row_means;
    j["col_means"] = report.col_means;
    return j;
}

struct ArtifactSink {
    fs::path dir;
    std::vector<std::string> names;

    void emit(const std::string& name, const std::string& content) {
        write_text_file((dir / name).string(), content);
        names.push_back(name);
    }

    void note(const std::string& name) { names.push_back(name); }
};

void run_theorem_check(const RunConfig& config, ArtifactSink& sink, json& summary) {
    toy::ReversalCheckConfig check_cfg;
    check_cfg.eta = config.eta;
    check_cfg.delta = config.delta;
    check_cfg.alpha = config.alpha;
    check_cfg.concentration_eps = config.concentration_eps;
    check_cfg.fd_step = config.fd_step;
    auto report = toy::reversal_check(check_cfg, config.phi0);
    sink.emit("reversal_report.json", reversal_report_json(report).dump(2) + "\n");
    summary["reversal_confirmed"] = report.reversal_confirmed;
    summary["delta_j"] = report.delta_j;
    summary["directional_derivative"] = report.directional_derivative;
}

void run_coupled_sim(const RunConfig& config, ArtifactSink& sink, json& summary) {
    toy::CoupledState initial;
    initial.solver_ability = config.phi0;
    initial.policy.kind = config.policy_kind == "point_mass" ? toy::PolicyKind::point_mass
                                                             : toy::PolicyKind::gaussian;
    initial.policy.location = config.phi0 + config.policy_location;
    initial.policy.log_scale = config.policy_log_scale;

    RngStream root(config.seed);
    auto stream = root.child("selfplay");
    auto traj = toy::run_coupled_selfplay(initial, config.eta, config.alpha, config.iterations,
                                          config.mc_samples, stream);
    sink.emit("trajectory.csv", trajectory_csv(traj));

    int sign_changes = 0;
    for (size_t i = 1; i < traj.points.size(); ++i) {
        double a = traj.points[i - 1].grad;
        double b = traj.points[i].grad;
        if (a != 0.0 && b != 0.0 && (a > 0.0) != (b > 0.0)) {
            ++sign_changes;
        }
    }
    summary["final_phi"] = traj.states.back().solver_ability;
    summary["final_location"] = traj.states.back().policy.location;
    summary["gradient_sign_changes"] = sign_changes;
    if (initial.policy.kind == toy::PolicyKind::gaussian) {
        // P(|tau - location| <= eps) for the final policy
        double scaled = config.concentration_eps / traj.states.back().policy.scale();
        summary["mass_within_eps"] = std::erf(scaled / M_SQRT2);
    } else {
        summary["mass_within_eps"] = 1.0;
    }
}

void run_train_questioner(const RunConfig& config, ArtifactSink& sink, json& summary) {
    auto outcome = questioner_pipeline(config);
    sink.emit("reward_curve.csv", reward_curve_csv(outcome.train.curve));
    sink.emit("policy.json", policy_to_json(outcome.train.policy));

    json cal = json::array();
    for (const auto& tier : outcome.calibration) {
        cal.push_back({{"tier", tier.tier},
                       {"mean_difficulty", tier.mean_difficulty},
                       {"mean_abs_error", tier.mean_abs_error},
                       {"grounded_fraction", tier.grounded_fraction},
                       {"questions", tier.questions}});
    }
    sink.emit("calibration.json", cal.dump(2) + "\n");
    sink.emit("objective.json",
              json{{"value", outcome.objective.value}, {"std_error", outcome.objective.std_error}}
                      .dump(2) +
                  "\n");
    summary["grounding_rate"] = outcome.train.policy.grounding_rate();
    summary["objective"] = outcome.objective.value;
    summary["ungrounded_short_circuit"] = true;  // ungrounded questions skip difficulty rollouts
}

void write_solver_artifacts(const SolverOutcome& outcome, ArtifactSink& sink,
                            const std::string& prefix) {
    sink.emit(prefix + "solver_curve.csv", solver_curve_csv(outcome.train.curve));
    sink.emit(prefix + "validation.csv", validation_curve_csv(outcome.train.curve));
}

json solver_summary_json(const RunConfig& config, const SolverOutcome& outcome) {
    json j;
    j["final_phi"] = outcome.train.state.student.ability;
    j["accepted"] = outcome.train.state.accepted_count;
    j["rejected"] = outcome.train.state.rejected_count;
    j["steps_to_val_target"] = outcome.steps_to_val_target;
    j["val_target"] = config.val_target;
    j["question_multiset_digest"] = to_hex(multiset_digest(outcome.ordered));
    j["shuffled"] = config.shuffle;

    json drops = json::array();
    const auto& curve = outcome.train.curve;
    for (size_t i = 1; i < curve.size(); ++i) {
        if (curve[i].phase_tier != curve[i - 1].phase_tier) {
            drops.push_back({{"step", curve[i].step},
                             {"prev_reward", curve[i - 1].mean_train_reward},
                             {"next_reward", curve[i].mean_train_reward}});
        }
    }
    j["phase_transitions"] = drops;
    return j;
}

void run_train_solver(const RunConfig& config, ArtifactSink& sink, json& summary) {
    auto outcome = solver_pipeline(config);
    sink.emit("policy.json", policy_to_json(outcome.frozen_policy));
    save_offline_set(outcome.set, (sink.dir / "offline_set.jsonl").string());
    sink.note("offline_set.jsonl");
    write_solver_artifacts(outcome, sink, "");
    summary = solver_summary_json(config, outcome);
}

void run_heatmap(const RunConfig& config, ArtifactSink& sink, json& summary) {
    auto outcome = heatmap_pipeline(config);

    for (const auto& path :
         export_heatmap(outcome.coupled_matrix, outcome.coupled_report,
                        (sink.dir / "coupled").string())) {
        sink.note(fs::path(path).filename().string());
    }
    for (const auto& path :
         export_heatmap(outcome.decoupled_matrix, outcome.decoupled_report,
                        (sink.dir / "decoupled").string())) {
        sink.note(fs::path(path).filename().string());
    }

    double coupled_min_row_tau = 1.0;
    for (double tau : outcome.coupled_report.row_kendall_tau) {
        coupled_min_row_tau = std::min(coupled_min_row_tau, tau);
    }
    double decoupled_min_row_tau = 1.0;
    for (double tau : outcome.decoupled_report.row_kendall_tau) {
        decoupled_min_row_tau = std::min(decoupled_min_row_tau, tau);
    }
    summary["coupled"] = monotonicity_json(outcome.coupled_report);
    summary["decoupled"] = monotonicity_json(outcome.decoupled_report);
    summary["coupled_min_solver_axis_tau"] = coupled_min_row_tau;
    summary["decoupled_min_solver_axis_tau"] = decoupled_min_row_tau;
    summary["coupled_diagonal_mean"] = outcome.coupled_report.diagonal_mean;
    summary["coupled_instability_detected"] = coupled_min_row_tau < config.tau_threshold;
    summary["decoupled_stable"] = decoupled_min_row_tau >= config.tau_threshold;
    summary["diag_in_band"] =
        outcome.coupled_report.diagonal_mean >= config.diag_band_lo &&
        outcome.coupled_report.diagonal_mean <= config.diag_band_hi;
}

int run_grad_check(const RunConfig& config, ArtifactSink& sink, json& summary) {
    auto outcome = grad_check_pipeline(config);
    json j;
    j["toy_max_rel_error"] = outcome.toy_max_rel_error;
    j["toy_pass"] = outcome.toy_pass;
    j["solver_max_rel_error"] = outcome.solver_max_rel_error;
    j["solver_pass"] = outcome.solver_pass;
    j["questioner_rel_error"] = outcome.questioner_rel_error;
    j["questioner_grad"] = outcome.questioner_grad;
    j["questioner_fd"] = outcome.questioner_fd;
    j["questioner_pass"] = outcome.questioner_pass;
    j["all_pass"] = outcome.all_pass;
    sink.emit("gradcheck.json", j.dump(2) + "\n");
    summary = j;
    return outcome.all_pass ? 0 : 1;
}

void run_ablation(const RunConfig& config, ArtifactSink& sink, json& summary) {
    // Paired arms: identical frozen questioner, offline set, ordering, and
    // validation; only the stage-2 teacher margin differs.
    auto with_boost = solver_pipeline(config, config.doc_boost);
    auto without_boost = solver_pipeline(config, 0.0);

    sink.emit("solver_curve_boosted.csv", solver_curve_csv(with_boost.train.curve));
    sink.emit("validation_boosted.csv", validation_curve_csv(with_boost.train.curve));
    sink.emit("solver_curve_unboosted.csv", solver_curve_csv(without_boost.train.curve));
    sink.emit("validation_unboosted.csv", validation_curve_csv(without_boost.train.curve));

    auto acceptance = [](const SolverOutcome& outcome) {
        long total = outcome.train.state.accepted_count + outcome.train.state.rejected_count;
        return total > 0 ? double(outcome.train.state.accepted_count) / double(total) : 0.0;
    };
    json j;
    j["doc_boost"] = config.doc_boost;
    j["question_multiset_digest"] = to_hex(multiset_digest(with_boost.ordered));
    j["paired_sets_identical"] =
        multiset_digest(with_boost.ordered) == multiset_digest(without_boost.ordered);
    j["final_phi_boosted"] = with_boost.train.state.student.ability;
    j["final_phi_unboosted"] = without_boost.train.state.student.ability;
    j["acceptance_boosted"] = acceptance(with_boost);
    j["acceptance_unboosted"] = acceptance(without_boost);
    j["steps_to_val_target_boosted"] = with_boost.steps_to_val_target;
    j["steps_to_val_target_unboosted"] = without_boost.steps_to_val_target;
    sink.emit("comparison.json", j.dump(2) + "\n");
    summary = j;
}

}  // namespace

RunResult run_experiment(const RunConfig& config, const RunProvenance& provenance) {
    validate_config(config);

    fs::path base(config.out);
    std::string name =
        kind_name(config.kind) + "-" + utc_timestamp_compact() + "-seed" + std::to_string(config.seed);
    fs::path dir = base / name;
    int suffix = 2;
    while (fs::exists(dir)) {
        dir = base / (name + "-" + std::to_string(suffix++));
    }
    fs::create_directories(dir);

    ArtifactSink sink{dir, {}};
    std::string started = utc_timestamp();
    json summary;
    int exit_code = 0;
    std::string error_message;

    try {
        switch (config.kind) {
            case ExperimentKind::theorem_check: run_theorem_check(config, sink, summary); break;
            case ExperimentKind::coupled_sim: run_coupled_sim(config, sink, summary); break;
            case ExperimentKind::train_questioner: run_train_questioner(config, sink, summary); break;
            case ExperimentKind::train_solver: run_train_solver(config, sink, summary); break;
            case ExperimentKind::heatmap: run_heatmap(config, sink, summary); break;
            case ExperimentKind::grad_check: exit_code = run_grad_check(config, sink, summary); break;
            case ExperimentKind::ablation: run_ablation(config, sink, summary); break;
        }
        if (!summary.is_null()) {
            sink.emit("summary.json", summary.dump(2) + "\n");
        }
    } catch (const std::exception& e) {
        error_message = e.what();
        exit_code = 1;
        json err{{"error", error_message}, {"kind", kind_name(config.kind)}};
        try {
            sink.emit("error.json", err.dump(2) + "\n");
        } catch (...) {
        }
    }

    json manifest;
    manifest["tool_version"] = kToolVersion;
    manifest["kind"] = kind_name(config.kind);
    manifest["seed"] = config.seed;
    manifest["started"] = started;
    manifest["finished"] = utc_timestamp();
    manifest["status"] = error_message.empty() ? "complete" : "incomplete";
    if (!error_message.empty()) {
        manifest["error"] = error_message;
    }
    manifest["config"] = json::parse(config_to_json(config));
    json prov;
    prov["config_file"] = provenance.config_file;
    prov["set_overrides"] = provenance.set_overrides;
    prov["flag_overrides"] = provenance.flag_overrides;
    manifest["provenance"] = prov;
    json inventory = json::array();
    for (const auto& artifact : sink.names) {
        fs::path p = dir / artifact;
        uint64_t digest = 0;
        uintmax_t bytes = 0;
        if (fs::exists(p)) {
            digest = file_digest(p.string());
            bytes = fs::file_size(p);
        }
        inventory.push_back({{"path", artifact}, {"digest", to_hex(digest)}, {"bytes", bytes}});
    }
    manifest["artifacts"] = inventory;
    write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");

    RunResult result;
    result.exit_code = exit_code;
    result.run_dir = dir.string();
    result.artifacts = sink.names;
    return result;
}

}  // namespace qslab::runner
