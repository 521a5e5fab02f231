#include "qslab/config.hpp"
#include "qslab/io.hpp"
#include "qslab/runner.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
    bool shuffle = false;
    bool shuffle_given = false;
};

void attach_common(CLI::App* cmd, CommonOpts& opts, bool with_shuffle) {
    cmd->add_option("--config", opts.config_path, "JSON config file; flags override its values");
    cmd->add_option("--set", opts.sets, "Override a config field, e.g. --set gamma=0.2")
        ->take_all();
    cmd->add_option("--seed", opts.seed, "Run seed")->each([&opts](const std::string&) {
        opts.seed_given = true;
    });
    cmd->add_option("--out", opts.out, "Output directory for run folders");
    if (with_shuffle) {
        cmd->add_flag("--shuffle", opts.shuffle, "Random order instead of the curriculum")
            ->each([&opts](const std::string&) { opts.shuffle_given = true; });
    }
}

int run_kind(qslab::runner::ExperimentKind kind, const CommonOpts& opts) {
    qslab::runner::ConfigInputs inputs;
    inputs.config_path = opts.config_path;
    inputs.set_overrides = opts.sets;
    inputs.has_seed = opts.seed_given;
    inputs.seed = opts.seed;
    inputs.out = opts.out;
    inputs.has_shuffle = opts.shuffle_given;
    inputs.shuffle = opts.shuffle;

    auto config = qslab::runner::resolve_config(kind, inputs);
    qslab::runner::RunProvenance provenance;
    provenance.config_file = opts.config_path;
    provenance.set_overrides = opts.sets;
    if (opts.seed_given) {
        provenance.flag_overrides.push_back("seed=" + std::to_string(opts.seed));
    }
    if (!opts.out.empty()) {
        provenance.flag_overrides.push_back("out=" + opts.out);
    }
    if (opts.shuffle_given) {
        provenance.flag_overrides.push_back(std::string("shuffle=") +
                                            (opts.shuffle ? "true" : "false"));
    }
    auto result = qslab::runner::run_experiment(config, provenance);
    std::cout << "run dir: " << result.run_dir << "\n";
    for (const auto& artifact : result.artifacts) {
        std::cout << "  " << artifact << "\n";
    }
    std::cout << (result.exit_code == 0 ? "status: ok" : "status: failed") << "\n";
    return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qslab - questioner/solver training-dynamics laboratory"};
    app.require_subcommand(1);

    struct Sub {
        qslab::runner::ExperimentKind kind;
        CLI::App* cmd;
        CommonOpts opts;
    };
    std::vector<Sub> subs;
    auto add_kind = [&](qslab::runner::ExperimentKind kind, const char* help, bool shuffle) {
        subs.push_back({kind, app.add_subcommand(qslab::runner::kind_name(kind), help), {}});
        attach_common(subs.back().cmd, subs.back().opts, shuffle);
    };

    using EK = qslab::runner::ExperimentKind;
    subs.reserve(8);
    add_kind(EK::theorem_check,
             "Verify the gradient-direction reversal of coupled boundary-seeking", false);
    add_kind(EK::coupled_sim, "Simulate the 1-D coupled questioner/solver loop", false);
    add_kind(EK::train_questioner, "Train the tier-conditioned questioner", false);
    add_kind(EK::train_solver, "Curriculum-train the solver on a frozen questioner", true);
    add_kind(EK::heatmap, "Cross-iteration accuracy matrices for coupled and decoupled runs",
             false);
    add_kind(EK::grad_check, "Gradient implementations against finite differences", false);
    add_kind(EK::ablation, "Paired solver runs with and without the privileged teacher margin",
             true);

    // corpus utilities operate on plain files, no run directory
    std::string corpus_file;
    uint64_t corpus_seed = 0;
    int corpus_size = 1000;
    double offset_min = 0.0;
    double offset_max = 0.0;
    auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic corpus file");
    gen->add_option("file", corpus_file, "Destination path")->required();
    gen->add_option("--seed", corpus_seed, "Corpus seed");
    gen->add_option("--size", corpus_size, "Number of documents");
    gen->add_option("--offset-min", offset_min, "Lower difficulty offset");
    gen->add_option("--offset-max", offset_max, "Upper difficulty offset");

    std::string stats_file;
    auto* stats = app.add_subcommand("corpus-stats", "Summarize a corpus file");
    stats->add_option("file", stats_file, "Corpus path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            auto corpus = qslab::runner::generate_synthetic_corpus(corpus_size, offset_min,
                                                                   offset_max, corpus_seed);
            qslab::runner::save_corpus(corpus, corpus_file);
            std::cout << "wrote " << corpus.size() << " documents to " << corpus_file << "\n";
            return 0;
        }
        if (stats->parsed()) {
            auto corpus = qslab::runner::load_corpus(stats_file);
            auto summary = qslab::runner::corpus_stats(corpus);
            std::string text = qslab::runner::corpus_stats_json(summary);
            std::cout << text;
            qslab::write_text_file(stats_file + ".stats.json", text);
            return 0;
        }
        for (auto& sub : subs) {
            if (sub.cmd->parsed()) {
                return run_kind(sub.kind, sub.opts);
            }
        }
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 1;
}
