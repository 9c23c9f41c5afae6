// Command-line front end: dataset generation, oracle rankings, architecture
// and hyperparameter searches, ablation sweeps, and trace reports.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.
// Environment: ADANAS_OUT_DIR prefixes relative output paths; ADANAS_WORKERS
// overrides the worker count from config files.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "adanas/harness.hpp"

namespace fs = std::filesystem;
using namespace adanas;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Relative output paths land under ADANAS_OUT_DIR when it is set. Inputs are
// always taken as given.
std::string resolve_out(const std::string& path) {
    if (path.empty()) return path;
    const char* base = std::getenv("ADANAS_OUT_DIR");
    if (!base || !*base || fs::path(path).is_absolute()) return path;
    return (fs::path(base) / path).string();
}

int env_workers(int fallback) {
    const char* raw = std::getenv("ADANAS_WORKERS");
    if (!raw || !*raw) return fallback;
    int v = 0;
    try {
        v = std::stoi(raw);
    } catch (const std::exception&) {
        throw std::invalid_argument("ADANAS_WORKERS must be an integer");
    }
    if (v < 1) throw std::invalid_argument("ADANAS_WORKERS must be positive");
    return v;
}

void write_text(const std::string& path, const std::string& text) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

bool hpo_method(const std::string& m) {
    return m == "dehb" || m == "bohb" || m == "adaptive-dehb" || m == "adaptive-bohb";
}

void print_records(const std::vector<RunRecord>& records) {
    for (const auto& r : records) {
        std::printf("seed %llu: acc %.4f, cost %.1f, refreshes %d",
                    static_cast<unsigned long long>(r.seed), r.accuracy, r.cost, r.refreshes);
        if (!r.arch.empty()) std::printf(", arch %s", r.arch.c_str());
        if (r.oracle_rank > 0) std::printf(", oracle rank %d", r.oracle_rank);
        std::printf("\n");
    }
}

struct SearchArgs {
    std::string config_path;
    std::string trace_override;
    bool with_oracle = false;
    int oracle_epochs = 10;
    std::vector<std::uint64_t> oracle_seeds{1, 2, 3};
    std::string cache_dir = "oracle-cache";
};

int run_search_like(const SearchArgs& args, bool want_hpo) {
    ExperimentConfig cfg = experiment_config_from_json(slurp(args.config_path));
    if (hpo_method(cfg.method) != want_hpo)
        throw std::invalid_argument("method '" + cfg.method + "' belongs to the " +
                                    (want_hpo ? "search" : "hpo") + " subcommand");
    if (!args.trace_override.empty()) cfg.out_path = args.trace_override;
    cfg.out_path = resolve_out(cfg.out_path);
    cfg.workers = env_workers(cfg.workers);

    OracleRanking oracle;
    bool ranked = false;
    if (args.with_oracle) {
        if (want_hpo) throw std::invalid_argument("oracle rankings only apply to searches");
        Dataset data = gen_blobs(cfg.data_spec, cfg.data_seed);
        SearchSpace space = builtin_space(cfg.space_id, cfg.data_spec.d, cfg.data_spec.classes);
        oracle = oracle_ranking(space, data, args.oracle_epochs, args.oracle_seeds,
                                resolve_out(args.cache_dir));
        ranked = true;
    }

    std::vector<RunRecord> records = run_experiment(cfg, ranked ? &oracle : nullptr);
    print_records(records);
    std::cout << report_csv(summarize(records));
    if (!cfg.out_path.empty()) std::cout << "trace appended to " << cfg.out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Subset-driven architecture and hyperparameter search on synthetic benchmarks"};
    app.require_subcommand(1);

    std::string gen_spec_path;
    std::string gen_out;
    std::uint64_t gen_seed = 1;
    auto* gen = app.add_subcommand("gen-data", "Generate a Gaussian-blob dataset directory");
    gen->add_option("spec", gen_spec_path, "JSON file with the blob parameters")->required();
    gen->add_option("--seed", gen_seed, "Generation seed");
    gen->add_option("--out", gen_out, "Output directory")->required();

    std::string orc_space = "oracle-27";
    std::string orc_data;
    int orc_epochs = 10;
    std::vector<std::uint64_t> orc_seeds{1, 2, 3};
    std::string orc_cache = "oracle-cache";
    auto* orc = app.add_subcommand("oracle", "Rank every architecture by from-scratch training");
    orc->add_option("space", orc_space, "Built-in space name")->required();
    orc->add_option("data", orc_data, "Dataset directory from gen-data")->required();
    orc->add_option("--epochs", orc_epochs, "Training epochs per architecture");
    orc->add_option("--seeds", orc_seeds, "Oracle training seeds");
    orc->add_option("--cache", orc_cache, "Ranking cache directory");

    SearchArgs search_args;
    auto* search = app.add_subcommand("search", "Run the architecture search once per seed");
    search->add_option("config", search_args.config_path, "Experiment config JSON")->required();
    search->add_option("--out", search_args.trace_override, "Trace path override");
    search->add_flag("--with-oracle", search_args.with_oracle,
                     "Rank found architectures against the exhaustive oracle");
    search->add_option("--oracle-epochs", search_args.oracle_epochs);
    search->add_option("--oracle-seeds", search_args.oracle_seeds);
    search->add_option("--cache", search_args.cache_dir, "Ranking cache directory");

    SearchArgs hpo_args;
    auto* hpo = app.add_subcommand("hpo", "Run the hyperparameter search once per seed");
    hpo->add_option("config", hpo_args.config_path, "Experiment config JSON")->required();
    hpo->add_option("--out", hpo_args.trace_override, "Trace path override");

    std::string abl_config;
    std::vector<double> abl_fractions{0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
    std::string abl_projection = "both";
    std::string abl_out = "ablation.csv";
    auto* abl = app.add_subcommand("ablate", "Sweep subset fractions and projection modes");
    abl->add_option("config", abl_config, "Experiment config JSON")->required();
    abl->add_option("--fractions", abl_fractions, "Subset fractions to sweep");
    abl->add_option("--projection", abl_projection, "Projection tuning data")
        ->check(CLI::IsMember({"subset", "full", "both"}));
    abl->add_option("--out", abl_out, "CSV output path");

    std::string rep_trace;
    std::string rep_out;
    auto* rep = app.add_subcommand("report", "Summarize a trace into the results table");
    rep->add_option("trace", rep_trace, "JSONL trace file")->required();
    rep->add_option("--out", rep_out, "Also write the CSV here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            BlobSpec spec = blob_spec_from_json(slurp(gen_spec_path));
            Dataset data = gen_blobs(spec, gen_seed);
            std::string dir = resolve_out(gen_out);
            save_dataset(dir, data);
            std::printf("wrote %s: train %d, val %d, test %d, d %d, classes %d\n", dir.c_str(),
                        data.train.n(), data.val.n(), data.test.n(), spec.d, spec.classes);
        } else if (orc->parsed()) {
            Dataset data = load_dataset(orc_data);
            SearchSpace space = builtin_space(orc_space, data.spec.d, data.spec.classes);
            OracleRanking ranking =
                oracle_ranking(space, data, orc_epochs, orc_seeds, resolve_out(orc_cache));
            std::vector<const OracleEntry*> by_rank;
            for (const auto& e : ranking.entries) by_rank.push_back(&e);
            std::sort(by_rank.begin(), by_rank.end(),
                      [](const OracleEntry* a, const OracleEntry* b) { return a->rank < b->rank; });
            for (const OracleEntry* e : by_rank)
                std::printf("%4d  %.4f  %s\n", e->rank, e->mean_test_acc,
                            arch_to_string(space, e->arch).c_str());
        } else if (search->parsed()) {
            return run_search_like(search_args, false);
        } else if (hpo->parsed()) {
            return run_search_like(hpo_args, true);
        } else if (abl->parsed()) {
            ExperimentConfig cfg = experiment_config_from_json(slurp(abl_config));
            cfg.workers = env_workers(cfg.workers);
            std::vector<bool> modes;
            if (abl_projection == "both")
                modes = {false, true};
            else
                modes = {abl_projection == "full"};
            std::vector<AblationRow> rows = ablate(cfg, abl_fractions, modes);
            std::string csv = ablation_csv(rows);
            std::cout << csv;
            std::string path = resolve_out(abl_out);
            if (!path.empty()) {
                write_text(path, csv);
                std::cout << "wrote " << path << "\n";
            }
        } else if (rep->parsed()) {
            std::vector<RunRecord> records = read_records(rep_trace);
            std::string csv = report_csv(summarize(records));
            std::cout << csv;
            if (!rep_out.empty()) write_text(resolve_out(rep_out), csv);
        }
        return 0;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
