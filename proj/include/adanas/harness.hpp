#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "adanas/bilevel.hpp"
#include "adanas/multifid.hpp"
#include "adanas/supernet.hpp"

namespace adanas {

// ---------------------------------------------------------------------------
// Synthetic datasets

// Gaussian class clusters. When centers is empty, class c sits at the
// hypercube corner whose coordinate j is +sep if bit j of c is set and -sep
// otherwise; an explicit centers matrix (classes x d) overrides that.
struct BlobSpec {
    int n = 1000;     // pool size, split into the two search-time halves
    int test_n = 200; // held-out rows, always clean
    int d = 4;
    int classes = 2;
    double sep = 1.5;
    double spread = 1.0;
    double noise = 0.0; // label-flip rate applied to the train half only
    std::vector<std::vector<double>> centers;

    void validate() const;
};

// The train half is the selector's ground set; labels there may be flipped
// (train_noisy marks which rows were). The validation and test splits always
// keep clean labels.
struct Dataset {
    Batch train;
    Batch val;
    Batch test;
    std::vector<char> train_noisy;
    BlobSpec spec;
    std::uint64_t seed = 0;
};

// Draws the pool with round-robin class labels, splits it 50/50 into
// train/val stratified by class (per-class counts balanced within one), then
// flips the labels of round(noise * |train|) uniformly chosen train rows to a
// different class. Deterministic per seed.
Dataset gen_blobs(const BlobSpec& spec, std::uint64_t seed);

// JSON object with the BlobSpec fields, all optional. Throws
// std::invalid_argument on malformed input.
BlobSpec blob_spec_from_json(const std::string& text);

// Plain-text rows under a "label,f1..fd" header.
void write_batch_csv(std::ostream& out, const Batch& b);
Batch read_batch_csv(std::istream& in);

// Directory layout: train.csv / val.csv / test.csv plus meta.json carrying
// the generation spec, seed, and the noisy-row flags.
void save_dataset(const std::string& dir, const Dataset& data);
Dataset load_dataset(const std::string& dir);

// ---------------------------------------------------------------------------
// Oracle rankings

struct OracleEntry {
    Architecture arch;
    double mean_test_acc = 0.0;
    int rank = 0; // 1 is best; ties resolve toward the earlier architecture
};

struct OracleRanking {
    std::vector<OracleEntry> entries; // enumeration order
    std::uint64_t content_hash = 0;

    int rank_of(const Architecture& a) const; // 0 when the space lacks it
};

// Content address of a ranking request: the space definition, the dataset's
// generation spec and seed, the training budget, and the oracle seeds.
std::uint64_t oracle_hash(const SearchSpace& space, const Dataset& data, int epochs,
                          const std::vector<std::uint64_t>& oracle_seeds);

// Trains every architecture in the space from scratch per oracle seed on the
// pooled train+val rows and ranks by mean test accuracy. Spaces above 200
// architectures are rejected. A nonempty cache_dir memoizes the result under
// its content hash; a cache hit skips all training and reloads the ranking
// exactly.
OracleRanking oracle_ranking(const SearchSpace& space, const Dataset& data, int epochs,
                             const std::vector<std::uint64_t>& oracle_seeds,
                             const std::string& cache_dir = "");

// ---------------------------------------------------------------------------
// Experiment runner

// One trained run. Search methods fill arch; HPO methods fill config (unit
// coordinates of the best configuration). accuracy is measured on the test
// split after from-scratch training; cost counts example gradients spent
// searching (final training excluded). oracle_rank is 0 when no ranking was
// supplied. A record with ok == false carries the failure text in error.
struct RunRecord {
    std::string method;
    std::uint64_t seed = 0;
    std::string arch;
    std::vector<double> config;
    int oracle_rank = 0;
    double accuracy = 0.0;
    double cost = 0.0;
    int refreshes = 0;
    double fraction = 1.0;
    bool ok = true;
    std::string error;

    bool operator==(const RunRecord&) const = default;
};

std::string record_to_json(const RunRecord& r);
RunRecord record_from_json(const std::string& line);

// Appends one line per record; creates the file when missing.
void append_records(const std::string& path, const std::vector<RunRecord>& records);

// Reads every parseable line; malformed or truncated lines are skipped with a
// warning on stderr.
std::vector<RunRecord> read_records(const std::string& path);

// The width/depth/lr box the HPO methods tune over by default.
ConfigSpace default_hpo_space();

// Methods: darts-pt, random, fl, entropy, glister, gradmatch (architecture
// search); dehb, bohb, adaptive-dehb, adaptive-bohb (hyperparameter search).
struct ExperimentConfig {
    std::string space_id = "oracle-27"; // node width binds to the data dimension
    BlobSpec data_spec;
    std::uint64_t data_seed = 1;
    std::string method = "darts-pt";
    BilevelConfig bilevel;
    AdaptiveTrainerConfig trainer;
    ConfigSpace hpo_space = default_hpo_space();
    int hpo_budget = 9; // full-fidelity epoch budget R
    int hpo_eta = 3;
    int hpo_generations = 3; // evolution sweeps per budget level
    int hpo_iterations = 3;  // bracket cycles
    int final_epochs = 25;   // from-scratch budget for found architectures
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::uint64_t master_seed = 0;
    std::string out_path; // append records here when nonempty
    int workers = 1;

    void validate() const;
};

// Parses a JSON config file (all keys optional, defaults above). Throws
// std::invalid_argument on malformed input or unrecognized enum values.
ExperimentConfig experiment_config_from_json(const std::string& text);

// Runs the configured method once per seed and returns one record per seed in
// seed order. Cells run on up to cfg.workers threads; records are appended to
// cfg.out_path (when set) by the caller thread only. The search itself is
// seeded with the cell's seed, so results do not depend on the worker count.
// darts-pt runs the same loop as the subset methods pinned to the full train
// split with no refreshes. A supplied oracle fills oracle_rank.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg,
                                      const OracleRanking* oracle = nullptr);

// ---------------------------------------------------------------------------
// Summaries

struct ReportRow {
    std::string method;
    int runs = 0;
    double acc_mean = 0.0;
    double acc_std = 0.0; // sample standard deviation (n-1); 0 for one run
    double cost_mean = 0.0;
    double cost_ratio = 1.0; // baseline mean cost / this row's mean cost
    double pct_data = 100.0;
};

// Groups usable records by method (rows sorted by method name). The cost
// baseline is darts-pt when present, otherwise the row with the largest data
// fraction. Order of the input records never changes the result. Throws when
// no record is usable.
std::vector<ReportRow> summarize(const std::vector<RunRecord>& records);

// method,runs,acc_mean,acc_std,cost_mean,cost_ratio,pct_data with the
// accuracy and ratio columns rounded to two decimals.
std::string report_csv(const std::vector<ReportRow>& rows);

struct AblationRow {
    double fraction = 0.0;
    bool project_on_full = false;
    int runs = 0;
    double acc_mean = 0.0;
    double acc_std = 0.0;
    double cost_mean = 0.0;
    bool ok = true;
    std::string note;
};

// Sweeps subset fraction x projection mode over run_experiment with the base
// config's method and seeds. A row whose runs fail is marked failed and the
// sweep proceeds; per-row records are not appended anywhere.
std::vector<AblationRow> ablate(const ExperimentConfig& base, const std::vector<double>& fractions,
                                const std::vector<bool>& projection_modes);

std::string ablation_csv(const std::vector<AblationRow>& rows);

} // namespace adanas
