#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "adanas/harness.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace adanas;
namespace fs = std::filesystem;

namespace {

BlobSpec easy_spec(int n = 400, int d = 3, double noise = 0.0) {
    BlobSpec s;
    s.n = n;
    s.test_n = 200;
    s.d = d;
    s.classes = 2;
    s.sep = 2.0;
    s.spread = 0.5;
    s.noise = noise;
    return s;
}

std::vector<int> class_counts(const std::vector<int>& y, int classes) {
    std::vector<int> counts(static_cast<std::size_t>(classes), 0);
    for (int c : y) counts[static_cast<std::size_t>(c)]++;
    return counts;
}

// Per-class train centroids, then nearest-centroid classification of b.
double centroid_accuracy(const Dataset& data) {
    int d = data.spec.d;
    int classes = data.spec.classes;
    std::vector<std::vector<double>> centroid(static_cast<std::size_t>(classes),
                                              std::vector<double>(static_cast<std::size_t>(d), 0.0));
    std::vector<int> counts = class_counts(data.train.y, classes);
    for (int i = 0; i < data.train.n(); ++i)
        for (int j = 0; j < d; ++j)
            centroid[static_cast<std::size_t>(data.train.y[static_cast<std::size_t>(i)])]
                    [static_cast<std::size_t>(j)] += data.train.X.at(i, j);
    for (int c = 0; c < classes; ++c)
        for (int j = 0; j < d; ++j)
            centroid[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] /=
                static_cast<double>(counts[static_cast<std::size_t>(c)]);

    int hits = 0;
    for (int i = 0; i < data.test.n(); ++i) {
        int best = 0;
        double best_dist = 0.0;
        for (int c = 0; c < classes; ++c) {
            double dist = 0.0;
            for (int j = 0; j < d; ++j) {
                double delta = data.test.X.at(i, j) -
                               centroid[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
                dist += delta * delta;
            }
            if (c == 0 || dist < best_dist) {
                best_dist = dist;
                best = c;
            }
        }
        if (best == data.test.y[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.test.n());
}

fs::path fresh_dir(const std::string& leaf) {
    fs::path p = fs::temp_directory_path() / "adanas-harness-tests" / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

SearchSpace one_edge_space(std::vector<OpKind> ops, int width) {
    SearchSpace s;
    s.name = "probe";
    s.nodes = 2;
    s.width = width;
    s.classes = 2;
    s.edges = {SpaceEdge{0, 1, std::move(ops)}};
    s.validate();
    return s;
}

// A small but real search setup; individual tests tighten or loosen knobs.
ExperimentConfig small_search(const std::string& method) {
    ExperimentConfig cfg;
    cfg.method = method;
    cfg.data_spec = easy_spec(160, 3);
    cfg.data_spec.test_n = 100;
    cfg.bilevel.epochs = 4;
    cfg.bilevel.subset_period_epochs = 2;
    cfg.bilevel.fraction = 0.3;
    cfg.bilevel.batch = 32;
    cfg.bilevel.projection_epochs = 2;
    cfg.bilevel.entropy_proxy_epochs = 2;
    cfg.bilevel.glister_rounds = 3;
    cfg.final_epochs = 5;
    cfg.seeds = {11, 12};
    return cfg;
}

RunRecord sample_record() {
    RunRecord r;
    r.method = "glister";
    r.seed = 0xdeadbeefcafe1234ull;
    r.arch = "linear|zero|linear_nonlin";
    r.config = {0.25, 1.0, 0.0};
    r.oracle_rank = 7;
    r.accuracy = 0.9375;
    r.cost = 12345.678;
    r.refreshes = 9;
    r.fraction = 0.1;
    r.ok = false;
    r.error = "exploded; with, punctuation";
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// gen_blobs

TEST_CASE("blob splits are balanced, disjoint halves of the pool") {
    BlobSpec spec = easy_spec(401, 3);
    Dataset data = gen_blobs(spec, 5);
    CHECK(data.train.n() + data.val.n() == 401);
    CHECK(data.test.n() == 200);
    auto tc = class_counts(data.train.y, 2);
    auto vc = class_counts(data.val.y, 2);
    CHECK(std::abs(tc[0] - tc[1]) <= 1);
    CHECK(std::abs(vc[0] - vc[1]) <= 1);
    auto xc = class_counts(data.test.y, 2);
    CHECK(xc[0] == 100);
    CHECK(xc[1] == 100);
    CHECK(data.train_noisy.size() == static_cast<std::size_t>(data.train.n()));
    for (char f : data.train_noisy) CHECK(f == 0);
}

TEST_CASE("blob generation is deterministic per seed") {
    BlobSpec spec = easy_spec();
    Dataset a = gen_blobs(spec, 42);
    Dataset b = gen_blobs(spec, 42);
    CHECK(a.train.X.v == b.train.X.v);
    CHECK(a.train.y == b.train.y);
    CHECK(a.val.X.v == b.val.X.v);
    CHECK(a.test.X.v == b.test.X.v);
    Dataset c = gen_blobs(spec, 43);
    CHECK(a.train.X.v != c.train.X.v);
}

TEST_CASE("clean well-separated blobs are nearly linearly classifiable") {
    Dataset data = gen_blobs(easy_spec(), 7);
    CHECK(centroid_accuracy(data) >= 0.99);
}

TEST_CASE("label noise flips the stated fraction of train rows only") {
    BlobSpec spec = easy_spec(400, 3, 0.2);
    Dataset noisy = gen_blobs(spec, 9);
    spec.noise = 0.0;
    Dataset clean = gen_blobs(spec, 9);

    int flips = 0;
    for (int i = 0; i < noisy.train.n(); ++i) {
        bool differs = noisy.train.y[static_cast<std::size_t>(i)] !=
                       clean.train.y[static_cast<std::size_t>(i)];
        CHECK(differs == (noisy.train_noisy[static_cast<std::size_t>(i)] != 0));
        if (differs) ++flips;
    }
    double measured = static_cast<double>(flips) / noisy.train.n();
    CHECK(measured == doctest::Approx(0.2).epsilon(0.02));
    // Feature draws and the clean splits are untouched by the noise stream.
    CHECK(noisy.train.X.v == clean.train.X.v);
    CHECK(noisy.val.y == clean.val.y);
    CHECK(noisy.test.y == clean.test.y);
}

TEST_CASE("explicit centers override the hypercube default") {
    BlobSpec spec;
    spec.n = 8;
    spec.test_n = 4;
    spec.d = 2;
    spec.classes = 2;
    spec.spread = 0.0;
    spec.centers = {{1.0, 2.0}, {-3.0, 4.0}};
    Dataset data = gen_blobs(spec, 1);
    for (int i = 0; i < data.train.n(); ++i) {
        const auto& c = spec.centers[static_cast<std::size_t>(data.train.y[static_cast<std::size_t>(i)])];
        CHECK(data.train.X.at(i, 0) == c[0]);
        CHECK(data.train.X.at(i, 1) == c[1]);
    }

    BlobSpec corners = spec;
    corners.centers.clear();
    corners.sep = 1.5;
    corners.classes = 4;
    corners.n = 8;
    Dataset hc = gen_blobs(corners, 1);
    for (int i = 0; i < hc.train.n(); ++i) {
        int c = hc.train.y[static_cast<std::size_t>(i)];
        CHECK(hc.train.X.at(i, 0) == ((c >> 0) & 1 ? 1.5 : -1.5));
        CHECK(hc.train.X.at(i, 1) == ((c >> 1) & 1 ? 1.5 : -1.5));
    }
}

TEST_CASE("blob spec rejects bad shapes and noise rates") {
    BlobSpec s = easy_spec();
    s.noise = 1.0;
    CHECK_THROWS_AS(gen_blobs(s, 1), std::invalid_argument);
    s.noise = -0.01;
    CHECK_THROWS_AS(gen_blobs(s, 1), std::invalid_argument);
    s = easy_spec();
    s.classes = 1;
    CHECK_THROWS_AS(gen_blobs(s, 1), std::invalid_argument);
    s = easy_spec();
    s.d = 0;
    CHECK_THROWS_AS(gen_blobs(s, 1), std::invalid_argument);
    s = easy_spec(1, 3);
    CHECK_THROWS_AS(gen_blobs(s, 1), std::invalid_argument);
    s = easy_spec();
    s.centers = {{0.0, 0.0, 0.0}};
    CHECK_THROWS_AS(gen_blobs(s, 1), std::invalid_argument);
    s.centers = {{0.0}, {1.0}};
    CHECK_THROWS_AS(gen_blobs(s, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// CSV and dataset files

TEST_CASE("batch csv round-trips bit-exactly") {
    Dataset data = gen_blobs(easy_spec(50, 4), 3);
    std::stringstream ss;
    write_batch_csv(ss, data.train);
    std::string text = ss.str();
    CHECK(text.rfind("label,f1,f2,f3,f4\n", 0) == 0);
    std::stringstream in(text);
    Batch back = read_batch_csv(in);
    CHECK(back.X.v == data.train.X.v);
    CHECK(back.y == data.train.y);
    CHECK(back.X.shape == data.train.X.shape);
}

TEST_CASE("batch csv rejects malformed input") {
    std::stringstream no_header("");
    CHECK_THROWS_AS(read_batch_csv(no_header), std::invalid_argument);
    std::stringstream bad_header("x,f1\n0,1.0\n");
    CHECK_THROWS_AS(read_batch_csv(bad_header), std::invalid_argument);
    std::stringstream short_row("label,f1,f2\n0,1.0\n");
    CHECK_THROWS_AS(read_batch_csv(short_row), std::invalid_argument);
    std::stringstream bad_number("label,f1\n0,oops\n");
    CHECK_THROWS_AS(read_batch_csv(bad_number), std::invalid_argument);
}

TEST_CASE("dataset directories round-trip") {
    BlobSpec spec = easy_spec(120, 3, 0.25);
    spec.centers = {{1.0, 0.0, -1.0}, {-1.0, 0.5, 1.0}};
    Dataset data = gen_blobs(spec, 77);
    fs::path dir = fresh_dir("dataset-roundtrip");
    save_dataset(dir.string(), data);
    Dataset back = load_dataset(dir.string());
    CHECK(back.train.X.v == data.train.X.v);
    CHECK(back.train.y == data.train.y);
    CHECK(back.val.X.v == data.val.X.v);
    CHECK(back.test.y == data.test.y);
    CHECK(back.train_noisy == data.train_noisy);
    CHECK(back.seed == data.seed);
    CHECK(back.spec.noise == data.spec.noise);
    CHECK(back.spec.centers == data.spec.centers);
    CHECK_THROWS_AS(load_dataset((dir / "missing").string()), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Oracle rankings

TEST_CASE("single-architecture space ranks it first") {
    Dataset data = gen_blobs(easy_spec(120, 3), 21);
    SearchSpace space = one_edge_space({OpKind::Linear}, 3);
    OracleRanking r = oracle_ranking(space, data, 8, {1, 2});
    REQUIRE(r.entries.size() == 1);
    CHECK(r.entries[0].rank == 1);
    CHECK(r.entries[0].mean_test_acc > 0.85);
    CHECK(r.rank_of(r.entries[0].arch) == 1);
    Architecture other{{5}};
    CHECK(r.rank_of(other) == 0);
}

TEST_CASE("the all-zero architecture ranks last on separable data") {
    Dataset data = gen_blobs(easy_spec(160, 3), 33);
    SearchSpace space = one_edge_space({OpKind::Zero, OpKind::Linear, OpKind::LinearNonlin}, 3);
    OracleRanking r = oracle_ranking(space, data, 4, {1, 2});
    REQUIRE(r.entries.size() == 3);

    std::vector<int> ranks;
    for (const auto& e : r.entries) ranks.push_back(e.rank);
    std::sort(ranks.begin(), ranks.end());
    CHECK(ranks == std::vector<int>{1, 2, 3});

    const OracleEntry& zero = r.entries[0];  // ops[0] is Zero
    CHECK(zero.rank == 3);
    CHECK(zero.mean_test_acc < 0.62);
    for (std::size_t i = 1; i < r.entries.size(); ++i)
        CHECK(r.entries[i].mean_test_acc > zero.mean_test_acc + 0.2);
}

TEST_CASE("oracle rankings cover and permute the whole enumeration") {
    Dataset data = gen_blobs(easy_spec(120, 3), 5);
    SearchSpace space = builtin_space("oracle-27", 3, 2);
    OracleRanking r = oracle_ranking(space, data, 1, {4});
    REQUIRE(r.entries.size() == 27);
    std::vector<int> ranks;
    for (const auto& e : r.entries) ranks.push_back(e.rank);
    std::sort(ranks.begin(), ranks.end());
    for (int i = 0; i < 27; ++i) CHECK(ranks[static_cast<std::size_t>(i)] == i + 1);
    auto archs = enumerate_architectures(space);
    for (std::size_t i = 0; i < archs.size(); ++i) CHECK(r.entries[i].arch == archs[i]);
}

TEST_CASE("oracle rejects non-enumerable spaces and bad arguments") {
    Dataset data = gen_blobs(easy_spec(60, 3), 2);
    SearchSpace big = builtin_space("nb201-toy", 3, 2);
    CHECK_THROWS_AS(oracle_ranking(big, data, 1, {1}), std::invalid_argument);
    SearchSpace space = one_edge_space({OpKind::Linear}, 3);
    CHECK_THROWS_AS(oracle_ranking(space, data, 0, {1}), std::invalid_argument);
    CHECK_THROWS_AS(oracle_ranking(space, data, 1, {}), std::invalid_argument);
}

TEST_CASE("oracle cache is content-addressed and actually read back") {
    Dataset data = gen_blobs(easy_spec(120, 3), 13);
    SearchSpace space = one_edge_space({OpKind::Zero, OpKind::Linear}, 3);
    fs::path dir = fresh_dir("oracle-cache");

    OracleRanking first = oracle_ranking(space, data, 2, {1, 2}, dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
    REQUIRE(files.size() == 1);

    OracleRanking second = oracle_ranking(space, data, 2, {1, 2}, dir.string());
    REQUIRE(second.entries.size() == first.entries.size());
    CHECK(second.content_hash == first.content_hash);
    for (std::size_t i = 0; i < first.entries.size(); ++i) {
        CHECK(second.entries[i].arch == first.entries[i].arch);
        CHECK(second.entries[i].mean_test_acc == first.entries[i].mean_test_acc);
        CHECK(second.entries[i].rank == first.entries[i].rank);
    }

    // Tamper with the cached accuracies; a hit must surface the tampered
    // values, proving no retraining happened.
    nlohmann::json j;
    {
        std::ifstream in(files[0]);
        in >> j;
    }
    j["entries"][0]["acc"] = 0.125;
    {
        std::ofstream out(files[0]);
        out << j.dump(2) << '\n';
    }
    OracleRanking tampered = oracle_ranking(space, data, 2, {1, 2}, dir.string());
    CHECK(tampered.entries[0].mean_test_acc == 0.125);

    // A corrupt cache falls back to recomputing and repairs the file.
    {
        std::ofstream out(files[0]);
        out << "not json";
    }
    OracleRanking repaired = oracle_ranking(space, data, 2, {1, 2}, dir.string());
    CHECK(repaired.entries[0].mean_test_acc == first.entries[0].mean_test_acc);

    // Different request parameters address different cache entries.
    CHECK(oracle_hash(space, data, 2, {1, 2}) != oracle_hash(space, data, 3, {1, 2}));
    CHECK(oracle_hash(space, data, 2, {1, 2}) != oracle_hash(space, data, 2, {1, 3}));
    Dataset other = gen_blobs(easy_spec(120, 3), 14);
    CHECK(oracle_hash(space, data, 2, {1, 2}) != oracle_hash(space, other, 2, {1, 2}));
}

// ---------------------------------------------------------------------------
// Records and JSONL traces

TEST_CASE("run records round-trip through their line format") {
    RunRecord r = sample_record();
    RunRecord back = record_from_json(record_to_json(r));
    CHECK(back == r);
    CHECK(record_to_json(r).find('\n') == std::string::npos);
}

TEST_CASE("trace files append and tolerate truncated tails") {
    fs::path dir = fresh_dir("traces");
    std::string path = (dir / "trace.jsonl").string();
    RunRecord a = sample_record();
    RunRecord b = sample_record();
    b.seed = 2;
    b.ok = true;
    append_records(path, {a});
    append_records(path, {b});

    std::vector<RunRecord> back = read_records(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0] == a);
    CHECK(back[1] == b);

    // Simulate a crash mid-write: a half line and a blank line.
    {
        std::ofstream out(path, std::ios::app);
        std::string full = record_to_json(a);
        out << "\n" << full.substr(0, full.size() / 2);
    }
    std::vector<RunRecord> tolerant = read_records(path);
    REQUIRE(tolerant.size() == 2);
    CHECK(tolerant[1] == b);

    CHECK_THROWS_AS(read_records((dir / "absent.jsonl").string()), std::runtime_error);
}

// ---------------------------------------------------------------------------
// run_experiment

TEST_CASE("one record per seed, appended to the trace file") {
    ExperimentConfig cfg = small_search("random");
    cfg.seeds = {1, 2, 3, 4, 5};
    fs::path dir = fresh_dir("runner");
    cfg.out_path = (dir / "trace.jsonl").string();

    std::vector<RunRecord> records = run_experiment(cfg);
    REQUIRE(records.size() == 5);
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(records[i].method == "random");
        CHECK(records[i].seed == cfg.seeds[i]);
        CHECK(records[i].ok);
        CHECK(!records[i].arch.empty());
        CHECK(records[i].accuracy >= 0.0);
        CHECK(records[i].accuracy <= 1.0);
        CHECK(records[i].cost > 0.0);
        CHECK(records[i].refreshes == 2);  // epochs 4, refresh period 2
        CHECK(records[i].fraction == 0.3);
    }
    CHECK(read_records(cfg.out_path) == records);

    // A second run appends rather than truncates.
    std::vector<RunRecord> again = run_experiment(cfg);
    CHECK(again == records);
    std::vector<RunRecord> all = read_records(cfg.out_path);
    REQUIRE(all.size() == 10);
    CHECK(std::vector<RunRecord>(all.begin() + 5, all.end()) == records);
}

TEST_CASE("unknown methods are rejected before anything runs") {
    ExperimentConfig cfg = small_search("random");
    cfg.method = "darts";
    fs::path dir = fresh_dir("reject");
    cfg.out_path = (dir / "trace.jsonl").string();
    CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
    CHECK(!fs::exists(cfg.out_path));
    cfg.method = "glister";
    cfg.seeds.clear();
    CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
}

TEST_CASE("the full-data baseline is the degenerate subset run") {
    ExperimentConfig dpt = small_search("darts-pt");
    dpt.bilevel.epochs = 3;
    dpt.final_epochs = 4;
    ExperimentConfig gl = dpt;
    gl.method = "glister";
    gl.bilevel.fraction = 1.0;
    gl.bilevel.subset_period_epochs = 0;

    std::vector<RunRecord> a = run_experiment(dpt);
    std::vector<RunRecord> b = run_experiment(gl);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].accuracy == b[i].accuracy);
        CHECK(a[i].arch == b[i].arch);
        // Costs differ: the degenerate selector still pays its scoring pass.
        CHECK(a[i].refreshes == b[i].refreshes);
    }
}

TEST_CASE("worker count never changes the records") {
    ExperimentConfig cfg = small_search("random");
    cfg.bilevel.epochs = 3;
    cfg.seeds = {5, 6, 7};
    cfg.workers = 1;
    std::vector<RunRecord> serial = run_experiment(cfg);
    cfg.workers = 3;
    std::vector<RunRecord> parallel = run_experiment(cfg);
    CHECK(serial == parallel);
}

TEST_CASE("oracle ranks flow into search records") {
    ExperimentConfig cfg = small_search("darts-pt");
    cfg.bilevel.epochs = 3;
    cfg.seeds = {1, 2};
    Dataset data = gen_blobs(cfg.data_spec, cfg.data_seed);
    SearchSpace space = builtin_space(cfg.space_id, cfg.data_spec.d, cfg.data_spec.classes);
    OracleRanking oracle = oracle_ranking(space, data, 2, {1});
    std::vector<RunRecord> records = run_experiment(cfg, &oracle);
    for (const auto& r : records) {
        CHECK(r.oracle_rank >= 1);
        CHECK(r.oracle_rank <= 27);
        CHECK(r.oracle_rank == oracle.rank_of(arch_from_string(space, r.arch)));
    }
}

TEST_CASE("hpo methods search the config space instead of the graph") {
    ExperimentConfig cfg;
    cfg.method = "dehb";
    cfg.data_spec = easy_spec(120, 4);
    cfg.data_spec.test_n = 80;
    cfg.hpo_budget = 3;
    cfg.hpo_eta = 3;
    cfg.hpo_generations = 1;
    cfg.hpo_iterations = 2;
    cfg.seeds = {3};

    std::vector<RunRecord> plain = run_experiment(cfg);
    REQUIRE(plain.size() == 1);
    CHECK(plain[0].arch.empty());
    CHECK(plain[0].config.size() == 3);
    CHECK(plain[0].fraction == 1.0);
    CHECK(plain[0].refreshes == 0);
    CHECK(plain[0].oracle_rank == 0);
    CHECK(plain[0].cost > 0.0);
    CHECK(plain[0].accuracy >= 0.0);
    CHECK(plain[0].accuracy <= 1.0);

    cfg.method = "adaptive-bohb";
    cfg.trainer.fraction = 0.5;
    cfg.trainer.period_epochs = 1;
    cfg.trainer.selector = SelectorKind::Random;
    std::vector<RunRecord> adaptive = run_experiment(cfg);
    REQUIRE(adaptive.size() == 1);
    CHECK(adaptive[0].fraction == 0.5);
    CHECK(adaptive[0].refreshes > 0);
    CHECK(adaptive[0].config.size() == 3);
}

// ---------------------------------------------------------------------------
// Reports

TEST_CASE("summaries aggregate mean and sample deviation per method") {
    std::vector<RunRecord> records;
    for (double acc : {90.0, 92.0, 94.0}) {
        RunRecord r;
        r.method = "glister";
        r.seed = records.size() + 1;
        r.accuracy = acc;
        r.cost = 100.0;
        r.fraction = 0.1;
        records.push_back(r);
    }
    RunRecord base;
    base.method = "darts-pt";
    base.seed = 9;
    base.accuracy = 91.0;
    base.cost = 1000.0;
    base.fraction = 1.0;
    records.push_back(base);

    std::vector<ReportRow> rows = summarize(records);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].method == "darts-pt");
    CHECK(rows[0].runs == 1);
    CHECK(rows[0].acc_std == 0.0);
    CHECK(rows[0].cost_ratio == 1.0);
    CHECK(rows[1].method == "glister");
    CHECK(rows[1].acc_mean == 92.0);
    CHECK(rows[1].acc_std == 2.0);
    CHECK(rows[1].cost_ratio == 10.0);
    CHECK(rows[1].pct_data == doctest::Approx(10.0));

    std::string csv = report_csv(rows);
    CHECK(csv ==
          "method,runs,acc_mean,acc_std,cost_mean,cost_ratio,pct_data\n"
          "darts-pt,1,91.00,0.00,1000.0,1.00,100.00\n"
          "glister,3,92.00,2.00,100.0,10.00,10.00\n");
}

TEST_CASE("summaries ignore record order and failed records") {
    std::vector<RunRecord> records;
    for (int i = 0; i < 6; ++i) {
        RunRecord r;
        r.method = i % 2 ? "fl" : "entropy";
        r.seed = static_cast<std::uint64_t>(i);
        r.accuracy = 0.8 + 0.013 * i;
        r.cost = 50.0 + 7.0 * i;
        r.fraction = 0.2;
        records.push_back(r);
    }
    RunRecord bad;
    bad.method = "fl";
    bad.ok = false;
    bad.error = "boom";
    records.push_back(bad);

    std::vector<ReportRow> forward = summarize(records);
    std::reverse(records.begin(), records.end());
    std::vector<ReportRow> reversed = summarize(records);
    REQUIRE(forward.size() == reversed.size());
    for (std::size_t i = 0; i < forward.size(); ++i) {
        CHECK(forward[i].method == reversed[i].method);
        CHECK(forward[i].runs == 3);
        CHECK(forward[i].acc_mean == reversed[i].acc_mean);
        CHECK(forward[i].acc_std == reversed[i].acc_std);
        CHECK(forward[i].cost_mean == reversed[i].cost_mean);
        CHECK(forward[i].cost_ratio == reversed[i].cost_ratio);
    }

    // Without a darts-pt row the largest data fraction anchors the ratios.
    CHECK(forward[0].cost_ratio == 1.0);
    CHECK(forward[1].cost_ratio == doctest::Approx(forward[0].cost_mean / forward[1].cost_mean));

    std::vector<RunRecord> none{bad};
    CHECK_THROWS_AS(summarize(none), std::invalid_argument);
    CHECK_THROWS_AS(summarize({}), std::invalid_argument);
}

TEST_CASE("reported cost ratios recount the searches behind them") {
    ExperimentConfig base = small_search("darts-pt");
    base.data_spec = easy_spec(400, 3);
    base.bilevel.epochs = 600;
    base.bilevel.alpha_period_steps = 1000000000;
    base.bilevel.projection_epochs = 0;
    base.bilevel.batch = 64;
    base.final_epochs = 2;
    base.seeds = {4};
    ExperimentConfig sub = base;
    sub.method = "random";
    sub.bilevel.fraction = 0.1;
    sub.bilevel.subset_period_epochs = 0;

    std::vector<RunRecord> records = run_experiment(base);
    std::vector<RunRecord> more = run_experiment(sub);
    records.insert(records.end(), more.begin(), more.end());

    // Recount both searches directly; the records must agree exactly.
    Dataset data = gen_blobs(base.data_spec, base.data_seed);
    SearchSpace space = builtin_space(base.space_id, base.data_spec.d, base.data_spec.classes);
    BilevelConfig full_bc = base.bilevel;
    full_bc.fraction = 1.0;
    full_bc.subset_period_epochs = 0;
    full_bc.selector = SelectorKind::Random;
    auto [fa, full_trace] = adaptive_dpt(space, {data.train, data.val}, full_bc, 4);
    BilevelConfig sub_bc = sub.bilevel;
    sub_bc.selector = SelectorKind::Random;
    auto [sa, sub_trace] = adaptive_dpt(space, {data.train, data.val}, sub_bc, 4);
    CHECK(records[0].cost == count_cost(full_trace).total());
    CHECK(records[1].cost == count_cost(sub_trace).total());

    std::vector<ReportRow> rows = summarize(records);
    REQUIRE(rows.size() == 2);
    const ReportRow& cheap = rows[0].method == "random" ? rows[0] : rows[1];
    CHECK(cheap.cost_ratio ==
          doctest::Approx(count_cost(full_trace).total() / count_cost(sub_trace).total()));
    // A 10% subset with the selector and alpha overheads pinned near zero
    // recovers most of the 10x headroom; projection scoring is shared.
    CHECK(cheap.cost_ratio > 8.0);
    CHECK(cheap.cost_ratio < 10.5);
    CHECK(cheap.pct_data == doctest::Approx(10.0));
}

// ---------------------------------------------------------------------------
// Ablation sweeps

TEST_CASE("ablation grids cover fractions by projection modes in order") {
    ExperimentConfig base = small_search("random");
    base.bilevel.epochs = 3;
    base.seeds = {8};
    std::vector<AblationRow> rows = ablate(base, {0.5, 1.0}, {false, true});
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].fraction == 0.5);
    CHECK(!rows[0].project_on_full);
    CHECK(rows[1].fraction == 1.0);
    CHECK(!rows[1].project_on_full);
    CHECK(rows[2].fraction == 0.5);
    CHECK(rows[2].project_on_full);
    CHECK(rows[3].fraction == 1.0);
    CHECK(rows[3].project_on_full);
    for (const auto& r : rows) {
        CHECK(r.ok);
        CHECK(r.runs == 1);
    }

    // The 100% subset-mode row is exactly a plain run of the base config.
    ExperimentConfig full = base;
    full.bilevel.fraction = 1.0;
    full.bilevel.project_on_full = false;
    std::vector<RunRecord> direct = run_experiment(full);
    CHECK(rows[1].acc_mean == direct[0].accuracy);
    CHECK(rows[1].cost_mean == direct[0].cost);

    std::string csv = ablation_csv(rows);
    CHECK(csv.rfind("fraction,projection,runs,acc_mean,acc_std,cost_mean,ok,note\n", 0) == 0);
    CHECK(csv.find("subset") != std::string::npos);
    CHECK(csv.find("full") != std::string::npos);
}

TEST_CASE("fractions that empty the subset fail their row only") {
    ExperimentConfig base = small_search("glister");
    base.bilevel.epochs = 2;
    base.bilevel.projection_epochs = 1;
    base.seeds = {2};
    std::vector<AblationRow> rows = ablate(base, {0.004, 0.5}, {false});
    REQUIRE(rows.size() == 2);
    CHECK(!rows[0].ok);
    CHECK(!rows[0].note.empty());
    CHECK(rows[0].note.find(',') == std::string::npos);
    CHECK(rows[1].ok);

    CHECK_THROWS_AS(ablate(base, {}, {false}), std::invalid_argument);
    CHECK_THROWS_AS(ablate(base, {0.5}, {}), std::invalid_argument);
    ExperimentConfig hpo = base;
    hpo.method = "dehb";
    CHECK_THROWS_AS(ablate(hpo, {0.5}, {false}), std::invalid_argument);
}

TEST_CASE("a mid-sized subset matches or beats noisy full data") {
    ExperimentConfig base = small_search("glister");
    base.data_spec = easy_spec(240, 3, 0.35);
    base.bilevel.epochs = 8;
    base.bilevel.subset_period_epochs = 2;
    base.bilevel.projection_epochs = 4;
    base.bilevel.glister_rounds = 5;
    base.final_epochs = 6;
    base.seeds = {1, 2, 3, 4, 5};

    std::vector<AblationRow> rows = ablate(base, {0.1, 0.2, 0.5, 1.0}, {false});
    REQUIRE(rows.size() == 4);
    double best_subset = 0.0;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i)
        best_subset = std::max(best_subset, rows[i].acc_mean);
    CHECK(best_subset >= rows[3].acc_mean);
}

// ---------------------------------------------------------------------------
// Config files

TEST_CASE("experiment configs parse with layered defaults") {
    ExperimentConfig defaults = experiment_config_from_json("{}");
    CHECK(defaults.method == "darts-pt");
    CHECK(defaults.space_id == "oracle-27");
    CHECK(defaults.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
    CHECK(defaults.hpo_space.dim() == 3);

    std::string text = R"({
        "space": "oracle-27",
        "method": "gradmatch",
        "data": {"n": 300, "d": 5, "noise": 0.1, "centers": [[1,1,1,1,1],[-1,-1,-1,-1,-1]]},
        "data_seed": 7,
        "seeds": [10, 20],
        "bilevel": {"epochs": 12, "fraction": 0.25, "project_on_full": true, "gradmatch_lambda": 0.5},
        "trainer": {"fraction": 0.3, "selector": "fl"},
        "hpo": {"budget": 27, "eta": 3, "generations": 2, "iterations": 4,
                "space": [{"name": "lr", "scale": "log", "lo": 0.001, "hi": 1.0},
                           {"name": "width", "lo": 2, "hi": 16, "integer": true}]},
        "final_epochs": 9,
        "out": "trace.jsonl",
        "workers": 4
    })";
    ExperimentConfig cfg = experiment_config_from_json(text);
    CHECK(cfg.method == "gradmatch");
    CHECK(cfg.data_spec.n == 300);
    CHECK(cfg.data_spec.d == 5);
    CHECK(cfg.data_spec.noise == 0.1);
    CHECK(cfg.data_spec.centers.size() == 2);
    CHECK(cfg.data_seed == 7);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{10, 20});
    CHECK(cfg.bilevel.epochs == 12);
    CHECK(cfg.bilevel.fraction == 0.25);
    CHECK(cfg.bilevel.project_on_full);
    CHECK(cfg.bilevel.gradmatch_lambda == 0.5);
    CHECK(cfg.trainer.fraction == 0.3);
    CHECK(cfg.trainer.selector == SelectorKind::FacilityLocation);
    CHECK(cfg.hpo_budget == 27);
    CHECK(cfg.hpo_iterations == 4);
    CHECK(cfg.hpo_space.dim() == 2);
    CHECK(cfg.hpo_space.params()[0].scale == ParamScale::Log);
    CHECK(cfg.hpo_space.params()[1].integer);
    CHECK(cfg.final_epochs == 9);
    CHECK(cfg.out_path == "trace.jsonl");
    CHECK(cfg.workers == 4);
}

TEST_CASE("experiment configs reject malformed or invalid input") {
    CHECK_THROWS_AS(experiment_config_from_json("{nope"), std::invalid_argument);
    CHECK_THROWS_AS(experiment_config_from_json("[1,2]"), std::invalid_argument);
    CHECK_THROWS_AS(experiment_config_from_json(R"({"method": "foo"})"), std::invalid_argument);
    CHECK_THROWS_AS(experiment_config_from_json(R"({"seeds": []})"), std::invalid_argument);
    CHECK_THROWS_AS(experiment_config_from_json(R"({"data": {"noise": 1.5}})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        experiment_config_from_json(
            R"({"hpo": {"space": [{"name": "x", "scale": "cubic", "lo": 0, "hi": 1}]}})"),
        std::invalid_argument);
    CHECK_THROWS_AS(experiment_config_from_json(R"({"trainer": {"selector": "best"}})"),
                    std::invalid_argument);
}
