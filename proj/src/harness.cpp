#include "adanas/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>
#include <utility>

#include "json.hpp"

#include "adanas/cost.hpp"
#include "adanas/rng.hpp"

namespace adanas {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double center_coord(const BlobSpec& spec, int cls, int dim) {
    if (!spec.centers.empty()) return spec.centers[static_cast<std::size_t>(cls)][static_cast<std::size_t>(dim)];
    return ((cls >> dim) & 1) ? spec.sep : -spec.sep;
}

// Round-robin labels keep the class counts balanced within one.
Batch draw_cluster_rows(const BlobSpec& spec, int count, Rng& rng) {
    Batch b;
    b.X = Tensor::zeros({count, spec.d});
    b.y.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        int c = i % spec.classes;
        b.y[static_cast<std::size_t>(i)] = c;
        for (int j = 0; j < spec.d; ++j)
            b.X.v[static_cast<std::size_t>(i * spec.d + j)] =
                center_coord(spec, c, j) + spec.spread * rng.normal();
    }
    return b;
}

Batch pool_rows(const Batch& a, const Batch& b) {
    int d = a.X.shape.size() == 2 ? a.X.shape[1] : 0;
    Batch out;
    out.X = Tensor::zeros({a.n() + b.n(), d});
    std::copy(a.X.v.begin(), a.X.v.end(), out.X.v.begin());
    std::copy(b.X.v.begin(), b.X.v.end(), out.X.v.begin() + a.X.v.size());
    out.y = a.y;
    out.y.insert(out.y.end(), b.y.begin(), b.y.end());
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string chomp(std::string line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    return line;
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic datasets

void BlobSpec::validate() const {
    if (classes < 2) throw std::invalid_argument("blobs: need at least two classes");
    if (n < classes) throw std::invalid_argument("blobs: pool smaller than the class count");
    if (d < 1) throw std::invalid_argument("blobs: feature dimension must be positive");
    if (test_n < 0) throw std::invalid_argument("blobs: negative test size");
    if (!(spread >= 0.0)) throw std::invalid_argument("blobs: spread must be non-negative");
    if (!std::isfinite(sep)) throw std::invalid_argument("blobs: separation must be finite");
    if (!(noise >= 0.0 && noise < 1.0))
        throw std::invalid_argument("blobs: noise rate must lie in [0,1)");
    if (!centers.empty()) {
        if (static_cast<int>(centers.size()) != classes)
            throw std::invalid_argument("blobs: centers must list one row per class");
        for (const auto& row : centers)
            if (static_cast<int>(row.size()) != d)
                throw std::invalid_argument("blobs: center row length must equal d");
    }
}

Dataset gen_blobs(const BlobSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng feature_rng = derive_rng(seed, "features");
    Rng split_rng = derive_rng(seed, "split");
    Rng noise_rng = derive_rng(seed, "noise");
    Rng test_rng = derive_rng(seed, "test");

    Batch pool = draw_cluster_rows(spec, spec.n, feature_rng);

    // Stratified half split: within each class the train side takes the
    // ceiling half of a per-seed shuffle, so split class counts stay within
    // one of each other.
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(spec.classes));
    for (int i = 0; i < pool.n(); ++i)
        by_class[static_cast<std::size_t>(pool.y[static_cast<std::size_t>(i)])].push_back(i);
    std::vector<int> train_idx;
    std::vector<int> val_idx;
    for (auto& idx : by_class) {
        split_rng.shuffle(idx);
        std::size_t take = (idx.size() + 1) / 2;
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<long>(take));
        val_idx.insert(val_idx.end(), idx.begin() + static_cast<long>(take), idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    Dataset out;
    out.spec = spec;
    out.seed = seed;
    out.train = gather_rows(pool, train_idx);
    out.val = gather_rows(pool, val_idx);
    out.test = draw_cluster_rows(spec, spec.test_n, test_rng);
    out.train_noisy.assign(static_cast<std::size_t>(out.train.n()), 0);

    // Flip exactly round(noise * |train|) labels so the realized rate never
    // drifts from the requested one.
    int flips = static_cast<int>(std::llround(spec.noise * out.train.n()));
    for (int row : noise_rng.sample_without_replacement(out.train.n(), flips)) {
        int shift = 1 + noise_rng.uniform_int(spec.classes - 1);
        int& y = out.train.y[static_cast<std::size_t>(row)];
        y = (y + shift) % spec.classes;
        out.train_noisy[static_cast<std::size_t>(row)] = 1;
    }
    return out;
}

void write_batch_csv(std::ostream& out, const Batch& b) {
    int d = b.X.shape.size() == 2 ? b.X.shape[1] : 0;
    out << "label";
    for (int j = 0; j < d; ++j) out << ",f" << (j + 1);
    out << '\n';
    for (int i = 0; i < b.n(); ++i) {
        out << b.y[static_cast<std::size_t>(i)];
        for (int j = 0; j < d; ++j)
            out << ',' << format_double(b.X.v[static_cast<std::size_t>(i * d + j)]);
        out << '\n';
    }
}

Batch read_batch_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("csv: missing header");
    std::vector<std::string> head = split_fields(chomp(line));
    if (head.empty() || head[0] != "label")
        throw std::invalid_argument("csv: header must start with 'label'");
    int d = static_cast<int>(head.size()) - 1;
    if (d < 1) throw std::invalid_argument("csv: no feature columns");

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = chomp(line);
        if (line.empty()) continue;
        std::vector<std::string> cells = split_fields(line);
        if (static_cast<int>(cells.size()) != d + 1)
            throw std::invalid_argument("csv: wrong column count on line " + std::to_string(lineno));
        try {
            labels.push_back(std::stoi(cells[0]));
            for (int j = 1; j <= d; ++j) values.push_back(std::stod(cells[static_cast<std::size_t>(j)]));
        } catch (const std::exception&) {
            throw std::invalid_argument("csv: bad number on line " + std::to_string(lineno));
        }
    }
    Batch b;
    b.X = Tensor::from({static_cast<int>(labels.size()), d}, std::move(values));
    b.y = std::move(labels);
    return b;
}

namespace {

void write_csv_file(const fs::path& path, const Batch& b) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_batch_csv(out, b);
}

Batch read_csv_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return read_batch_csv(in);
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& data) {
    fs::create_directories(dir);
    fs::path base(dir);
    write_csv_file(base / "train.csv", data.train);
    write_csv_file(base / "val.csv", data.val);
    write_csv_file(base / "test.csv", data.test);

    json spec;
    spec["n"] = data.spec.n;
    spec["test_n"] = data.spec.test_n;
    spec["d"] = data.spec.d;
    spec["classes"] = data.spec.classes;
    spec["sep"] = data.spec.sep;
    spec["spread"] = data.spec.spread;
    spec["noise"] = data.spec.noise;
    spec["centers"] = data.spec.centers;
    json meta;
    meta["spec"] = spec;
    meta["seed"] = data.seed;
    std::vector<int> noisy(data.train_noisy.begin(), data.train_noisy.end());
    meta["train_noisy"] = noisy;
    std::ofstream out(base / "meta.json");
    if (!out) throw std::runtime_error("cannot write " + (base / "meta.json").string());
    out << meta.dump(2) << '\n';
}

Dataset load_dataset(const std::string& dir) {
    fs::path base(dir);
    Dataset data;
    data.train = read_csv_file(base / "train.csv");
    data.val = read_csv_file(base / "val.csv");
    data.test = read_csv_file(base / "test.csv");

    std::ifstream in(base / "meta.json");
    if (!in) throw std::runtime_error("cannot read " + (base / "meta.json").string());
    json meta;
    try {
        in >> meta;
        const json& spec = meta.at("spec");
        data.spec.n = spec.at("n");
        data.spec.test_n = spec.at("test_n");
        data.spec.d = spec.at("d");
        data.spec.classes = spec.at("classes");
        data.spec.sep = spec.at("sep");
        data.spec.spread = spec.at("spread");
        data.spec.noise = spec.at("noise");
        data.spec.centers = spec.at("centers").get<std::vector<std::vector<double>>>();
        data.seed = meta.at("seed");
        std::vector<int> noisy = meta.at("train_noisy").get<std::vector<int>>();
        data.train_noisy.assign(noisy.begin(), noisy.end());
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset meta corrupt: " + std::string(e.what()));
    }
    if (static_cast<int>(data.train_noisy.size()) != data.train.n())
        throw std::runtime_error("dataset meta corrupt: noisy flags do not match the train rows");
    return data;
}

// ---------------------------------------------------------------------------
// Oracle rankings

int OracleRanking::rank_of(const Architecture& a) const {
    for (const auto& e : entries)
        if (e.arch == a) return e.rank;
    return 0;
}

std::uint64_t oracle_hash(const SearchSpace& space, const Dataset& data, int epochs,
                          const std::vector<std::uint64_t>& oracle_seeds) {
    std::ostringstream os;
    os << space_to_text(space);
    os << "|n=" << data.spec.n << "|test_n=" << data.spec.test_n << "|d=" << data.spec.d
       << "|classes=" << data.spec.classes << "|sep=" << format_double(data.spec.sep)
       << "|spread=" << format_double(data.spec.spread)
       << "|noise=" << format_double(data.spec.noise);
    os << "|centers=";
    for (const auto& row : data.spec.centers)
        for (double v : row) os << format_double(v) << ',';
    os << "|seed=" << data.seed << "|epochs=" << epochs << "|oracle_seeds=";
    for (std::uint64_t s : oracle_seeds) os << s << ',';
    return fnv1a(os.str());
}

namespace {

std::string hash_hex(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

bool load_oracle_file(const fs::path& path, std::uint64_t want_hash, long long want_count,
                      OracleRanking& out) {
    std::ifstream in(path);
    if (!in) return false;
    json j;
    try {
        in >> j;
        if (j.at("hash").get<std::string>() != hash_hex(want_hash)) return false;
        const json& entries = j.at("entries");
        if (static_cast<long long>(entries.size()) != want_count) return false;
        out.entries.clear();
        for (const json& e : entries) {
            OracleEntry oe;
            oe.arch.op_index = e.at("arch").get<std::vector<int>>();
            oe.mean_test_acc = e.at("acc");
            oe.rank = e.at("rank");
            out.entries.push_back(std::move(oe));
        }
    } catch (const json::exception&) {
        return false;
    }
    out.content_hash = want_hash;
    return true;
}

void save_oracle_file(const fs::path& path, const OracleRanking& r) {
    json j;
    j["hash"] = hash_hex(r.content_hash);
    json entries = json::array();
    for (const auto& e : r.entries) {
        json je;
        je["arch"] = e.arch.op_index;
        je["acc"] = e.mean_test_acc;
        je["rank"] = e.rank;
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace

OracleRanking oracle_ranking(const SearchSpace& space, const Dataset& data, int epochs,
                             const std::vector<std::uint64_t>& oracle_seeds,
                             const std::string& cache_dir) {
    space.validate();
    long long count = space.num_architectures();
    if (count > 200)
        throw std::invalid_argument("oracle: space has " + std::to_string(count) +
                                    " architectures, refusing to enumerate more than 200");
    if (epochs < 1) throw std::invalid_argument("oracle: epochs must be positive");
    if (oracle_seeds.empty()) throw std::invalid_argument("oracle: need at least one seed");

    std::uint64_t h = oracle_hash(space, data, epochs, oracle_seeds);
    fs::path cache_path;
    if (!cache_dir.empty()) {
        cache_path = fs::path(cache_dir) / ("oracle-" + hash_hex(h) + ".json");
        OracleRanking cached;
        if (load_oracle_file(cache_path, h, count, cached)) return cached;
    }

    Batch pool = pool_rows(data.train, data.val);
    OracleRanking out;
    out.content_hash = h;
    for (const Architecture& arch : enumerate_architectures(space)) {
        double sum = 0.0;
        for (std::uint64_t s : oracle_seeds)
            sum += train_final(space, arch, pool, data.test, epochs, s);
        OracleEntry e;
        e.arch = arch;
        e.mean_test_acc = sum / static_cast<double>(oracle_seeds.size());
        out.entries.push_back(std::move(e));
    }

    std::vector<int> order(out.entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return out.entries[static_cast<std::size_t>(a)].mean_test_acc >
               out.entries[static_cast<std::size_t>(b)].mean_test_acc;
    });
    for (std::size_t r = 0; r < order.size(); ++r)
        out.entries[static_cast<std::size_t>(order[r])].rank = static_cast<int>(r) + 1;

    if (!cache_path.empty()) {
        fs::create_directories(cache_dir);
        save_oracle_file(cache_path, out);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Records

std::string record_to_json(const RunRecord& r) {
    json j;
    j["method"] = r.method;
    j["seed"] = r.seed;
    j["arch"] = r.arch;
    j["config"] = r.config;
    j["oracle_rank"] = r.oracle_rank;
    j["accuracy"] = r.accuracy;
    j["cost"] = r.cost;
    j["refreshes"] = r.refreshes;
    j["fraction"] = r.fraction;
    j["ok"] = r.ok;
    j["error"] = r.error;
    return j.dump();
}

RunRecord record_from_json(const std::string& line) {
    json j = json::parse(line);
    RunRecord r;
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.arch = j.at("arch").get<std::string>();
    r.config = j.at("config").get<std::vector<double>>();
    r.oracle_rank = j.at("oracle_rank");
    r.accuracy = j.at("accuracy");
    r.cost = j.at("cost");
    r.refreshes = j.at("refreshes");
    r.fraction = j.at("fraction");
    r.ok = j.at("ok");
    r.error = j.at("error").get<std::string>();
    return r;
}

void append_records(const std::string& path, const std::vector<RunRecord>& records) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to " + path);
    for (const auto& r : records) out << record_to_json(r) << '\n';
}

std::vector<RunRecord> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::vector<RunRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = chomp(line);
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(line));
        } catch (const std::exception&) {
            std::fprintf(stderr, "warning: %s:%zu: skipping unparseable record\n", path.c_str(),
                         lineno);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiment runner

ConfigSpace default_hpo_space() {
    return ConfigSpace({{"width", ParamScale::Linear, 4.0, 32.0, true},
                        {"depth", ParamScale::Linear, 0.0, 2.0, true},
                        {"lr", ParamScale::Log, 0.005, 0.1, false}});
}

namespace {

bool is_hpo_method(const std::string& m) {
    return m == "dehb" || m == "bohb" || m == "adaptive-dehb" || m == "adaptive-bohb";
}

bool is_search_method(const std::string& m) {
    return m == "darts-pt" || m == "random" || m == "fl" || m == "entropy" || m == "glister" ||
           m == "gradmatch";
}

}  // namespace

void ExperimentConfig::validate() const {
    if (!is_search_method(method) && !is_hpo_method(method))
        throw std::invalid_argument("experiment: unknown method '" + method + "'");
    if (seeds.empty()) throw std::invalid_argument("experiment: seeds list is empty");
    if (final_epochs < 1) throw std::invalid_argument("experiment: final_epochs must be positive");
    data_spec.validate();
    if (is_hpo_method(method)) {
        if (hpo_budget < 1) throw std::invalid_argument("experiment: hpo budget must be positive");
        if (hpo_eta < 2) throw std::invalid_argument("experiment: hpo eta must be at least 2");
        if (hpo_generations < 0)
            throw std::invalid_argument("experiment: negative hpo generation count");
        if (hpo_iterations < 1)
            throw std::invalid_argument("experiment: hpo iterations must be positive");
        if (hpo_space.dim() == 0) throw std::invalid_argument("experiment: hpo space is empty");
        if (method.rfind("adaptive-", 0) == 0) trainer.validate();
    } else {
        bilevel.validate();
    }
}

namespace {

void apply_blob_json(const json& d, BlobSpec& spec) {
    if (d.contains("n")) spec.n = d.at("n");
    if (d.contains("test_n")) spec.test_n = d.at("test_n");
    if (d.contains("d")) spec.d = d.at("d");
    if (d.contains("classes")) spec.classes = d.at("classes");
    if (d.contains("sep")) spec.sep = d.at("sep");
    if (d.contains("spread")) spec.spread = d.at("spread");
    if (d.contains("noise")) spec.noise = d.at("noise");
    if (d.contains("centers"))
        spec.centers = d.at("centers").get<std::vector<std::vector<double>>>();
}

}  // namespace

BlobSpec blob_spec_from_json(const std::string& text) {
    BlobSpec spec;
    try {
        json j = json::parse(text);
        if (!j.is_object()) throw std::invalid_argument("blob spec: top level must be an object");
        apply_blob_json(j, spec);
    } catch (const json::exception& e) {
        throw std::invalid_argument("blob spec: " + std::string(e.what()));
    }
    spec.validate();
    return spec;
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
    ExperimentConfig cfg;
    try {
        json j = json::parse(text);
        if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");

        if (j.contains("space")) cfg.space_id = j.at("space").get<std::string>();
        if (j.contains("method")) cfg.method = j.at("method").get<std::string>();
        if (j.contains("data_seed")) cfg.data_seed = j.at("data_seed").get<std::uint64_t>();
        if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
        if (j.contains("out")) cfg.out_path = j.at("out").get<std::string>();
        if (j.contains("workers")) cfg.workers = j.at("workers");
        if (j.contains("final_epochs")) cfg.final_epochs = j.at("final_epochs");

        if (j.contains("data")) apply_blob_json(j.at("data"), cfg.data_spec);

        if (j.contains("bilevel")) {
            const json& b = j.at("bilevel");
            if (b.contains("epochs")) cfg.bilevel.epochs = b.at("epochs");
            if (b.contains("period_epochs")) cfg.bilevel.subset_period_epochs = b.at("period_epochs");
            if (b.contains("alpha_period_steps"))
                cfg.bilevel.alpha_period_steps = b.at("alpha_period_steps");
            if (b.contains("fraction")) cfg.bilevel.fraction = b.at("fraction");
            if (b.contains("zeta")) cfg.bilevel.zeta = b.at("zeta");
            if (b.contains("lr0")) cfg.bilevel.lr0 = b.at("lr0");
            if (b.contains("lr_alpha")) cfg.bilevel.lr_alpha = b.at("lr_alpha");
            if (b.contains("momentum")) cfg.bilevel.momentum = b.at("momentum");
            if (b.contains("batch")) cfg.bilevel.batch = b.at("batch");
            if (b.contains("projection_epochs"))
                cfg.bilevel.projection_epochs = b.at("projection_epochs");
            if (b.contains("project_on_full")) cfg.bilevel.project_on_full = b.at("project_on_full");
            if (b.contains("projection_noise_samples"))
                cfg.bilevel.projection_noise_samples = b.at("projection_noise_samples");
            if (b.contains("glister_eta")) cfg.bilevel.glister_eta = b.at("glister_eta");
            if (b.contains("glister_rounds")) cfg.bilevel.glister_rounds = b.at("glister_rounds");
            if (b.contains("glister_per_class"))
                cfg.bilevel.glister_per_class = b.at("glister_per_class");
            if (b.contains("gradmatch_lambda"))
                cfg.bilevel.gradmatch_lambda = b.at("gradmatch_lambda");
            if (b.contains("entropy_proxy_epochs"))
                cfg.bilevel.entropy_proxy_epochs = b.at("entropy_proxy_epochs");
        }

        if (j.contains("trainer")) {
            const json& t = j.at("trainer");
            if (t.contains("fraction")) cfg.trainer.fraction = t.at("fraction");
            if (t.contains("period_epochs")) cfg.trainer.period_epochs = t.at("period_epochs");
            if (t.contains("selector"))
                cfg.trainer.selector = selector_from_name(t.at("selector").get<std::string>());
            if (t.contains("glister_eta")) cfg.trainer.glister_eta = t.at("glister_eta");
            if (t.contains("glister_rounds")) cfg.trainer.glister_rounds = t.at("glister_rounds");
            if (t.contains("glister_per_class"))
                cfg.trainer.glister_per_class = t.at("glister_per_class");
        }

        if (j.contains("hpo")) {
            const json& h = j.at("hpo");
            if (h.contains("budget")) cfg.hpo_budget = h.at("budget");
            if (h.contains("eta")) cfg.hpo_eta = h.at("eta");
            if (h.contains("generations")) cfg.hpo_generations = h.at("generations");
            if (h.contains("iterations")) cfg.hpo_iterations = h.at("iterations");
            if (h.contains("space")) {
                std::vector<HyperParam> params;
                for (const json& e : h.at("space")) {
                    HyperParam p;
                    p.name = e.at("name").get<std::string>();
                    std::string scale = e.value("scale", "linear");
                    if (scale == "linear")
                        p.scale = ParamScale::Linear;
                    else if (scale == "log")
                        p.scale = ParamScale::Log;
                    else
                        throw std::invalid_argument("config: unknown scale '" + scale + "'");
                    p.lo = e.at("lo");
                    p.hi = e.at("hi");
                    p.integer = e.value("integer", false);
                    params.push_back(std::move(p));
                }
                cfg.hpo_space = ConfigSpace(std::move(params));
            }
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: " + std::string(e.what()));
    }
    cfg.validate();
    return cfg;
}

namespace {

RunRecord run_search_cell(const ExperimentConfig& cfg, const SearchSpace& space,
                          const Dataset& data, std::uint64_t seed, const OracleRanking* oracle) {
    BilevelConfig bc = cfg.bilevel;
    if (cfg.method == "darts-pt") {
        // The no-subset baseline: the same loop pinned to the full train
        // split with no refreshes.
        bc.fraction = 1.0;
        bc.subset_period_epochs = 0;
        bc.selector = SelectorKind::Random;
    } else {
        bc.selector = selector_from_name(cfg.method);
    }

    SearchData sd{data.train, data.val};
    auto [arch, trace] = adaptive_dpt(space, sd, bc, seed);

    RunRecord r;
    r.method = cfg.method;
    r.seed = seed;
    r.arch = arch_to_string(space, arch);
    r.refreshes = static_cast<int>(trace.refreshes.size());
    r.cost = count_cost(trace).total();
    r.fraction = bc.fraction;
    if (oracle) r.oracle_rank = oracle->rank_of(arch);
    Batch pool = pool_rows(data.train, data.val);
    r.accuracy = train_final(space, arch, pool, data.test, cfg.final_epochs, seed);
    return r;
}

RunRecord run_hpo_cell(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed) {
    bool adaptive = cfg.method.rfind("adaptive-", 0) == 0;
    HpoDataset hd{data.train, data.val, cfg.data_spec.classes};
    Evaluator ev = adaptive ? adaptive_mlp_evaluator(cfg.hpo_space, hd, cfg.trainer, seed)
                            : plain_mlp_evaluator(cfg.hpo_space, hd, seed);

    RunResult res;
    if (cfg.method == "dehb" || cfg.method == "adaptive-dehb") {
        BudgetSchedule sched = hyperband_schedule(cfg.hpo_budget, cfg.hpo_eta);
        res = dehb_run(cfg.hpo_space, ev, sched, cfg.hpo_generations, seed);
    } else {
        res = bohb_run(cfg.hpo_space, ev, cfg.hpo_budget, cfg.hpo_eta, cfg.hpo_iterations, seed);
    }

    RunRecord r;
    r.method = cfg.method;
    r.seed = seed;
    r.config = res.best.config;
    r.cost = res.total_cost;
    for (const auto& t : res.trials) r.refreshes += t.refreshes;
    r.fraction = adaptive ? cfg.trainer.fraction : 1.0;

    // Held-out score of the winner: retrain it from scratch on all non-test
    // rows at the full budget. This cost stays out of the record, which
    // counts search work only.
    HpoDataset fin{pool_rows(data.train, data.val), data.test, cfg.data_spec.classes};
    Evaluator final_ev = plain_mlp_evaluator(cfg.hpo_space, fin, hash_mix(seed, fnv1a("final")));
    r.accuracy = final_ev(res.best.config, cfg.hpo_budget).score;
    return r;
}

}  // namespace

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, const OracleRanking* oracle) {
    cfg.validate();
    const Dataset data = gen_blobs(cfg.data_spec, cfg.data_seed);
    const bool hpo = is_hpo_method(cfg.method);
    SearchSpace space;
    if (!hpo) space = builtin_space(cfg.space_id, cfg.data_spec.d, cfg.data_spec.classes);

    auto run_cell = [&](std::uint64_t seed) {
        return hpo ? run_hpo_cell(cfg, data, seed) : run_search_cell(cfg, space, data, seed, oracle);
    };

    const std::size_t cells = cfg.seeds.size();
    std::vector<RunRecord> records(cells);
    std::vector<std::exception_ptr> failures(cells);
    int workers = std::min<int>(std::max(1, cfg.workers), static_cast<int>(cells));
    if (workers == 1) {
        for (std::size_t i = 0; i < cells; ++i) records[i] = run_cell(cfg.seeds[i]);
    } else {
        std::atomic<std::size_t> next{0};
        auto drain = [&] {
            for (std::size_t i; (i = next.fetch_add(1)) < cells;) {
                try {
                    records[i] = run_cell(cfg.seeds[i]);
                } catch (...) {
                    failures[i] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(drain);
        for (auto& t : pool) t.join();
        for (const auto& f : failures)
            if (f) std::rethrow_exception(f);
    }

    if (!cfg.out_path.empty()) append_records(cfg.out_path, records);
    return records;
}

// ---------------------------------------------------------------------------
// Summaries

namespace {

std::pair<double, double> mean_sample_std(const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace

std::vector<ReportRow> summarize(const std::vector<RunRecord>& records) {
    std::map<std::string, std::vector<const RunRecord*>> by_method;
    for (const auto& r : records)
        if (r.ok) by_method[r.method].push_back(&r);
    if (by_method.empty()) throw std::invalid_argument("report: no usable records");

    std::vector<ReportRow> rows;
    for (auto& [method, rs] : by_method) {
        // Canonical order makes the aggregation independent of record order.
        std::sort(rs.begin(), rs.end(), [](const RunRecord* a, const RunRecord* b) {
            return std::tie(a->seed, a->accuracy, a->cost) < std::tie(b->seed, b->accuracy, b->cost);
        });
        std::vector<double> accs;
        std::vector<double> costs;
        double frac = 0.0;
        for (const RunRecord* r : rs) {
            accs.push_back(r->accuracy);
            costs.push_back(r->cost);
            frac += r->fraction;
        }
        ReportRow row;
        row.method = method;
        row.runs = static_cast<int>(rs.size());
        std::tie(row.acc_mean, row.acc_std) = mean_sample_std(accs);
        row.cost_mean = mean_sample_std(costs).first;
        row.pct_data = 100.0 * frac / static_cast<double>(rs.size());
        rows.push_back(std::move(row));
    }

    const ReportRow* baseline = nullptr;
    for (const auto& row : rows)
        if (row.method == "darts-pt") baseline = &row;
    if (!baseline) {
        baseline = &rows.front();
        for (const auto& row : rows)
            if (row.pct_data > baseline->pct_data) baseline = &row;
    }
    for (auto& row : rows)
        row.cost_ratio = row.cost_mean > 0.0 ? baseline->cost_mean / row.cost_mean : 0.0;
    return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::string out = "method,runs,acc_mean,acc_std,cost_mean,cost_ratio,pct_data\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%.2f,%.2f,%.1f,%.2f,%.2f\n", r.method.c_str(),
                      r.runs, r.acc_mean, r.acc_std, r.cost_mean, r.cost_ratio, r.pct_data);
        out += buf;
    }
    return out;
}

std::vector<AblationRow> ablate(const ExperimentConfig& base, const std::vector<double>& fractions,
                                const std::vector<bool>& projection_modes) {
    if (fractions.empty()) throw std::invalid_argument("ablate: fractions list is empty");
    if (projection_modes.empty()) throw std::invalid_argument("ablate: projection modes empty");
    base.validate();
    if (is_hpo_method(base.method))
        throw std::invalid_argument("ablate: needs an architecture-search method");

    std::vector<AblationRow> rows;
    for (bool mode : projection_modes) {
        for (double f : fractions) {
            ExperimentConfig cfg = base;
            cfg.out_path.clear();
            cfg.bilevel.fraction = f;
            cfg.bilevel.project_on_full = mode;
            AblationRow row;
            row.fraction = f;
            row.project_on_full = mode;
            try {
                std::vector<RunRecord> recs = run_experiment(cfg, nullptr);
                std::vector<double> accs;
                std::vector<double> costs;
                for (const auto& r : recs) {
                    accs.push_back(r.accuracy);
                    costs.push_back(r.cost);
                }
                row.runs = static_cast<int>(recs.size());
                std::tie(row.acc_mean, row.acc_std) = mean_sample_std(accs);
                row.cost_mean = mean_sample_std(costs).first;
            } catch (const std::exception& e) {
                row.ok = false;
                row.note = e.what();
                for (char& c : row.note)
                    if (c == ',' || c == '\n') c = ';';
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "fraction,projection,runs,acc_mean,acc_std,cost_mean,ok,note\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.4g,%s,%d,%.4f,%.4f,%.1f,%d,%s\n", r.fraction,
                      r.project_on_full ? "full" : "subset", r.runs, r.acc_mean, r.acc_std,
                      r.cost_mean, r.ok ? 1 : 0, r.note.c_str());
        out += buf;
    }
    return out;
}

}  // namespace adanas
