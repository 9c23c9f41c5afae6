#include "adanas/multifid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "adanas/selectors.hpp"
#include "adanas/tape.hpp"

namespace adanas {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

long long ipow(long long base, int exp) {
    long long r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConfigSpace

ConfigSpace::ConfigSpace(std::vector<HyperParam> params) : params_(std::move(params)) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const HyperParam& p = params_[i];
        if (p.name.empty()) throw std::invalid_argument("config space: unnamed parameter");
        for (std::size_t j = 0; j < i; ++j)
            if (params_[j].name == p.name)
                throw std::invalid_argument("config space: duplicate parameter " + p.name);
        if (!std::isfinite(p.lo) || !std::isfinite(p.hi) || !(p.lo < p.hi))
            throw std::invalid_argument("config space: bad range for " + p.name);
        if (p.scale == ParamScale::Log && !(p.lo > 0.0))
            throw std::invalid_argument("config space: log scale needs a positive floor for " +
                                        p.name);
        if (p.integer && (std::floor(p.lo) != p.lo || std::floor(p.hi) != p.hi))
            throw std::invalid_argument("config space: integer bounds must be whole for " +
                                        p.name);
    }
}

int ConfigSpace::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return static_cast<int>(i);
    return -1;
}

std::vector<double> ConfigSpace::decode(const std::vector<double>& unit) const {
    if (unit.size() != params_.size())
        throw std::invalid_argument("config decode: dimension mismatch");
    std::vector<double> out(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const HyperParam& p = params_[i];
        double u = unit[i];
        if (std::isnan(u)) throw std::invalid_argument("config decode: nan coordinate");
        u = clamp01(u);
        double x = p.scale == ParamScale::Log
                       ? std::exp(std::log(p.lo) + u * (std::log(p.hi) - std::log(p.lo)))
                       : p.lo + u * (p.hi - p.lo);
        if (p.integer) {
            x = static_cast<double>(std::llround(x));
            x = std::min(p.hi, std::max(p.lo, x));
        }
        out[i] = x;
    }
    return out;
}

std::vector<double> ConfigSpace::encode(const std::vector<double>& native) const {
    if (native.size() != params_.size())
        throw std::invalid_argument("config encode: dimension mismatch");
    std::vector<double> out(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const HyperParam& p = params_[i];
        double x = native[i];
        if (std::isnan(x)) throw std::invalid_argument("config encode: nan value");
        if (p.integer) x = static_cast<double>(std::llround(x));
        x = std::min(p.hi, std::max(p.lo, x));
        out[i] = p.scale == ParamScale::Log
                     ? (std::log(x) - std::log(p.lo)) / (std::log(p.hi) - std::log(p.lo))
                     : (x - p.lo) / (p.hi - p.lo);
    }
    return out;
}

std::vector<double> ConfigSpace::sample_unit(Rng& rng) const {
    std::vector<double> u(params_.size());
    for (double& v : u) v = rng.uniform();
    return u;
}

// ---------------------------------------------------------------------------
// Hyperband

BudgetSchedule hyperband_schedule(int R, int eta) {
    if (R < 1) throw std::invalid_argument("hyperband: R must be at least 1");
    if (eta < 2) throw std::invalid_argument("hyperband: eta must be at least 2");
    int s_max = 0;
    while (ipow(eta, s_max + 1) <= R) ++s_max;
    BudgetSchedule sched;
    sched.R = R;
    sched.eta = eta;
    for (int s = s_max; s >= 0; --s) {
        Bracket br;
        br.s = s;
        long long n0 = static_cast<long long>((s_max + 1 + s) / (s + 1)) * ipow(eta, s);
        long long n = n0;
        for (int i = 0; i <= s; ++i) {
            long long b = (static_cast<long long>(R) * ipow(eta, i)) / ipow(eta, s);
            br.rung_budgets.push_back(static_cast<int>(std::max(1LL, b)));
            br.rung_pops.push_back(static_cast<int>(n));
            n /= eta;
        }
        sched.brackets.push_back(std::move(br));
    }
    return sched;
}

std::vector<RungOutcome> successive_halving(const std::vector<std::vector<double>>& population,
                                            const Evaluator& evaluate, int eta,
                                            const std::vector<int>& rung_budgets) {
    if (population.empty()) throw std::invalid_argument("successive halving: empty population");
    if (eta < 2) throw std::invalid_argument("successive halving: eta must be at least 2");
    if (rung_budgets.empty()) throw std::invalid_argument("successive halving: no rungs");
    if (!evaluate) throw std::invalid_argument("successive halving: null evaluator");

    std::vector<int> members(population.size());
    std::iota(members.begin(), members.end(), 0);
    std::vector<RungOutcome> out;
    for (std::size_t r = 0; r < rung_budgets.size(); ++r) {
        RungOutcome rung;
        rung.budget = rung_budgets[r];
        rung.members = members;
        for (int idx : members)
            rung.scores.push_back(
                evaluate(population[static_cast<std::size_t>(idx)], rung.budget).score);
        out.push_back(rung);
        if (r + 1 == rung_budgets.size()) break;
        std::size_t keep = std::max<std::size_t>(1, members.size() / static_cast<std::size_t>(eta));
        std::vector<std::size_t> order(members.size());
        std::iota(order.begin(), order.end(), 0);
        // Stable sort on descending score: members are ascending, so equal
        // scores resolve toward the lower config index.
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return rung.scores[a] > rung.scores[b];
        });
        std::vector<int> survivors;
        for (std::size_t i = 0; i < keep; ++i) survivors.push_back(members[order[i]]);
        std::sort(survivors.begin(), survivors.end());
        members = std::move(survivors);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Differential evolution

std::vector<double> de_mutate(const std::vector<std::vector<double>>& population, double F,
                              Rng& rng) {
    int n = static_cast<int>(population.size());
    if (n < 4) throw std::invalid_argument("de_mutate: population must hold at least 4 members");
    if (!std::isfinite(F) || F < 0.0) throw std::invalid_argument("de_mutate: bad F");
    int r1 = rng.uniform_int(n);
    int r2 = rng.uniform_int(n - 1);
    if (r2 >= r1) ++r2;
    int r3 = rng.uniform_int(n - 2);
    int lo = std::min(r1, r2), hi = std::max(r1, r2);
    if (r3 >= lo) ++r3;
    if (r3 >= hi) ++r3;
    const std::vector<double>& a = population[static_cast<std::size_t>(r1)];
    const std::vector<double>& b = population[static_cast<std::size_t>(r2)];
    const std::vector<double>& c = population[static_cast<std::size_t>(r3)];
    if (a.size() != b.size() || a.size() != c.size())
        throw std::invalid_argument("de_mutate: ragged population");
    std::vector<double> v(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) v[j] = clamp01(a[j] + F * (b[j] - c[j]));
    return v;
}

std::vector<double> de_crossover(const std::vector<double>& target,
                                 const std::vector<double>& mutant, double p_cr, Rng& rng) {
    if (target.size() != mutant.size())
        throw std::invalid_argument("de_crossover: dimension mismatch");
    if (target.empty()) throw std::invalid_argument("de_crossover: empty vectors");
    if (!(p_cr >= 0.0 && p_cr <= 1.0)) throw std::invalid_argument("de_crossover: bad p_cr");
    int d = static_cast<int>(target.size());
    int forced = rng.uniform_int(d);
    std::vector<double> child(target.size());
    for (int j = 0; j < d; ++j) {
        double u = rng.uniform();  // drawn every coordinate, forced or not
        child[static_cast<std::size_t>(j)] = (j == forced || u < p_cr)
                                                 ? mutant[static_cast<std::size_t>(j)]
                                                 : target[static_cast<std::size_t>(j)];
    }
    return child;
}

// ---------------------------------------------------------------------------
// DEHB

namespace {

struct Slot {
    std::vector<double> config;
    double score = 0.0;
};

TrialRecord best_at_full_budget(const std::vector<TrialRecord>& trials, int R) {
    bool found = false;
    std::size_t best = 0;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        if (trials[i].budget != R) continue;
        if (!found || trials[i].score > trials[best].score) {
            best = i;
            found = true;
        }
    }
    if (!found) throw std::logic_error("hpo run produced no full-budget trial");
    return trials[best];
}

}  // namespace

RunResult dehb_run(const ConfigSpace& space, const Evaluator& evaluate,
                   const BudgetSchedule& schedule, int generations, std::uint64_t seed, double F,
                   double p_cr, const ReplaceObserver& on_replace) {
    if (!evaluate) throw std::invalid_argument("dehb: null evaluator");
    if (schedule.brackets.empty()) throw std::invalid_argument("dehb: empty schedule");
    if (generations < 0) throw std::invalid_argument("dehb: negative generations");
    if (!(p_cr >= 0.0 && p_cr <= 1.0)) throw std::invalid_argument("dehb: bad p_cr");
    if (!std::isfinite(F) || F < 0.0) throw std::invalid_argument("dehb: bad F");
    if (space.dim() < 1) throw std::invalid_argument("dehb: empty config space");

    Rng rng = derive_rng(seed, "dehb");
    RunResult res;
    auto run_eval = [&](const std::vector<double>& cfg, int budget) {
        EvalResult r = evaluate(cfg, budget);
        res.trials.push_back({cfg, budget, r.score, r.cost, seed, r.refreshes});
        res.total_cost += r.cost;
        return r;
    };

    // Hyperband warm-up seeds one subpopulation per distinct budget with
    // every configuration scored there.
    std::map<int, std::vector<Slot>> pops;
    for (const Bracket& br : schedule.brackets) {
        std::vector<std::vector<double>> pop0;
        for (int i = 0; i < br.rung_pops[0]; ++i) pop0.push_back(space.sample_unit(rng));
        auto outcomes = successive_halving(
            pop0,
            [&](const std::vector<double>& c, int b) { return run_eval(c, b); },
            schedule.eta, br.rung_budgets);
        for (const RungOutcome& o : outcomes)
            for (std::size_t j = 0; j < o.members.size(); ++j)
                pops[o.budget].push_back(
                    {pop0[static_cast<std::size_t>(o.members[j])], o.scores[j]});
    }

    std::vector<int> budgets;
    for (const auto& kv : pops) budgets.push_back(kv.first);

    for (int g = 0; g < generations; ++g) {
        for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
            int b = budgets[bi];
            std::vector<Slot>& slots = pops[b];
            for (std::size_t si = 0; si < slots.size(); ++si) {
                // Donors reflect replacements already made this pass.
                std::vector<std::vector<double>> donors;
                if (slots.size() >= 4) {
                    for (const Slot& s : slots) donors.push_back(s.config);
                } else {
                    for (const auto& kv : pops)
                        for (const Slot& s : kv.second) donors.push_back(s.config);
                }
                if (donors.size() < 4) break;  // pool too small, skip the rung
                std::vector<double> mutant = de_mutate(donors, F, rng);
                std::vector<double> child = de_crossover(slots[si].config, mutant, p_cr, rng);
                EvalResult r = run_eval(child, b);
                bool accepted = r.score >= slots[si].score;
                if (on_replace)
                    on_replace(b, static_cast<int>(si), slots[si].score, r.score, accepted);
                if (accepted) slots[si] = {child, r.score};
            }
            if (bi + 1 == budgets.size() || slots.empty()) continue;
            // Promote the rung winner to the next budget.
            std::size_t best = 0;
            for (std::size_t i = 1; i < slots.size(); ++i)
                if (slots[i].score > slots[best].score) best = i;
            int nb = budgets[bi + 1];
            std::vector<Slot>& up = pops[nb];
            std::size_t worst = 0;
            for (std::size_t i = 1; i < up.size(); ++i)
                if (up[i].score < up[worst].score) worst = i;
            EvalResult r = run_eval(slots[best].config, nb);
            bool accepted = r.score >= up[worst].score;
            if (on_replace)
                on_replace(nb, static_cast<int>(worst), up[worst].score, r.score, accepted);
            if (accepted) up[worst] = {slots[best].config, r.score};
        }
    }

    res.best = best_at_full_budget(res.trials, schedule.R);
    return res;
}

// ---------------------------------------------------------------------------
// BOHB

namespace {

double log_kde(double x, const std::vector<double>& centers, double h) {
    // log of a Gaussian mixture density with shared bandwidth, stable form.
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> t(centers.size());
    for (std::size_t i = 0; i < centers.size(); ++i) {
        double z = (x - centers[i]) / h;
        t[i] = -0.5 * z * z;
        best = std::max(best, t[i]);
    }
    double acc = 0.0;
    for (double v : t) acc += std::exp(v - best);
    return best + std::log(acc) - std::log(static_cast<double>(centers.size())) - std::log(h) -
           0.5 * std::log(2.0 * 3.14159265358979323846);
}

double scott_bandwidth(const std::vector<double>& vals) {
    std::size_t n = vals.size();
    double sd = 0.0;
    if (n > 1) {
        double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(n);
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        sd = std::sqrt(ss / static_cast<double>(n - 1));
    }
    return std::max(1e-3, sd * std::pow(static_cast<double>(n), -0.2));
}

}  // namespace

std::vector<double> bohb_sample(const std::vector<TrialRecord>& history, const ConfigSpace& space,
                                double gamma, int min_points, double rho, Rng& rng) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("bohb_sample: bad gamma");
    if (min_points < 1) throw std::invalid_argument("bohb_sample: min_points must be at least 1");
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("bohb_sample: bad rho");
    if (space.dim() < 1) throw std::invalid_argument("bohb_sample: empty config space");

    if (rng.uniform() < rho) return space.sample_unit(rng);

    std::vector<std::size_t> finite;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (!std::isfinite(history[i].score)) continue;  // failed trials stay out of the model
        if (history[i].config.size() != static_cast<std::size_t>(space.dim()))
            throw std::invalid_argument("bohb_sample: record dimension mismatch");
        finite.push_back(i);
    }
    int n = static_cast<int>(finite.size());
    if (n < min_points) return space.sample_unit(rng);

    // Ties favor earlier records; `finite` is ascending so stable sort does.
    std::stable_sort(finite.begin(), finite.end(), [&](std::size_t a, std::size_t b) {
        return history[a].score > history[b].score;
    });
    int n_good = static_cast<int>(std::ceil(gamma * n));
    if (n_good >= n) return space.sample_unit(rng);  // no "bad" side to compare against

    int d = space.dim();
    std::vector<std::vector<double>> good(static_cast<std::size_t>(d)),
        bad(static_cast<std::size_t>(d));
    for (int i = 0; i < n; ++i) {
        const TrialRecord& t = history[finite[static_cast<std::size_t>(i)]];
        for (int j = 0; j < d; ++j)
            (i < n_good ? good : bad)[static_cast<std::size_t>(j)].push_back(
                t.config[static_cast<std::size_t>(j)]);
    }
    std::vector<double> h_good(static_cast<std::size_t>(d)), h_bad(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        h_good[static_cast<std::size_t>(j)] = scott_bandwidth(good[static_cast<std::size_t>(j)]);
        h_bad[static_cast<std::size_t>(j)] = scott_bandwidth(bad[static_cast<std::size_t>(j)]);
    }

    const int kCandidates = 64;
    std::vector<double> best_x;
    double best_ratio = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < kCandidates; ++c) {
        std::vector<double> x(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) {
            const std::vector<double>& g = good[static_cast<std::size_t>(j)];
            double center = g[static_cast<std::size_t>(rng.uniform_int(n_good))];
            x[static_cast<std::size_t>(j)] =
                clamp01(center + h_good[static_cast<std::size_t>(j)] * rng.normal());
        }
        double ratio = 0.0;
        for (int j = 0; j < d; ++j)
            ratio += log_kde(x[static_cast<std::size_t>(j)], good[static_cast<std::size_t>(j)],
                             h_good[static_cast<std::size_t>(j)]) -
                     log_kde(x[static_cast<std::size_t>(j)], bad[static_cast<std::size_t>(j)],
                             h_bad[static_cast<std::size_t>(j)]);
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best_x = x;
        }
    }
    return best_x;
}

RunResult bohb_run(const ConfigSpace& space, const Evaluator& evaluate, int R, int eta,
                   int iterations, std::uint64_t seed, const BohbParams& params) {
    if (!evaluate) throw std::invalid_argument("bohb: null evaluator");
    if (iterations < 1) throw std::invalid_argument("bohb: iterations must be at least 1");
    if (space.dim() < 1) throw std::invalid_argument("bohb: empty config space");
    BudgetSchedule schedule = hyperband_schedule(R, eta);
    int mp = params.min_points > 0 ? params.min_points : space.dim() + 2;

    Rng rng = derive_rng(seed, "bohb");
    RunResult res;
    auto run_eval = [&](const std::vector<double>& cfg, int budget) {
        EvalResult r = evaluate(cfg, budget);
        res.trials.push_back({cfg, budget, r.score, r.cost, seed, r.refreshes});
        res.total_cost += r.cost;
        return r;
    };

    for (int it = 0; it < iterations; ++it) {
        const Bracket& br =
            schedule.brackets[static_cast<std::size_t>(it) % schedule.brackets.size()];
        // Model on the highest budget that has gathered enough finite scores.
        std::map<int, std::vector<TrialRecord>> by_budget;
        for (const TrialRecord& t : res.trials)
            if (std::isfinite(t.score)) by_budget[t.budget].push_back(t);
        std::vector<TrialRecord> hist;
        for (auto rit = by_budget.rbegin(); rit != by_budget.rend(); ++rit) {
            if (static_cast<int>(rit->second.size()) >= mp) {
                hist = rit->second;
                break;
            }
        }
        std::vector<std::vector<double>> pop0;
        for (int i = 0; i < br.rung_pops[0]; ++i)
            pop0.push_back(bohb_sample(hist, space, params.gamma, mp, params.rho, rng));
        successive_halving(
            pop0, [&](const std::vector<double>& c, int b) { return run_eval(c, b); }, eta,
            br.rung_budgets);
    }

    res.best = best_at_full_budget(res.trials, R);
    return res;
}

// ---------------------------------------------------------------------------
// Toy-model evaluators

void AdaptiveTrainerConfig::validate() const {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("adaptive trainer: fraction must be in (0, 1]");
    if (period_epochs < 1)
        throw std::invalid_argument("adaptive trainer: period must be at least 1 epoch");
    if (!(glister_eta > 0.0)) throw std::invalid_argument("adaptive trainer: bad glister eta");
    if (glister_rounds < 1) throw std::invalid_argument("adaptive trainer: bad glister rounds");
}

namespace {

void validate_hpo_dataset(const HpoDataset& data) {
    if (data.train.n() == 0 || data.val.n() == 0)
        throw std::invalid_argument("mlp evaluator: empty split");
    if (data.classes < 2) throw std::invalid_argument("mlp evaluator: need at least 2 classes");
    if (data.train.X.cols() != data.val.X.cols())
        throw std::invalid_argument("mlp evaluator: feature width mismatch");
    for (int y : data.train.y)
        if (y < 0 || y >= data.classes)
            throw std::invalid_argument("mlp evaluator: train label out of range");
    for (int y : data.val.y)
        if (y < 0 || y >= data.classes)
            throw std::invalid_argument("mlp evaluator: val label out of range");
}

struct TrialPlan {
    MlpSpec spec;
    double lr0 = 0.0;
};

// Named hyperparameters the toy model understands; anything else is ignored.
TrialPlan decode_plan(const ConfigSpace& space, const HpoDataset& data,
                      const std::vector<double>& unit) {
    std::vector<double> native = space.decode(unit);
    auto pick = [&](const char* name, double fallback) {
        int i = space.index_of(name);
        return i < 0 ? fallback : native[static_cast<std::size_t>(i)];
    };
    int width = static_cast<int>(std::llround(pick("width", 16)));
    int depth = static_cast<int>(std::llround(pick("depth", 1)));
    double lr = pick("lr", 0.025);
    if (depth < 0) throw std::runtime_error("trial decode: negative depth");
    if (!std::isfinite(lr) || !(lr > 0.0)) throw std::runtime_error("trial decode: bad rate");
    TrialPlan plan;
    plan.spec.input_dim = data.train.X.cols();
    plan.spec.hidden.assign(static_cast<std::size_t>(depth), width);
    plan.spec.classes = data.classes;
    plan.lr0 = lr;
    return plan;
}

void trial_theta_step(const MlpSpec& spec, ParamSet& params, const Batch& mb,
                      const std::vector<double>* weights, double lr, double momentum) {
    Tape tape;
    VarId x = tape.leaf(mb.X);
    MlpTapeOut f = mlp_forward_tape(tape, spec, params, x);
    VarId loss = weights ? tape.weighted_cross_entropy(f.logits, mb.y, *weights)
                         : tape.mean_cross_entropy(f.logits, mb.y);
    tape.backward(loss);
    GradMap grads;
    for (const auto& [name, id] : f.param_ids) grads.emplace_back(name, tape.grad(id));
    sgd_momentum_step(params, grads, lr, momentum);
}

LastLayerProblem featurize_trial(const MlpSpec& spec, const ParamSet& params,
                                 const HpoDataset& data, CostCounter& cost) {
    LastLayerProblem p;
    p.H_train = mlp_forward(spec, params, data.train.X).penultimate;
    p.y_train = data.train.y;
    p.H_val = mlp_forward(spec, params, data.val.X).penultimate;
    p.y_val = data.val.y;
    p.W = params.at("head.W").value;
    p.b = params.at("head.b").value;
    cost.selector_forward_examples += data.train.n() + data.val.n();
    return p;
}

EvalResult run_mlp_trial(const ConfigSpace& space, const HpoDataset& data,
                         const AdaptiveTrainerConfig* atc, std::uint64_t base_seed,
                         const std::vector<double>& unit, int budget) {
    if (budget < 1) throw std::invalid_argument("mlp trial: budget must be at least 1 epoch");
    std::uint64_t h = hash_mix(base_seed, fnv1a("trial"));
    for (double v : unit) h = hash_mix(h, std::bit_cast<std::uint64_t>(v));
    std::uint64_t trial_seed = hash_mix(h, static_cast<std::uint64_t>(budget));

    EvalResult out;
    try {
        TrialPlan plan = decode_plan(space, data, unit);
        Rng init_rng = derive_rng(trial_seed, "init");
        ParamSet params = mlp_init(plan.spec, init_rng);
        Rng batch_rng = derive_rng(trial_seed, "batch");
        Rng selector_rng = derive_rng(trial_seed, "selector");

        long long head_numel = params.at("head.W").value.numel() +
                               params.at("head.b").value.numel();
        long long total_numel = 0;
        for (const Param& p : params.items) total_numel += p.value.numel();
        out.head_fraction = static_cast<double>(head_numel) / static_cast<double>(total_numel);

        int n = data.train.n();
        double fraction = atc ? atc->fraction : 1.0;
        int k = static_cast<int>(std::floor(fraction * n + 1e-9));
        if (k < 1) throw std::runtime_error("mlp trial: subset would be empty");
        const int batch = 64;
        const double momentum = 0.9;
        int steps_per_epoch = (k + batch - 1) / batch;
        int total_steps = budget * steps_per_epoch;

        EpochBatcher batcher;
        std::vector<int> current;
        std::vector<double> weight_of;
        bool have_weights = false;
        std::optional<SubsetSelection> fl_cache;

        auto pick_subset = [&]() -> SubsetSelection {
            if (k >= n) {
                SubsetSelection s;
                s.indices.resize(static_cast<std::size_t>(n));
                std::iota(s.indices.begin(), s.indices.end(), 0);
                s.budget = n;
                return s;
            }
            switch (atc->selector) {
                case SelectorKind::Random:
                    return select_random(n, k, selector_rng);
                case SelectorKind::FacilityLocation:
                    // Similarity sits on the raw inputs, so every refresh
                    // would re-pick the same set; compute it once.
                    if (!fl_cache) {
                        SimilarityMatrix sim = similarity_matrix(data.train.X);
                        fl_cache = select_facility_location_per_class(sim, data.train.y, k,
                                                                      GreedyMode::Lazy,
                                                                      &out.counter);
                    }
                    return *fl_cache;
                case SelectorKind::Entropy: {
                    Tensor probs =
                        softmax_rows(mlp_forward(plan.spec, params, data.train.X).logits);
                    out.counter.selector_forward_examples += n;
                    return entropy_select_from_probs(probs, k, selector_rng);
                }
                case SelectorKind::Glister: {
                    LastLayerProblem p = featurize_trial(plan.spec, params, data, out.counter);
                    GlisterConfig g;
                    g.k = k;
                    g.eta = atc->glister_eta;
                    g.rounds = atc->glister_rounds;
                    g.per_class = atc->glister_per_class;
                    return glister_select(p, g, nullptr, &out.counter);
                }
                case SelectorKind::GradMatch: {
                    LastLayerProblem p = featurize_trial(plan.spec, params, data, out.counter);
                    SubsetSelection s =
                        gradmatch_select(p, k, 0.0, 0.0, false, &out.counter).selection;
                    if (static_cast<int>(s.indices.size()) < k) {
                        // Pursuit can stop early; fill the budget with random
                        // unselected indices at unit weight.
                        std::vector<char> in(static_cast<std::size_t>(n), 0);
                        for (int i : s.indices) in[static_cast<std::size_t>(i)] = 1;
                        std::vector<int> rest;
                        for (int i = 0; i < n; ++i)
                            if (!in[static_cast<std::size_t>(i)]) rest.push_back(i);
                        int need = k - static_cast<int>(s.indices.size());
                        std::vector<int> extra = selector_rng.sample_without_replacement(
                            static_cast<int>(rest.size()), need);
                        std::vector<std::pair<int, double>> merged;
                        std::vector<double> w = s.effective_weights();
                        for (std::size_t i = 0; i < s.indices.size(); ++i)
                            merged.emplace_back(s.indices[i], w[i]);
                        for (int r : extra)
                            merged.emplace_back(rest[static_cast<std::size_t>(r)], 1.0);
                        std::sort(merged.begin(), merged.end());
                        s.indices.clear();
                        s.weights.clear();
                        for (const auto& [idx, wt] : merged) {
                            s.indices.push_back(idx);
                            s.weights.push_back(wt);
                        }
                    }
                    return s;
                }
            }
            throw std::logic_error("mlp trial: unhandled selector");
        };

        int step = 0;
        for (int e = 0; e < budget; ++e) {
            bool refresh_due = atc ? (e % atc->period_epochs == 0) : (e == 0);
            if (refresh_due) {
                SubsetSelection s = pick_subset();
                if (atc) ++out.refreshes;
                // Re-selecting the current subset keeps the epoch iterator.
                if (current.empty() || s.indices != current) {
                    batcher.reset(s.indices);
                    current = s.indices;
                }
                weight_of.assign(static_cast<std::size_t>(n), 1.0);
                have_weights = !s.weights.empty();
                if (have_weights) {
                    std::vector<double> w = s.effective_weights();
                    for (std::size_t i = 0; i < s.indices.size(); ++i)
                        weight_of[static_cast<std::size_t>(s.indices[i])] = w[i];
                }
            }
            for (int b = 0; b < steps_per_epoch; ++b) {
                std::vector<int> rows = batcher.next(batch, batch_rng);
                Batch mb = gather_rows(data.train, rows);
                std::vector<double> w;
                const std::vector<double>* wp = nullptr;
                if (have_weights) {
                    w.reserve(rows.size());
                    for (int r : rows) w.push_back(weight_of[static_cast<std::size_t>(r)]);
                    wp = &w;
                }
                trial_theta_step(plan.spec, params, mb, wp,
                                 cosine_lr(step, total_steps, plan.lr0), momentum);
                out.counter.theta_examples += mb.n();
                ++step;
            }
        }

        ForwardFeatures f = mlp_forward(plan.spec, params, data.val.X);
        out.counter.eval_forward_examples += data.val.n();
        out.score = accuracy(f.logits, data.val.y);
        out.cost = cost_total(out.counter, out.head_fraction);
    } catch (const std::exception&) {
        out = EvalResult{};
        out.score = kNegInf;
    }
    return out;
}

}  // namespace

Evaluator plain_mlp_evaluator(const ConfigSpace& space, const HpoDataset& data,
                              std::uint64_t seed) {
    validate_hpo_dataset(data);
    return [space, data, seed](const std::vector<double>& unit, int budget) {
        return run_mlp_trial(space, data, nullptr, seed, unit, budget);
    };
}

Evaluator adaptive_mlp_evaluator(const ConfigSpace& space, const HpoDataset& data,
                                 const AdaptiveTrainerConfig& atc, std::uint64_t seed) {
    atc.validate();
    validate_hpo_dataset(data);
    if (std::floor(atc.fraction * data.train.n() + 1e-9) < 1.0)
        throw std::invalid_argument("adaptive evaluator: fraction selects no examples");
    return [space, data, atc, seed](const std::vector<double>& unit, int budget) {
        return run_mlp_trial(space, data, &atc, seed, unit, budget);
    };
}

}  // namespace adanas
