#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "adanas/bilevel.hpp"
#include "adanas/cost.hpp"
#include "adanas/model.hpp"
#include "adanas/rng.hpp"

namespace adanas {

// ---------------------------------------------------------------------------
// Hyperparameter space

enum class ParamScale { Linear, Log };

struct HyperParam {
    std::string name;
    ParamScale scale = ParamScale::Linear;
    double lo = 0.0;
    double hi = 1.0;
    // Integer parameters decode to the nearest whole value; lo and hi must
    // themselves be whole numbers.
    bool integer = false;
};

// Named hyperparameters, each mapped from a unit coordinate. Optimizers work
// in [0,1]^d and only evaluators look at native values.
class ConfigSpace {
  public:
    ConfigSpace() = default;
    explicit ConfigSpace(std::vector<HyperParam> params);

    int dim() const { return static_cast<int>(params_.size()); }
    const std::vector<HyperParam>& params() const { return params_; }
    int index_of(const std::string& name) const;  // -1 when absent

    // Unit coordinates to native values. Total on [0,1]^d: inputs are clamped
    // to the cube first, so every vector of the right length decodes.
    std::vector<double> decode(const std::vector<double>& unit) const;
    // Native values back to unit coordinates (clamped into range). Encoding a
    // decoded grid point reproduces the grid coordinate exactly.
    std::vector<double> encode(const std::vector<double>& native) const;

    std::vector<double> sample_unit(Rng& rng) const;

  private:
    std::vector<HyperParam> params_;
};

// ---------------------------------------------------------------------------
// Hyperband brackets

struct Bracket {
    int s = 0;                      // halving exponent of this bracket
    std::vector<int> rung_budgets;  // ascending, last entry == R
    std::vector<int> rung_pops;     // non-increasing, all >= 1
};

struct BudgetSchedule {
    int R = 1;
    int eta = 3;
    std::vector<Bracket> brackets;  // s = s_max down to 0
};

// Standard bracket construction: s_max = floor(log_eta R); bracket s starts
// ceil((s_max+1)/(s+1)) * eta^s configs at budget floor(R / eta^s), and each
// rung multiplies the budget by eta while keeping the top 1/eta configs.
BudgetSchedule hyperband_schedule(int R, int eta);

// ---------------------------------------------------------------------------
// Trial evaluation plumbing

struct EvalResult {
    double score = 0.0;  // higher is better; -inf marks a failed trial
    double cost = 0.0;   // example-gradient units, weighted like cost_total
    int refreshes = 0;   // subset re-selections performed (adaptive trainers)
    CostCounter counter;           // raw bookkeeping behind `cost`
    double head_fraction = 0.0;    // weight applied to head-restricted grads
};

using Evaluator = std::function<EvalResult(const std::vector<double>& unit, int budget)>;

struct TrialRecord {
    std::vector<double> config;  // unit coordinates
    int budget = 0;
    double score = 0.0;
    double cost = 0.0;
    std::uint64_t seed = 0;      // master seed of the run that produced it
    int refreshes = 0;
};

struct RungOutcome {
    int budget = 0;
    std::vector<int> members;    // indices into the initial population, ascending
    std::vector<double> scores;  // aligned with members
};

// Evaluate every config at the first rung budget, keep the top
// max(1, floor(n/eta)) by score (ties favor the lower config index), and
// repeat at each subsequent budget. Returns one outcome per rung.
std::vector<RungOutcome> successive_halving(const std::vector<std::vector<double>>& population,
                                            const Evaluator& evaluate, int eta,
                                            const std::vector<int>& rung_budgets);

// ---------------------------------------------------------------------------
// Differential evolution

// rand/1 mutation: three distinct members r1, r2, r3 give
// clip(x_r1 + F * (x_r2 - x_r3)). Needs at least 4 members so the donors can
// be distinct from a target.
std::vector<double> de_mutate(const std::vector<std::vector<double>>& population, double F,
                              Rng& rng);

// Binomial crossover: each coordinate comes from the mutant with probability
// p_cr, except one uniformly chosen coordinate which always does.
std::vector<double> de_crossover(const std::vector<double>& target,
                                 const std::vector<double>& mutant, double p_cr, Rng& rng);

// Called on every replacement attempt: the rung budget, the slot index within
// that rung, the incumbent's score, the challenger's score, and whether the
// challenger took the slot.
using ReplaceObserver = std::function<void(int budget, int slot, double old_score,
                                           double new_score, bool accepted)>;

struct RunResult {
    TrialRecord best;                  // top score at full budget, earliest on ties
    std::vector<TrialRecord> trials;   // every evaluation in execution order
    double total_cost = 0.0;
};

// Hyperband warm-up followed by per-rung differential evolution. The initial
// bracket pass seeds one subpopulation per distinct budget; each generation
// then walks the budgets in ascending order, proposing rand/1 + binomial
// children slot by slot. A child takes its parent's slot iff its score is at
// least the parent's, so slot scores never decrease. After a rung finishes,
// its best member is re-evaluated at the next budget and greedily replaces
// that rung's worst slot under the same rule. Donors come from the slot's own
// rung when it holds at least 4 members, else from the pooled population, and
// the rung is skipped when even the pool is too small. Deterministic per seed.
RunResult dehb_run(const ConfigSpace& space, const Evaluator& evaluate,
                   const BudgetSchedule& schedule, int generations, std::uint64_t seed,
                   double F = 0.5, double p_cr = 0.5, const ReplaceObserver& on_replace = nullptr);

// ---------------------------------------------------------------------------
// Model-based sampling

// Kernel-density config proposal. `history` holds the records at the target
// budget. With probability rho the sample is uniform; likewise when fewer
// than min_points finite-score records exist. Otherwise the top ceil(gamma*n)
// records by score ("good", ties favor earlier records) and the rest ("bad")
// each get per-dimension Gaussian KDEs with Scott's bandwidth
// max(1e-3, sd * n^(-1/5)); 64 candidates drawn from the good model are
// scored by log-density ratio good/bad and the argmax wins. Only the
// good/bad partition matters, never the score magnitudes.
std::vector<double> bohb_sample(const std::vector<TrialRecord>& history, const ConfigSpace& space,
                                double gamma, int min_points, double rho, Rng& rng);

struct BohbParams {
    double gamma = 0.15;
    int min_points = 0;      // 0 means dim + 2
    double rho = 1.0 / 3.0;  // uniform-exploration probability
};

// Successive-halving brackets (cycling s_max down to 0, `iterations` brackets
// total) whose entrant configs come from bohb_sample. The sampler's history
// is the record set at the highest budget that has accumulated at least
// min_points finite scores; failed trials never enter the model.
RunResult bohb_run(const ConfigSpace& space, const Evaluator& evaluate, int R, int eta,
                   int iterations, std::uint64_t seed, const BohbParams& params = {});

// ---------------------------------------------------------------------------
// Toy-model evaluators

// How an adaptive trial trains: on a fixed-fraction subset of the training
// split, re-selected every period_epochs epochs. A refresh that re-selects
// the current subset leaves the epoch iterator alone, so fraction 1.0
// degenerates to plain full-data training.
struct AdaptiveTrainerConfig {
    double fraction = 0.20;
    int period_epochs = 10;
    SelectorKind selector = SelectorKind::Glister;
    double glister_eta = 0.05;
    int glister_rounds = 10;
    bool glister_per_class = true;

    void validate() const;
};

struct HpoDataset {
    Batch train;  // selection pool
    Batch val;    // scoring split
    int classes = 2;
};

// Both evaluators train a tanh MLP decoded from the config ("width" and
// "depth" integers, "lr" the initial rate; absent names fall back to 16/1/
// 0.025, other names are ignored) for `budget` epochs with batch 64,
// momentum 0.9, and a cosine schedule, then score accuracy on the validation
// split. Budgets below 1 are rejected; any failure to build or train the
// decoded model yields score -inf at zero cost instead of throwing. The
// adaptive variant trains on selector-chosen subsets per `atc`; the plain one
// is its fraction-1.0 degenerate and never refreshes.
Evaluator plain_mlp_evaluator(const ConfigSpace& space, const HpoDataset& data,
                              std::uint64_t seed);
Evaluator adaptive_mlp_evaluator(const ConfigSpace& space, const HpoDataset& data,
                                 const AdaptiveTrainerConfig& atc, std::uint64_t seed);

}  // namespace adanas
