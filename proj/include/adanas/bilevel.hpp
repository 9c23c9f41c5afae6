#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "adanas/cost.hpp"
#include "adanas/model.hpp"
#include "adanas/rng.hpp"
#include "adanas/selectors.hpp"
#include "adanas/supernet.hpp"

namespace adanas {

enum class SelectorKind { Random, FacilityLocation, Entropy, Glister, GradMatch };

const char* selector_name(SelectorKind k);
SelectorKind selector_from_name(const std::string& s);

// Joint search settings. Time is counted in mini-batch steps internally; an
// epoch is one pass over the active subset, so the step count per epoch is
// ceil(k / batch). The subset period is given in epochs (a value <= 0 selects
// once at step 0 and never refreshes); the alpha period is given in steps and
// defaults to alternating alpha/theta updates.
struct BilevelConfig {
    int epochs = 100;
    int subset_period_epochs = 10;
    int alpha_period_steps = 1;
    double fraction = 0.10;
    SelectorKind selector = SelectorKind::Glister;
    double zeta = 0.0;            // unrolled-step rate for the alpha gradient; 0 = first order
    double lr0 = 0.025;           // theta rate, cosine-annealed over all steps
    double lr_alpha = 0.025;      // alpha rate, constant
    double momentum = 0.9;
    int batch = 64;
    int projection_epochs = 25;
    bool project_on_full = false; // tune projection on the full train split instead of the subset
    int projection_noise_samples = 1;  // paired stochastic-op draws averaged per score
    double glister_eta = 0.05;
    int glister_rounds = 10;
    bool glister_per_class = true;
    double gradmatch_lambda = 0.0;
    int entropy_proxy_epochs = 10;

    void validate() const;
};

struct StepEvents {
    bool refresh = false;
    bool alpha = false;
};

// The step-level event pattern: refresh at t == 0 (mod refresh_period), alpha
// update at t == 0 (mod alpha_period). refresh_period <= 0 means a single
// refresh at step 0.
std::vector<StepEvents> schedule_events(int total_steps, int refresh_period, int alpha_period);

struct RefreshEvent {
    int step = 0;
    SubsetSelection subset;
};

struct SearchTrace {
    int total_steps = 0;
    int steps_per_epoch = 0;
    std::vector<int> alpha_step_indices;
    std::vector<RefreshEvent> refreshes;
    std::vector<ProjectDecision> decisions;
    CostCounter cost;
    double head_param_fraction = 0.0;
    double wall_seconds = 0.0;
    Architecture arch;
};

// The two search-time splits. The selector's ground set is the train split;
// alpha updates and perturbation scoring read the validation split.
struct SearchData {
    Batch train;
    Batch val;
};

// Called after each joint step with the step index and the live network.
using StepObserver = std::function<void(int step, const Supernet& net)>;

// The joint loop: per step, refresh the subset when due (carrying it forward
// otherwise), take an alpha step when due, then a theta SGD step on the
// current subset's next mini-batch; afterwards discretize by perturbation
// projection, tuning on the last subset (or the full train split when
// project_on_full is set). Weights never reset on refresh. Deterministic per
// seed; all randomness flows through named substreams of the seed.
std::pair<Architecture, SearchTrace> adaptive_dpt(const SearchSpace& space, const SearchData& data,
                                                  const BilevelConfig& cfg, std::uint64_t seed,
                                                  const StepObserver& observe = nullptr);

// Example-gradient accounting split out of a trace. theta_examples is the
// plain sum of |batch| over every theta step including projection tuning;
// selector_overhead is the refresh work (featurization forwards at half
// weight, head-restricted gradients scaled by the head parameter fraction);
// alpha_examples and eval_overhead cover the alpha steps and the
// perturbation-scoring forwards. total() matches cost_total on the counter.
struct CostCount {
    long long theta_examples = 0;
    double selector_overhead = 0.0;
    double alpha_examples = 0.0;
    double eval_overhead = 0.0;

    double total() const {
        return static_cast<double>(theta_examples) + selector_overhead + alpha_examples +
               eval_overhead;
    }
};

CostCount count_cost(const SearchTrace& trace);

// Trains the discrete architecture from a fresh initialization on the given
// training data and returns accuracy on the test data. Deterministic per seed.
double train_final(const SearchSpace& space, const Architecture& arch, const Batch& train,
                   const Batch& test, int epochs, std::uint64_t seed,
                   const TrainOpts& opts = TrainOpts{}, CostCounter* cost = nullptr);

// Cycles mini-batches over a fixed index set: a fresh shuffle starts each
// pass, then contiguous slices of at most `batch` indices until exhausted.
struct EpochBatcher {
    std::vector<int> order;
    int pos = 0;

    void reset(std::vector<int> indices) {
        order = std::move(indices);
        pos = static_cast<int>(order.size());
    }
    bool at_epoch_start() const { return pos >= static_cast<int>(order.size()); }
    std::vector<int> next(int batch, Rng& rng) {
        if (order.empty()) return {};
        if (pos >= static_cast<int>(order.size())) {
            rng.shuffle(order);
            pos = 0;
        }
        int hi = std::min(static_cast<int>(order.size()), pos + batch);
        std::vector<int> out(order.begin() + pos, order.begin() + hi);
        pos = hi;
        return out;
    }
};

}  // namespace adanas
