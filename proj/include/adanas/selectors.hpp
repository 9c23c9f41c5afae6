#pragma once

#include <string>
#include <vector>

#include "adanas/cost.hpp"
#include "adanas/model.hpp"
#include "adanas/rng.hpp"
#include "adanas/tensor.hpp"

namespace adanas {

struct SubsetSelection {
    std::vector<int> indices;      // strictly increasing, all in [0, ground_n)
    std::vector<double> weights;   // aligned with indices; empty means all-ones
    int budget = 0;                // the k that was requested

    void validate(int ground_n) const;
    std::vector<double> effective_weights() const;
};

// k distinct indices drawn uniformly without replacement.
SubsetSelection select_random(int n, int k, Rng& rng);

// Budget split proportional to class sizes: floor(k * n_c / n) each, then the
// remainder one at a time by (class size desc, class id asc), capped at the
// class size with spill to the next eligible class.
std::vector<int> proportional_budgets(const std::vector<int>& class_sizes, int k);

// ---------------------------------------------------------------------------
// Entropy-histogram sampling

// Row-wise prediction entropy, -sum p log p with 0 log 0 = 0.
std::vector<double> entropy_scores(const Tensor& probs);

struct EntropyHistogram {
    int bins = 0;
    double lo = 0.0, hi = 0.0;
    bool degenerate = false;       // all scores identical: sampling is uniform
    std::vector<int> bin_of;       // per point
    std::vector<int> height;       // per bin
    std::vector<double> p1;        // per-point sampling probability, sums to 1
};

// Equal-width histogram over [min, max] with the given bin count. A point in
// bin b is weighted (1 + |b - (bins-1)/2|) / height(b), normalized over all
// points, so sparse bins far from the middle bin are favored.
EntropyHistogram build_entropy_histogram(const std::vector<double>& scores, int bins = 20);

SubsetSelection entropy_select(const EntropyHistogram& h, int k, Rng& rng);

// Convenience: scores -> histogram -> sample.
SubsetSelection entropy_select_from_probs(const Tensor& probs, int k, Rng& rng, int bins = 20);

// ---------------------------------------------------------------------------
// Facility location

struct SimilarityMatrix {
    int n = 0;
    std::vector<double> s;  // row-major n x n, symmetric, ones on the diagonal

    double at(int i, int j) const { return s[static_cast<std::size_t>(i) * n + j]; }
    double& at(int i, int j) { return s[static_cast<std::size_t>(i) * n + j]; }
};

// Gaussian similarity exp(-||xi-xj||^2 / (2 sigma^2)) with sigma the median
// pairwise distance (1 when there are no distinct pairs).
SimilarityMatrix similarity_matrix(const Tensor& features);

// f(S) = sum_i max_{j in S} s_ij, with f(empty) = 0.
double facility_location_value(const std::vector<int>& s, const SimilarityMatrix& sim);

enum class GreedyMode { Naive, Lazy };

// Greedy maximization of the facility-location objective. Naive re-scans all
// candidates every step; Lazy keeps stale gains in a heap and refreshes only
// the top. Both modes produce the same selection sequence (gains only ever
// shrink, and ties break toward the lower index).
SubsetSelection select_facility_location(const SimilarityMatrix& sim, int k, GreedyMode mode,
                                         CostCounter* cost = nullptr);

// Per-class variant: the objective and greedy run within each class on the
// class-restricted similarity block, with proportional budgets.
SubsetSelection select_facility_location_per_class(const SimilarityMatrix& sim,
                                                   const std::vector<int>& labels, int k,
                                                   GreedyMode mode, CostCounter* cost = nullptr);

// ---------------------------------------------------------------------------
// Last-layer selection problems

// Both gradient-based selectors operate on cached penultimate activations and
// the final linear layer only; the backbone stays frozen during selection.
struct LastLayerProblem {
    Tensor H_train;            // n x h
    std::vector<int> y_train;
    Tensor H_val;              // m x h
    std::vector<int> y_val;
    Tensor W;                  // h x c
    Tensor b;                  // c

    int n() const { return H_train.rows(); }
    int head_dim() const { return W.rows() * W.cols() + b.numel(); }
    void validate() const;
};

// Mean validation-loss gradient of the head at (W, b), flattened as
// [W row-major | b]. rows == nullptr means the whole validation set.
std::vector<double> head_mean_val_grad(const LastLayerProblem& p, const Tensor& W,
                                       const Tensor& b, const std::vector<int>* rows = nullptr);

// Per-example training-loss gradients at (W, b); row layout matches
// head_mean_val_grad.
Tensor head_train_grads(const LastLayerProblem& p, const Tensor& W, const Tensor& b);

// First-order gain of adding example e: eta * <val_grad, g_e>.
double taylor_gain(const std::vector<double>& val_grad, const Tensor& train_grads, int e,
                   double eta);

struct GlisterConfig {
    int k = 0;
    double eta = 0.05;
    int rounds = 10;     // re-linearization rounds; each adds ~k/rounds points
    double lambda = 0.0; // facility-location regularizer weight, 0 disables
    bool per_class = false;
};

// Greedy Taylor selection: per round, re-linearize the one-step-ahead head
// parameters at theta - eta * sum of selected gradients, refresh the
// validation gradient there, and add the highest-gain candidates. lambda > 0
// adds a facility-location marginal gain on top (sim must then be non-null).
// pick_order, when given, receives the additions in the order they were made
// (indices in SubsetSelection stay sorted).
SubsetSelection glister_select(const LastLayerProblem& p, const GlisterConfig& cfg,
                               const SimilarityMatrix* sim = nullptr,
                               CostCounter* cost = nullptr,
                               std::vector<int>* pick_order = nullptr);

// Exact objective the Taylor gain approximates: validation loss after the
// one-step update theta - eta * sum of selected per-example gradients.
// Exposed for oracle verification.
double one_step_val_loss(const LastLayerProblem& p, const std::vector<int>& subset, double eta,
                         const std::vector<int>* val_rows = nullptr);

// ---------------------------------------------------------------------------
// Gradient matching

// min_x ||A x - b||^2 + lambda ||x||^2 subject to x >= 0, by Lawson-Hanson
// active sets on the normal equations. A is p x m with atoms as columns.
std::vector<double> nnls(const Tensor& A, const std::vector<double>& b, double lambda,
                         int max_iter = 0);

struct OmpResult {
    SubsetSelection selection;
    std::vector<double> residual_history;  // ||target - A w|| after each accepted atom
    double residual = 0.0;
};

// Orthogonal matching pursuit toward the target gradient: repeatedly add the
// unselected row of G with the largest inner product against the residual,
// refit nonnegative weights, stop at k atoms, a non-positive best correlation,
// or residual <= tol.
OmpResult gradmatch_omp(const Tensor& G, const std::vector<double>& target, int k, double lambda,
                        double tol, CostCounter* cost = nullptr);

// Per-example grads of the current head plus mean target: the standard way to
// build an OMP instance from a last-layer problem. match_val selects whether
// the target is the mean validation or mean training gradient.
OmpResult gradmatch_select(const LastLayerProblem& p, int k, double lambda, double tol,
                           bool match_val, CostCounter* cost = nullptr);

}  // namespace adanas
