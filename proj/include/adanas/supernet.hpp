#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "adanas/cost.hpp"
#include "adanas/model.hpp"
#include "adanas/rng.hpp"
#include "adanas/tape.hpp"
#include "adanas/tensor.hpp"

namespace adanas {

enum class OpKind { Zero, Identity, Linear, LinearNonlin, AvgCombine, Noise };

const char* op_name(OpKind k);
OpKind op_from_name(const std::string& s);
bool op_has_params(OpKind k);

struct SpaceEdge {
    int from = 0;
    int to = 0;
    std::vector<OpKind> ops;
};

// A DAG over feature nodes of constant width. Node 0 is the input; the last
// node feeds an optional linear classification head (classes == 0 means the
// last node's features are the output directly).
struct SearchSpace {
    std::string name;
    int nodes = 0;
    int width = 0;
    int classes = 0;
    std::vector<SpaceEdge> edges;  // kept sorted by (to, from)

    void validate() const;
    long long num_architectures() const;
};

// Text form: "nodes/width/classes" headers plus one "edge FROM TO op..." line
// per edge. '#' starts a comment.
SearchSpace parse_space(std::istream& in);
std::string space_to_text(const SearchSpace& s);

// Built-in toy spaces. The width and class count are bound at call time so a
// space can match whatever dataset it is searched on.
//   nb201-toy : 4 nodes, 6 edges, {zero identity linear linear_nonlin avg_combine}
//   oracle-27 : 3 nodes, 3 edges, {zero linear linear_nonlin}; 27 architectures
//   s4-toy    : 4 nodes, 6 edges, {linear noise}
SearchSpace builtin_space(const std::string& name, int width, int classes);

// One op choice per edge, indices into SpaceEdge::ops.
struct Architecture {
    std::vector<int> op_index;
    bool operator==(const Architecture&) const = default;
};

std::vector<Architecture> enumerate_architectures(const SearchSpace& s);
std::string arch_to_string(const SearchSpace& s, const Architecture& a);
Architecture arch_from_string(const SearchSpace& s, const std::string& text);

// Softmax-mixed edge output: sum over allowed ops of softmax(alpha)_o * out_o.
// op_outputs entries for disallowed ops are ignored.
Tensor mixed_edge_output(const Tensor& alpha, const std::vector<Tensor>& op_outputs,
                         const std::vector<char>& allowed);

// Weight-sharing network over a search space: one set of op parameters per
// edge plus one mixing vector alpha per edge. Noise ops read from a dedicated
// stream so that stochastic ops are reproducible and restorable.
struct Supernet {
    SearchSpace space;
    ParamSet params;
    std::vector<Tensor> alpha;           // rank-1, one per edge
    std::vector<std::vector<char>> allowed;
    Rng noise_rng{0};

    Supernet(SearchSpace sp, std::uint64_t theta_seed, std::uint64_t noise_seed);

    int edge_count() const { return static_cast<int>(space.edges.size()); }
    // Restricts an edge to a single op (mask only; alpha is untouched).
    void restrict_edge(int edge, int op);
    void restrict_to(const Architecture& a);
    bool edge_decided(int edge) const;
    // Fraction of trainable parameters living in the classification head.
    double head_param_fraction() const;

    std::mt19937_64 noise_state() const { return noise_rng.state(); }
    void set_noise_state(const std::mt19937_64& s) { noise_rng.set_state(s); }
};

struct SupernetTape {
    std::vector<std::pair<std::string, VarId>> theta_ids;
    std::vector<VarId> alpha_ids;
    VarId logits = -1;
    VarId penultimate = -1;
};

// Differentiable forward. theta_override, when given, supplies parameter
// values (same names) in place of net.params; used by the unrolled alpha step.
SupernetTape supernet_forward_tape(Tape& tape, Supernet& net, const Tensor& X,
                                   const ParamSet* theta_override = nullptr);

// Evaluation-only forward; consumes the same noise draws as the tape version.
ForwardFeatures supernet_forward(Supernet& net, const Tensor& X);

double supernet_accuracy(Supernet& net, const Batch& data, CostCounter* cost = nullptr);

// One SGD-with-momentum step on the op and head parameters. Optional
// per-example weights select the weighted cross-entropy objective.
void supernet_theta_step(Supernet& net, const Batch& batch, const std::vector<double>* weights,
                         double lr, double momentum, CostCounter* cost = nullptr);

// One plain gradient step on alpha from the validation loss. zeta > 0 first
// takes a virtual step theta' = theta - zeta * grad L_train(train_batch) and
// differentiates the validation loss at theta' with respect to alpha only.
void supernet_alpha_step(Supernet& net, const Batch& train_batch, const Batch& val_batch,
                         double zeta, double lr_alpha, CostCounter* cost = nullptr);

Architecture discretize_argmax(const Supernet& net);

// Perturbation scores for one edge: score[o] = acc(all allowed) - acc(o
// masked out, remaining weights renormalized by the softmax). The noise
// stream is rewound between evaluations and restored afterwards, so masking
// an op that is already excluded scores exactly zero. With stochastic ops the
// accuracy of one draw is a noisy estimate of the quantity the score is
// defined on, so `samples` paired draws can be averaged.
std::vector<double> perturbation_scores(Supernet& net, const Batch& val, int edge,
                                        CostCounter* cost = nullptr, int samples = 1);

struct ProjectOpts {
    int tune_epochs = 25;  // total across all edges, integer-split per edge
    int batch = 64;
    double lr0 = 0.025;
    double momentum = 0.9;
    int noise_samples = 1;  // paired draws averaged per perturbation score
};

struct ProjectDecision {
    int edge = 0;
    int op = 0;
    std::vector<double> scores;
};

// Perturbation-based discretization: edges are decided one at a time in
// canonical order, fine-tuning theta on tune_data after each decision. The
// tuning budget is tune_epochs split evenly across undecided edges with the
// remainder going to the earliest edges; the cosine schedule spans the whole
// projection phase.
Architecture project(Supernet& net, const Batch& val, const Batch& tune_data,
                     const ProjectOpts& opts, Rng& shuffle_rng, CostCounter* cost = nullptr,
                     std::vector<ProjectDecision>* decisions = nullptr);

}  // namespace adanas
