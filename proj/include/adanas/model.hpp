#pragma once

#include <string>
#include <utility>
#include <vector>

#include "adanas/rng.hpp"
#include "adanas/tape.hpp"
#include "adanas/tensor.hpp"

namespace adanas {

struct Param {
    std::string name;
    Tensor value;
    Tensor momentum;
};

// Insertion-ordered parameter collection with stable names. Iteration order is
// the registration order, which keeps optimizer updates reproducible.
struct ParamSet {
    std::vector<Param> items;

    Param& add(const std::string& name, Tensor value);
    int index_of(const std::string& name) const;  // -1 when absent
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
};

using GradMap = std::vector<std::pair<std::string, Tensor>>;

// v <- momentum * v + g; p <- p - lr * v. Gradients for names missing from
// the set are an error; params without a gradient entry stay untouched.
void sgd_momentum_step(ParamSet& params, const GradMap& grads, double lr, double momentum);

// lr0 * 0.5 * (1 + cos(pi * step / total_steps)), clamped to [0, total].
double cosine_lr(int step, int total_steps, double lr0);

struct Batch {
    Tensor X;
    std::vector<int> y;
    int n() const { return static_cast<int>(y.size()); }
};

Batch gather_rows(const Batch& b, const std::vector<int>& rows);

struct MlpSpec {
    int input_dim = 0;
    std::vector<int> hidden;
    int classes = 2;
};

// Tanh MLP. Hidden layers are named l0, l1, ...; the final linear layer is
// named head and is the scope for last-layer gradient machinery.
ParamSet mlp_init(const MlpSpec& spec, Rng& rng);

struct MlpTapeOut {
    VarId logits;
    VarId penultimate;
    std::vector<std::pair<std::string, VarId>> param_ids;
};
MlpTapeOut mlp_forward_tape(Tape& tape, const MlpSpec& spec, const ParamSet& params, VarId x);

struct ForwardFeatures {
    Tensor logits;
    Tensor penultimate;
};
ForwardFeatures mlp_forward(const MlpSpec& spec, const ParamSet& params, const Tensor& X);

Tensor softmax_rows(const Tensor& logits);
double mean_cross_entropy_value(const Tensor& logits, const std::vector<int>& labels);
// Fraction of rows whose argmax (ties resolved to the lowest class index)
// equals the label.
double accuracy(const Tensor& logits, const std::vector<int>& labels);

// Row i is the gradient of example i's own cross-entropy loss with respect to
// the final linear layer, laid out as [flatten(outer(h_i, p_i - y_i)) | p_i - y_i]
// with the weight block in row-major order.
Tensor per_example_head_grads(const Tensor& penultimate, const Tensor& probs,
                              const std::vector<int>& labels);

struct TrainOpts {
    int epochs = 10;
    int batch = 64;
    double lr0 = 0.025;
    double momentum = 0.9;
};

// Plain minibatch cross-entropy training with a cosine schedule over all steps.
void train_mlp(const MlpSpec& spec, ParamSet& params, const Batch& data, const TrainOpts& opts,
               Rng& shuffle_rng);

}  // namespace adanas
