#pragma once

#include <functional>
#include <vector>

#include "adanas/tensor.hpp"

namespace adanas {

using VarId = int;

// Reverse-mode autodiff over a linear tape. Nodes are appended in topological
// order (an op can only reference already-created ids), so the backward sweep
// is a single reverse scan. All math is plain 64-bit doubles.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    VarId leaf(Tensor value);

    const Tensor& value(VarId id) const { return node(id).value; }
    const Tensor& grad(VarId id) const { return node(id).grad; }
    int size() const { return static_cast<int>(nodes_.size()); }

    // out = a @ b
    VarId matmul(VarId a, VarId b);
    // out = a + b, same shape
    VarId add(VarId a, VarId b);
    // out[i,:] = m[i,:] + row
    VarId add_rowvec(VarId m, VarId row);
    VarId tanh_of(VarId a);
    // out = c * a, constant c
    VarId scale(VarId a, double c);
    // out = w[idx] * x, with w a rank-1 variable; both factors get gradients
    VarId scale_by_entry(VarId w, int idx, VarId x);
    // softmax over the entries of a rank-1 input where allowed[i] != 0;
    // disallowed entries are exactly zero in the output and get zero gradient
    VarId masked_softmax(VarId a, std::vector<char> allowed);
    VarId softmax(VarId a);
    // scalar mean cross-entropy of row-wise logits against integer labels
    VarId mean_cross_entropy(VarId logits, std::vector<int> labels);
    // scalar sum(w_i * ce_i) / sum(w_i); rejects non-positive weight mass
    VarId weighted_cross_entropy(VarId logits, std::vector<int> labels,
                                 std::vector<double> weights);
    // scalar 0.5 * sum(a^2)
    VarId half_sum_squares(VarId a);

    // Row-wise softmax probabilities stashed by the cross-entropy ops.
    const Tensor& saved_probs(VarId ce_node) const;

    // Seeds d(root)/d(root) = 1 and accumulates gradients into every node at
    // or below the root. The root must be scalar.
    void backward(VarId root);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Tensor aux;
        std::function<void(Tape&, int)> back;
    };

    Node& node(VarId id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(VarId id) const { return nodes_[static_cast<std::size_t>(id)]; }
    VarId push(Tensor value, std::function<void(Tape&, int)> back);

    std::vector<Node> nodes_;
};

}  // namespace adanas
