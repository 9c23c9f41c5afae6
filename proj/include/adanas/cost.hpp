#pragma once

namespace adanas {

// Forward/backward work in example-gradient units. A full training gradient
// for one example costs 1; a forward-only pass costs 0.5; selector gradients
// restricted to the final linear layer are discounted by the fraction of
// parameters that layer holds. Greedy gain evaluations are tracked for
// reporting but are dot products over cached vectors, not network passes, so
// they carry no weight in the total.
struct CostCounter {
    long long theta_examples = 0;
    long long alpha_examples = 0;
    long long selector_forward_examples = 0;
    long long selector_head_grad_examples = 0;
    long long selector_gain_evals = 0;
    long long eval_forward_examples = 0;

    void add(const CostCounter& o) {
        theta_examples += o.theta_examples;
        alpha_examples += o.alpha_examples;
        selector_forward_examples += o.selector_forward_examples;
        selector_head_grad_examples += o.selector_head_grad_examples;
        selector_gain_evals += o.selector_gain_evals;
        eval_forward_examples += o.eval_forward_examples;
    }
};

inline double cost_total(const CostCounter& c, double head_param_fraction) {
    return static_cast<double>(c.theta_examples) + static_cast<double>(c.alpha_examples) +
           0.5 * (static_cast<double>(c.selector_forward_examples) +
                  static_cast<double>(c.eval_forward_examples)) +
           head_param_fraction * static_cast<double>(c.selector_head_grad_examples);
}

}  // namespace adanas
