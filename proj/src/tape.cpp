#include "adanas/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "adanas/linalg.hpp"

namespace adanas {

VarId Tape::push(Tensor value, std::function<void(Tape&, int)> back) {
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<VarId>(nodes_.size()) - 1;
}

VarId Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

VarId Tape::matmul(VarId a, VarId b) {
    Tensor out = mat_mul(value(a), value(b));
    return push(std::move(out), [a, b](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        Tensor da = mat_mul_nt(g, t.value(b));
        Tensor db = mat_mul_tn(t.value(a), g);
        for (int i = 0; i < da.numel(); ++i) t.node(a).grad[i] += da[i];
        for (int i = 0; i < db.numel(); ++i) t.node(b).grad[i] += db[i];
    });
}

VarId Tape::add(VarId a, VarId b) {
    if (!value(a).same_shape(value(b))) throw std::invalid_argument("add: shape mismatch");
    Tensor out = value(a);
    for (int i = 0; i < out.numel(); ++i) out[i] += value(b)[i];
    return push(std::move(out), [a, b](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        for (int i = 0; i < g.numel(); ++i) {
            t.node(a).grad[i] += g[i];
            t.node(b).grad[i] += g[i];
        }
    });
}

VarId Tape::add_rowvec(VarId m, VarId row) {
    const Tensor& mv = value(m);
    const Tensor& rv = value(row);
    if (rv.numel() != mv.cols()) throw std::invalid_argument("add_rowvec: width mismatch");
    Tensor out = mv;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) += rv[j];
    return push(std::move(out), [m, row](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        for (int i = 0; i < g.numel(); ++i) t.node(m).grad[i] += g[i];
        Tensor& rg = t.node(row).grad;
        for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) rg[j] += g.at(i, j);
    });
}

VarId Tape::tanh_of(VarId a) {
    Tensor out = value(a);
    for (int i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
    return push(std::move(out), [a](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& y = t.node(self).value;
        for (int i = 0; i < g.numel(); ++i) t.node(a).grad[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

VarId Tape::scale(VarId a, double c) {
    Tensor out = value(a);
    for (int i = 0; i < out.numel(); ++i) out[i] *= c;
    return push(std::move(out), [a, c](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        for (int i = 0; i < g.numel(); ++i) t.node(a).grad[i] += c * g[i];
    });
}

VarId Tape::scale_by_entry(VarId w, int idx, VarId x) {
    const Tensor& wv = value(w);
    if (wv.ndim() != 1 || idx < 0 || idx >= wv.numel())
        throw std::invalid_argument("scale_by_entry: bad weight index");
    double c = wv[idx];
    Tensor out = value(x);
    for (int i = 0; i < out.numel(); ++i) out[i] *= c;
    return push(std::move(out), [w, idx, x](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& xv = t.value(x);
        double c = t.value(w)[idx];
        double dw = 0.0;
        for (int i = 0; i < g.numel(); ++i) {
            dw += g[i] * xv[i];
            t.node(x).grad[i] += c * g[i];
        }
        t.node(w).grad[idx] += dw;
    });
}

VarId Tape::masked_softmax(VarId a, std::vector<char> allowed) {
    const Tensor& av = value(a);
    if (av.ndim() != 1) throw std::invalid_argument("masked_softmax: rank-1 input required");
    if (allowed.size() != static_cast<std::size_t>(av.numel()))
        throw std::invalid_argument("masked_softmax: mask length mismatch");
    bool any = false;
    double mx = -1e300;
    for (int i = 0; i < av.numel(); ++i)
        if (allowed[static_cast<std::size_t>(i)]) {
            any = true;
            mx = std::max(mx, av[i]);
        }
    if (!any) throw std::invalid_argument("masked_softmax: empty mask");
    Tensor out = Tensor::zeros(av.shape);
    double z = 0.0;
    for (int i = 0; i < av.numel(); ++i)
        if (allowed[static_cast<std::size_t>(i)]) {
            out[i] = std::exp(av[i] - mx);
            z += out[i];
        }
    for (int i = 0; i < av.numel(); ++i) out[i] /= z;
    return push(std::move(out), [a, allowed](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& s = t.node(self).value;
        double gs = 0.0;
        for (int i = 0; i < g.numel(); ++i) gs += g[i] * s[i];
        for (int i = 0; i < g.numel(); ++i)
            if (allowed[static_cast<std::size_t>(i)])
                t.node(a).grad[i] += s[i] * (g[i] - gs);
    });
}

VarId Tape::softmax(VarId a) {
    return masked_softmax(a, std::vector<char>(static_cast<std::size_t>(value(a).numel()), 1));
}

namespace {

// Row-wise max-subtracted softmax plus the mean of -log p[label].
Tensor ce_probs(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2) throw std::invalid_argument("cross_entropy: rank-2 logits required");
    if (labels.size() != static_cast<std::size_t>(logits.rows()))
        throw std::invalid_argument("cross_entropy: label count mismatch");
    Tensor p = logits;
    for (int i = 0; i < p.rows(); ++i) {
        int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= p.cols()) throw std::invalid_argument("cross_entropy: label out of range");
        double mx = -1e300;
        for (int j = 0; j < p.cols(); ++j) mx = std::max(mx, p.at(i, j));
        double z = 0.0;
        for (int j = 0; j < p.cols(); ++j) {
            p.at(i, j) = std::exp(p.at(i, j) - mx);
            z += p.at(i, j);
        }
        for (int j = 0; j < p.cols(); ++j) p.at(i, j) /= z;
    }
    return p;
}

}  // namespace

VarId Tape::mean_cross_entropy(VarId logits, std::vector<int> labels) {
    Tensor p = ce_probs(value(logits), labels);
    double loss = 0.0;
    for (int i = 0; i < p.rows(); ++i)
        loss -= std::log(std::max(p.at(i, labels[static_cast<std::size_t>(i)]), 1e-300));
    loss /= p.rows();
    VarId id = push(Tensor::scalar(loss), [logits, labels](Tape& t, int self) {
        double g = t.node(self).grad[0];
        const Tensor& p = t.node(self).aux;
        Tensor& dl = t.node(logits).grad;
        double inv_n = 1.0 / p.rows();
        for (int i = 0; i < p.rows(); ++i)
            for (int j = 0; j < p.cols(); ++j) {
                double delta = p.at(i, j) - (j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
                dl.at(i, j) += g * inv_n * delta;
            }
    });
    node(id).aux = std::move(p);
    return id;
}

VarId Tape::weighted_cross_entropy(VarId logits, std::vector<int> labels,
                                   std::vector<double> weights) {
    const Tensor& lv = value(logits);
    if (weights.size() != static_cast<std::size_t>(lv.rows()))
        throw std::invalid_argument("weighted_cross_entropy: weight count mismatch");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("weighted_cross_entropy: negative weight");
        wsum += w;
    }
    if (wsum <= 0.0) throw std::invalid_argument("weighted_cross_entropy: zero weight mass");
    Tensor p = ce_probs(lv, labels);
    double loss = 0.0;
    for (int i = 0; i < p.rows(); ++i)
        loss -= weights[static_cast<std::size_t>(i)] *
                std::log(std::max(p.at(i, labels[static_cast<std::size_t>(i)]), 1e-300));
    loss /= wsum;
    VarId id = push(Tensor::scalar(loss), [logits, labels, weights, wsum](Tape& t, int self) {
        double g = t.node(self).grad[0];
        const Tensor& p = t.node(self).aux;
        Tensor& dl = t.node(logits).grad;
        for (int i = 0; i < p.rows(); ++i) {
            double wi = weights[static_cast<std::size_t>(i)] / wsum;
            for (int j = 0; j < p.cols(); ++j) {
                double delta = p.at(i, j) - (j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
                dl.at(i, j) += g * wi * delta;
            }
        }
    });
    node(id).aux = std::move(p);
    return id;
}

VarId Tape::half_sum_squares(VarId a) {
    double s = 0.0;
    for (int i = 0; i < value(a).numel(); ++i) s += value(a)[i] * value(a)[i];
    return push(Tensor::scalar(0.5 * s), [a](Tape& t, int self) {
        double g = t.node(self).grad[0];
        const Tensor& x = t.value(a);
        for (int i = 0; i < x.numel(); ++i) t.node(a).grad[i] += g * x[i];
    });
}

const Tensor& Tape::saved_probs(VarId ce_node) const {
    const Tensor& aux = node(ce_node).aux;
    if (aux.numel() == 0) throw std::logic_error("saved_probs: node has no stored probabilities");
    return aux;
}

void Tape::backward(VarId root) {
    if (root < 0 || root >= size()) throw std::invalid_argument("backward: bad root id");
    if (node(root).value.numel() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    for (int i = 0; i <= root; ++i) {
        Node& n = node(i);
        n.grad = Tensor::zeros(n.value.shape);
    }
    node(root).grad[0] = 1.0;
    for (int i = root; i >= 0; --i)
        if (node(i).back) node(i).back(*this, i);
}

}  // namespace adanas
