#include "adanas/model.hpp"

#include <cmath>
#include <stdexcept>

#include "adanas/linalg.hpp"

namespace adanas {

Param& ParamSet::add(const std::string& name, Tensor value) {
    if (index_of(name) >= 0) throw std::invalid_argument("param already registered: " + name);
    items.push_back(Param{name, std::move(value), Tensor()});
    Param& p = items.back();
    p.momentum = Tensor::zeros(p.value.shape);
    return p;
}

int ParamSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].name == name) return static_cast<int>(i);
    return -1;
}

Param& ParamSet::at(const std::string& name) {
    int i = index_of(name);
    if (i < 0) throw std::out_of_range("unknown param: " + name);
    return items[static_cast<std::size_t>(i)];
}

const Param& ParamSet::at(const std::string& name) const {
    int i = index_of(name);
    if (i < 0) throw std::out_of_range("unknown param: " + name);
    return items[static_cast<std::size_t>(i)];
}

void sgd_momentum_step(ParamSet& params, const GradMap& grads, double lr, double momentum) {
    for (const auto& [name, g] : grads) {
        Param& p = params.at(name);
        if (!p.value.same_shape(g))
            throw std::invalid_argument("gradient shape mismatch for " + name);
        check_finite(g, "gradient of " + name);
        for (int i = 0; i < g.numel(); ++i) {
            p.momentum[i] = momentum * p.momentum[i] + g[i];
            p.value[i] -= lr * p.momentum[i];
        }
    }
}

double cosine_lr(int step, int total_steps, double lr0) {
    if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
    if (step < 0) step = 0;
    if (step > total_steps) step = total_steps;
    return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * step / total_steps));
}

Batch gather_rows(const Batch& b, const std::vector<int>& rows) {
    Batch out;
    out.X = Tensor::zeros({static_cast<int>(rows.size()), b.X.cols()});
    out.y.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        int src = rows[r];
        if (src < 0 || src >= b.n()) throw std::out_of_range("gather_rows: index out of range");
        for (int c = 0; c < b.X.cols(); ++c) out.X.at(static_cast<int>(r), c) = b.X.at(src, c);
        out.y[r] = b.y[static_cast<std::size_t>(src)];
    }
    return out;
}

namespace {

Tensor init_weight(int in, int out, Rng& rng) {
    Tensor w = Tensor::zeros({in, out});
    double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (int i = 0; i < w.numel(); ++i) w[i] = s * rng.normal();
    return w;
}

}  // namespace

ParamSet mlp_init(const MlpSpec& spec, Rng& rng) {
    if (spec.input_dim <= 0 || spec.classes <= 0)
        throw std::invalid_argument("mlp_init: bad dimensions");
    ParamSet ps;
    int in = spec.input_dim;
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
        int out = spec.hidden[l];
        if (out <= 0) throw std::invalid_argument("mlp_init: bad hidden width");
        std::string base = "l" + std::to_string(l);
        ps.add(base + ".W", init_weight(in, out, rng));
        ps.add(base + ".b", Tensor::zeros({out}));
        in = out;
    }
    ps.add("head.W", init_weight(in, spec.classes, rng));
    ps.add("head.b", Tensor::zeros({spec.classes}));
    return ps;
}

MlpTapeOut mlp_forward_tape(Tape& tape, const MlpSpec& spec, const ParamSet& params, VarId x) {
    MlpTapeOut out;
    VarId h = x;
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
        std::string base = "l" + std::to_string(l);
        VarId w = tape.leaf(params.at(base + ".W").value);
        VarId b = tape.leaf(params.at(base + ".b").value);
        out.param_ids.emplace_back(base + ".W", w);
        out.param_ids.emplace_back(base + ".b", b);
        h = tape.tanh_of(tape.add_rowvec(tape.matmul(h, w), b));
    }
    out.penultimate = h;
    VarId w = tape.leaf(params.at("head.W").value);
    VarId b = tape.leaf(params.at("head.b").value);
    out.param_ids.emplace_back("head.W", w);
    out.param_ids.emplace_back("head.b", b);
    out.logits = tape.add_rowvec(tape.matmul(h, w), b);
    return out;
}

ForwardFeatures mlp_forward(const MlpSpec& spec, const ParamSet& params, const Tensor& X) {
    Tensor h = X;
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
        std::string base = "l" + std::to_string(l);
        h = mat_mul(h, params.at(base + ".W").value);
        const Tensor& b = params.at(base + ".b").value;
        for (int i = 0; i < h.rows(); ++i)
            for (int j = 0; j < h.cols(); ++j) h.at(i, j) = std::tanh(h.at(i, j) + b[j]);
    }
    ForwardFeatures f;
    f.penultimate = h;
    f.logits = mat_mul(h, params.at("head.W").value);
    const Tensor& b = params.at("head.b").value;
    for (int i = 0; i < f.logits.rows(); ++i)
        for (int j = 0; j < f.logits.cols(); ++j) f.logits.at(i, j) += b[j];
    return f;
}

Tensor softmax_rows(const Tensor& logits) {
    Tensor p = logits;
    for (int i = 0; i < p.rows(); ++i) {
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

double mean_cross_entropy_value(const Tensor& logits, const std::vector<int>& labels) {
    if (labels.size() != static_cast<std::size_t>(logits.rows()))
        throw std::invalid_argument("cross entropy: label count mismatch");
    Tensor p = softmax_rows(logits);
    double s = 0.0;
    for (int i = 0; i < p.rows(); ++i) {
        int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= p.cols()) throw std::invalid_argument("cross entropy: label out of range");
        s -= std::log(std::max(p.at(i, y), 1e-300));
    }
    return s / p.rows();
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
    if (labels.size() != static_cast<std::size_t>(logits.rows()))
        throw std::invalid_argument("accuracy: label count mismatch");
    if (logits.rows() == 0) return 0.0;
    int hits = 0;
    for (int i = 0; i < logits.rows(); ++i) {
        int best = 0;
        for (int j = 1; j < logits.cols(); ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        if (best == labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / logits.rows();
}

Tensor per_example_head_grads(const Tensor& penultimate, const Tensor& probs,
                              const std::vector<int>& labels) {
    int n = penultimate.rows();
    int h = penultimate.cols();
    int c = probs.cols();
    if (probs.rows() != n || labels.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("per_example_head_grads: row count mismatch");
    Tensor g = Tensor::zeros({n, h * c + c});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
            double delta = probs.at(i, j) - (j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
            for (int k = 0; k < h; ++k) g.at(i, k * c + j) = penultimate.at(i, k) * delta;
            g.at(i, h * c + j) = delta;
        }
    }
    return g;
}

void train_mlp(const MlpSpec& spec, ParamSet& params, const Batch& data, const TrainOpts& opts,
               Rng& shuffle_rng) {
    if (data.n() == 0) throw std::invalid_argument("train_mlp: empty dataset");
    if (opts.batch <= 0 || opts.epochs < 0) throw std::invalid_argument("train_mlp: bad options");
    int steps_per_epoch = (data.n() + opts.batch - 1) / opts.batch;
    int total_steps = opts.epochs * steps_per_epoch;
    std::vector<int> order(static_cast<std::size_t>(data.n()));
    for (int i = 0; i < data.n(); ++i) order[static_cast<std::size_t>(i)] = i;
    int step = 0;
    for (int e = 0; e < opts.epochs; ++e) {
        shuffle_rng.shuffle(order);
        for (int b = 0; b < steps_per_epoch; ++b) {
            int lo = b * opts.batch;
            int hi = std::min(data.n(), lo + opts.batch);
            std::vector<int> rows(order.begin() + lo, order.begin() + hi);
            Batch mb = gather_rows(data, rows);
            Tape tape;
            VarId x = tape.leaf(mb.X);
            MlpTapeOut f = mlp_forward_tape(tape, spec, params, x);
            VarId loss = tape.mean_cross_entropy(f.logits, mb.y);
            tape.backward(loss);
            GradMap grads;
            for (const auto& [name, id] : f.param_ids) grads.emplace_back(name, tape.grad(id));
            sgd_momentum_step(params, grads, cosine_lr(step, total_steps, opts.lr0),
                              opts.momentum);
            ++step;
        }
    }
}

}  // namespace adanas
