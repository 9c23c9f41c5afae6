#include "adanas/selectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "adanas/linalg.hpp"

namespace adanas {

void SubsetSelection::validate(int ground_n) const {
    if (budget < 0) throw std::invalid_argument("selection: negative budget");
    if (static_cast<int>(indices.size()) > ground_n)
        throw std::invalid_argument("selection: more indices than ground set");
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= ground_n)
            throw std::invalid_argument("selection: index out of range");
        if (i > 0 && indices[i] <= indices[i - 1])
            throw std::invalid_argument("selection: indices must be strictly increasing");
    }
    if (!weights.empty()) {
        if (weights.size() != indices.size())
            throw std::invalid_argument("selection: weight count mismatch");
        for (double w : weights)
            if (!(w >= 0.0)) throw std::invalid_argument("selection: negative weight");
    }
}

std::vector<double> SubsetSelection::effective_weights() const {
    if (!weights.empty()) return weights;
    return std::vector<double>(indices.size(), 1.0);
}

SubsetSelection select_random(int n, int k, Rng& rng) {
    if (k <= 0 || k > n) throw std::invalid_argument("random selection: budget out of range");
    SubsetSelection s;
    s.budget = k;
    s.indices = rng.sample_without_replacement(n, k);
    return s;
}

std::vector<int> proportional_budgets(const std::vector<int>& class_sizes, int k) {
    int n = 0;
    for (int c : class_sizes) {
        if (c < 0) throw std::invalid_argument("budgets: negative class size");
        n += c;
    }
    if (k < 0 || k > n) throw std::invalid_argument("budgets: k out of range");
    std::size_t m = class_sizes.size();
    std::vector<int> out(m, 0);
    int assigned = 0;
    for (std::size_t c = 0; c < m; ++c) {
        out[c] = n > 0 ? static_cast<int>(static_cast<long long>(k) * class_sizes[c] / n) : 0;
        assigned += out[c];
    }
    // Distribute the remainder to the largest classes first, then by id, and
    // cap at the class size (spilling keeps going around until k is placed).
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (class_sizes[a] != class_sizes[b]) return class_sizes[a] > class_sizes[b];
        return a < b;
    });
    while (assigned < k) {
        bool placed = false;
        for (std::size_t c : order) {
            if (assigned == k) break;
            if (out[c] < class_sizes[c]) {
                ++out[c];
                ++assigned;
                placed = true;
            }
        }
        if (!placed) throw std::logic_error("budgets: could not place remainder");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Entropy-histogram sampling

std::vector<double> entropy_scores(const Tensor& probs) {
    std::vector<double> out(static_cast<std::size_t>(probs.rows()));
    for (int i = 0; i < probs.rows(); ++i) {
        double h = 0.0;
        for (int j = 0; j < probs.cols(); ++j) {
            double p = probs.at(i, j);
            if (p > 0.0) h -= p * std::log(p);
        }
        out[static_cast<std::size_t>(i)] = h;
    }
    return out;
}

EntropyHistogram build_entropy_histogram(const std::vector<double>& scores, int bins) {
    if (bins <= 0) throw std::invalid_argument("histogram: bin count must be positive");
    if (scores.empty()) throw std::invalid_argument("histogram: no scores");
    EntropyHistogram h;
    h.bins = bins;
    h.lo = *std::min_element(scores.begin(), scores.end());
    h.hi = *std::max_element(scores.begin(), scores.end());
    std::size_t n = scores.size();
    h.bin_of.assign(n, 0);
    h.height.assign(static_cast<std::size_t>(bins), 0);
    h.p1.assign(n, 0.0);
    double range = h.hi - h.lo;
    if (range <= 1e-300) {
        // Every score identical: one occupied bin carries no signal, fall back
        // to uniform sampling.
        h.degenerate = true;
        h.height[0] = static_cast<int>(n);
        for (double& p : h.p1) p = 1.0 / static_cast<double>(n);
        return h;
    }
    for (std::size_t i = 0; i < n; ++i) {
        int b = static_cast<int>((scores[i] - h.lo) / range * bins);
        b = std::clamp(b, 0, bins - 1);
        h.bin_of[i] = b;
        ++h.height[static_cast<std::size_t>(b)];
    }
    int mid = (bins - 1) / 2;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        int b = h.bin_of[i];
        double w = 1.0 + std::abs(b - mid);
        h.p1[i] = w / h.height[static_cast<std::size_t>(b)];
        total += h.p1[i];
    }
    for (double& p : h.p1) p /= total;
    return h;
}

SubsetSelection entropy_select(const EntropyHistogram& h, int k, Rng& rng) {
    int n = static_cast<int>(h.p1.size());
    if (k <= 0 || k > n) throw std::invalid_argument("entropy selection: budget out of range");
    // Weighted sampling without replacement by inverse CDF over the remaining
    // mass; k and n are desk-scale so the quadratic loop is fine.
    std::vector<double> w = h.p1;
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    SubsetSelection s;
    s.budget = k;
    for (int pick = 0; pick < k; ++pick) {
        double mass = 0.0;
        for (int i = 0; i < n; ++i)
            if (!taken[static_cast<std::size_t>(i)]) mass += w[static_cast<std::size_t>(i)];
        double u = rng.uniform() * mass;
        int chosen = -1;
        for (int i = 0; i < n; ++i) {
            if (taken[static_cast<std::size_t>(i)]) continue;
            u -= w[static_cast<std::size_t>(i)];
            chosen = i;
            if (u <= 0.0) break;
        }
        taken[static_cast<std::size_t>(chosen)] = 1;
        s.indices.push_back(chosen);
    }
    std::sort(s.indices.begin(), s.indices.end());
    return s;
}

SubsetSelection entropy_select_from_probs(const Tensor& probs, int k, Rng& rng, int bins) {
    EntropyHistogram h = build_entropy_histogram(entropy_scores(probs), bins);
    return entropy_select(h, k, rng);
}

// ---------------------------------------------------------------------------
// Facility location

SimilarityMatrix similarity_matrix(const Tensor& features) {
    int n = features.rows();
    if (n <= 0) throw std::invalid_argument("similarity: empty feature matrix");
    std::vector<double> d2(static_cast<std::size_t>(n) * n, 0.0);
    std::vector<double> pair_d;
    pair_d.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double q = sq_dist_rows(features, i, j);
            d2[static_cast<std::size_t>(i) * n + j] = q;
            d2[static_cast<std::size_t>(j) * n + i] = q;
            pair_d.push_back(std::sqrt(q));
        }
    double sigma = 1.0;
    if (!pair_d.empty()) {
        std::sort(pair_d.begin(), pair_d.end());
        double med = pair_d[(pair_d.size() - 1) / 2];
        if (med > 0.0) sigma = med;
    }
    SimilarityMatrix sim;
    sim.n = n;
    sim.s.resize(static_cast<std::size_t>(n) * n);
    double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t i = 0; i < sim.s.size(); ++i) sim.s[i] = std::exp(-d2[i] * inv);
    return sim;
}

double facility_location_value(const std::vector<int>& s, const SimilarityMatrix& sim) {
    if (s.empty()) return 0.0;
    double total = 0.0;
    for (int i = 0; i < sim.n; ++i) {
        double best = 0.0;
        bool first = true;
        for (int j : s) {
            if (j < 0 || j >= sim.n) throw std::invalid_argument("facility value: bad index");
            double v = sim.at(i, j);
            if (first || v > best) {
                best = v;
                first = false;
            }
        }
        total += best;
    }
    return total;
}

namespace {

// Marginal gain of adding e given per-point coverage so far. Both greedy
// modes must call exactly this so their floating-point paths agree.
double fl_gain(const SimilarityMatrix& sim, const std::vector<int>& points,
               const std::vector<double>& curmax, int e) {
    double g = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        double d = sim.at(points[i], e) - curmax[i];
        if (d > 0.0) g += d;
    }
    return g;
}

// Greedy over an index pool; curmax covers the pool in pool order.
std::vector<int> fl_greedy_pool(const SimilarityMatrix& sim, const std::vector<int>& pool, int k,
                                GreedyMode mode, CostCounter* cost) {
    std::vector<double> curmax(pool.size(), 0.0);
    std::vector<char> taken(pool.size(), 0);
    std::vector<int> picked;

    auto commit = [&](std::size_t cand) {
        taken[cand] = 1;
        picked.push_back(pool[cand]);
        for (std::size_t i = 0; i < pool.size(); ++i)
            curmax[i] = std::max(curmax[i], sim.at(pool[i], pool[cand]));
    };

    if (mode == GreedyMode::Naive) {
        for (int step = 0; step < k; ++step) {
            int best = -1;
            double bg = 0.0;
            for (std::size_t c = 0; c < pool.size(); ++c) {
                if (taken[c]) continue;
                double g = fl_gain(sim, pool, curmax, pool[c]);
                if (cost) ++cost->selector_gain_evals;
                if (best < 0 || g > bg) {
                    best = static_cast<int>(c);
                    bg = g;
                }
            }
            commit(static_cast<std::size_t>(best));
        }
        return picked;
    }

    // Lazy: keep stale gains in a max-heap with (gain desc, index asc) order;
    // refresh only the top. Gains never grow as coverage grows, so a fresh
    // top is a true argmax and the sequence matches the naive scan.
    struct Entry {
        double gain;
        std::size_t cand;
        int round;
    };
    auto cmp = [](const Entry& a, const Entry& b) {
        if (a.gain != b.gain) return a.gain < b.gain;
        return a.cand > b.cand;
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> heap(cmp);
    for (std::size_t c = 0; c < pool.size(); ++c) {
        double g = fl_gain(sim, pool, curmax, pool[c]);
        if (cost) ++cost->selector_gain_evals;
        heap.push(Entry{g, c, 0});
    }
    int round = 0;
    for (int step = 0; step < k; ++step) {
        while (true) {
            Entry top = heap.top();
            heap.pop();
            if (taken[top.cand]) continue;
            if (top.round == round) {
                commit(top.cand);
                ++round;
                break;
            }
            top.gain = fl_gain(sim, pool, curmax, pool[top.cand]);
            if (cost) ++cost->selector_gain_evals;
            top.round = round;
            heap.push(top);
        }
    }
    return picked;
}

}  // namespace

SubsetSelection select_facility_location(const SimilarityMatrix& sim, int k, GreedyMode mode,
                                         CostCounter* cost) {
    if (k <= 0 || k > sim.n)
        throw std::invalid_argument("facility location: budget out of range");
    std::vector<int> pool(static_cast<std::size_t>(sim.n));
    std::iota(pool.begin(), pool.end(), 0);
    SubsetSelection s;
    s.budget = k;
    s.indices = fl_greedy_pool(sim, pool, k, mode, cost);
    std::sort(s.indices.begin(), s.indices.end());
    return s;
}

SubsetSelection select_facility_location_per_class(const SimilarityMatrix& sim,
                                                   const std::vector<int>& labels, int k,
                                                   GreedyMode mode, CostCounter* cost) {
    if (labels.size() != static_cast<std::size_t>(sim.n))
        throw std::invalid_argument("facility location: label count mismatch");
    int classes = 0;
    for (int y : labels) {
        if (y < 0) throw std::invalid_argument("facility location: negative label");
        classes = std::max(classes, y + 1);
    }
    std::vector<std::vector<int>> pools(static_cast<std::size_t>(classes));
    for (int i = 0; i < sim.n; ++i)
        pools[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
    std::vector<int> sizes;
    for (const auto& p : pools) sizes.push_back(static_cast<int>(p.size()));
    std::vector<int> budgets = proportional_budgets(sizes, k);
    SubsetSelection s;
    s.budget = k;
    for (std::size_t c = 0; c < pools.size(); ++c) {
        if (budgets[c] == 0) continue;
        std::vector<int> got = fl_greedy_pool(sim, pools[c], budgets[c], mode, cost);
        s.indices.insert(s.indices.end(), got.begin(), got.end());
    }
    std::sort(s.indices.begin(), s.indices.end());
    return s;
}

// ---------------------------------------------------------------------------
// Last-layer problems

void LastLayerProblem::validate() const {
    int h = H_train.cols();
    int c = W.cols();
    if (H_train.rows() == 0 || H_val.rows() == 0)
        throw std::invalid_argument("last-layer problem: empty data");
    if (H_val.cols() != h || W.rows() != h || b.numel() != c)
        throw std::invalid_argument("last-layer problem: inconsistent shapes");
    if (y_train.size() != static_cast<std::size_t>(H_train.rows()) ||
        y_val.size() != static_cast<std::size_t>(H_val.rows()))
        throw std::invalid_argument("last-layer problem: label count mismatch");
    for (int y : y_train)
        if (y < 0 || y >= c) throw std::invalid_argument("last-layer problem: label out of range");
    for (int y : y_val)
        if (y < 0 || y >= c) throw std::invalid_argument("last-layer problem: label out of range");
}

namespace {

Tensor head_logits(const Tensor& H, const Tensor& W, const Tensor& b,
                   const std::vector<int>* rows) {
    if (!rows) {
        Tensor l = mat_mul(H, W);
        for (int i = 0; i < l.rows(); ++i)
            for (int j = 0; j < l.cols(); ++j) l.at(i, j) += b[j];
        return l;
    }
    Tensor l = Tensor::zeros({static_cast<int>(rows->size()), W.cols()});
    for (std::size_t r = 0; r < rows->size(); ++r) {
        int i = (*rows)[r];
        for (int j = 0; j < W.cols(); ++j) {
            double s = b[j];
            for (int kk = 0; kk < W.rows(); ++kk) s += H.at(i, kk) * W.at(kk, j);
            l.at(static_cast<int>(r), j) = s;
        }
    }
    return l;
}

void axpy_into_head(double a, const std::vector<double>& flat, Tensor& W, Tensor& b) {
    int wn = W.numel();
    if (static_cast<int>(flat.size()) != wn + b.numel())
        throw std::invalid_argument("head update: flat size mismatch");
    for (int i = 0; i < wn; ++i) W[i] += a * flat[static_cast<std::size_t>(i)];
    for (int i = 0; i < b.numel(); ++i) b[i] += a * flat[static_cast<std::size_t>(wn + i)];
}

}  // namespace

std::vector<double> head_mean_val_grad(const LastLayerProblem& p, const Tensor& W,
                                       const Tensor& b, const std::vector<int>* rows) {
    Tensor logits = head_logits(p.H_val, W, b, rows);
    Tensor probs = softmax_rows(logits);
    int m = logits.rows();
    int h = W.rows(), c = W.cols();
    std::vector<double> g(static_cast<std::size_t>(h * c + c), 0.0);
    for (int r = 0; r < m; ++r) {
        int i = rows ? (*rows)[static_cast<std::size_t>(r)] : r;
        int y = p.y_val[static_cast<std::size_t>(i)];
        for (int j = 0; j < c; ++j) {
            double delta = (probs.at(r, j) - (j == y ? 1.0 : 0.0)) / m;
            for (int kk = 0; kk < h; ++kk)
                g[static_cast<std::size_t>(kk * c + j)] += p.H_val.at(i, kk) * delta;
            g[static_cast<std::size_t>(h * c + j)] += delta;
        }
    }
    return g;
}

Tensor head_train_grads(const LastLayerProblem& p, const Tensor& W, const Tensor& b) {
    Tensor logits = head_logits(p.H_train, W, b, nullptr);
    return per_example_head_grads(p.H_train, softmax_rows(logits), p.y_train);
}

double taylor_gain(const std::vector<double>& val_grad, const Tensor& train_grads, int e,
                   double eta) {
    if (e < 0 || e >= train_grads.rows()) throw std::out_of_range("taylor gain: bad example");
    if (static_cast<int>(val_grad.size()) != train_grads.cols())
        throw std::invalid_argument("taylor gain: dimension mismatch");
    double s = 0.0;
    for (int j = 0; j < train_grads.cols(); ++j)
        s += val_grad[static_cast<std::size_t>(j)] * train_grads.at(e, j);
    return eta * s;
}

double one_step_val_loss(const LastLayerProblem& p, const std::vector<int>& subset, double eta,
                         const std::vector<int>* val_rows) {
    Tensor G = head_train_grads(p, p.W, p.b);
    std::vector<double> sum_g(static_cast<std::size_t>(G.cols()), 0.0);
    for (int e : subset) {
        if (e < 0 || e >= p.n()) throw std::out_of_range("one-step loss: bad subset index");
        for (int j = 0; j < G.cols(); ++j) sum_g[static_cast<std::size_t>(j)] += G.at(e, j);
    }
    Tensor W = p.W, b = p.b;
    axpy_into_head(-eta, sum_g, W, b);
    Tensor logits = head_logits(p.H_val, W, b, val_rows);
    std::vector<int> labels;
    if (val_rows)
        for (int i : *val_rows) labels.push_back(p.y_val[static_cast<std::size_t>(i)]);
    return mean_cross_entropy_value(logits, val_rows ? labels : p.y_val);
}

SubsetSelection glister_select(const LastLayerProblem& p, const GlisterConfig& cfg,
                               const SimilarityMatrix* sim, CostCounter* cost,
                               std::vector<int>* pick_order) {
    p.validate();
    if (pick_order) pick_order->clear();
    int n = p.n();
    if (cfg.k <= 0 || cfg.k > n) throw std::invalid_argument("glister: budget out of range");
    if (cfg.rounds <= 0) throw std::invalid_argument("glister: rounds must be positive");
    if (cfg.lambda < 0.0) throw std::invalid_argument("glister: negative regularizer weight");
    if (cfg.lambda > 0.0 && (!sim || sim->n != n))
        throw std::invalid_argument("glister: regularizer needs a matching similarity matrix");

    Tensor G = head_train_grads(p, p.W, p.b);
    if (cost) cost->selector_head_grad_examples += n;

    SubsetSelection out;
    out.budget = cfg.k;

    auto run_pool = [&](const std::vector<int>& pool, const std::vector<int>& val_rows,
                        int budget) {
        if (budget == 0) return;
        const std::vector<int>* vr = val_rows.empty() ? nullptr : &val_rows;
        std::vector<char> taken(pool.size(), 0);
        std::vector<double> sum_g(static_cast<std::size_t>(G.cols()), 0.0);
        std::vector<double> curmax;
        if (cfg.lambda > 0.0) curmax.assign(pool.size(), 0.0);
        int rounds = std::min(cfg.rounds, budget);
        int per_round = budget / rounds;
        for (int r = 0; r < rounds; ++r) {
            int count = r == rounds - 1 ? budget - per_round * (rounds - 1) : per_round;
            // Re-linearize: one-step-ahead head at the current selection.
            Tensor Ws = p.W, bs = p.b;
            axpy_into_head(-cfg.eta, sum_g, Ws, bs);
            std::vector<double> c = head_mean_val_grad(p, Ws, bs, vr);
            if (cost)
                cost->selector_head_grad_examples +=
                    vr ? static_cast<long long>(vr->size()) : p.H_val.rows();
            // The Taylor gain is fixed for the round; compute it once per
            // remaining candidate. The facility-location part, when on,
            // changes with every addition and is evaluated per pick.
            std::vector<double> taylor(pool.size(), 0.0);
            for (std::size_t i = 0; i < pool.size(); ++i) {
                if (taken[i]) continue;
                taylor[i] = taylor_gain(c, G, pool[i], cfg.eta);
                if (cost) ++cost->selector_gain_evals;
            }
            for (int a = 0; a < count; ++a) {
                int best = -1;
                double bg = 0.0;
                for (std::size_t i = 0; i < pool.size(); ++i) {
                    if (taken[i]) continue;
                    double g = taylor[i];
                    if (cfg.lambda > 0.0) {
                        g += cfg.lambda * fl_gain(*sim, pool, curmax, pool[i]);
                        if (cost) ++cost->selector_gain_evals;
                    }
                    if (best < 0 || g > bg) {
                        best = static_cast<int>(i);
                        bg = g;
                    }
                }
                taken[static_cast<std::size_t>(best)] = 1;
                int e = pool[static_cast<std::size_t>(best)];
                for (int j = 0; j < G.cols(); ++j)
                    sum_g[static_cast<std::size_t>(j)] += G.at(e, j);
                if (cfg.lambda > 0.0)
                    for (std::size_t i = 0; i < pool.size(); ++i)
                        curmax[i] = std::max(curmax[i], sim->at(pool[i], e));
                out.indices.push_back(e);
                if (pick_order) pick_order->push_back(e);
            }
        }
    };

    if (!cfg.per_class) {
        std::vector<int> pool(static_cast<std::size_t>(n));
        std::iota(pool.begin(), pool.end(), 0);
        run_pool(pool, {}, cfg.k);
    } else {
        int classes = p.W.cols();
        std::vector<std::vector<int>> pools(static_cast<std::size_t>(classes));
        for (int i = 0; i < n; ++i)
            pools[static_cast<std::size_t>(p.y_train[static_cast<std::size_t>(i)])].push_back(i);
        std::vector<std::vector<int>> val_rows(static_cast<std::size_t>(classes));
        for (int i = 0; i < p.H_val.rows(); ++i)
            val_rows[static_cast<std::size_t>(p.y_val[static_cast<std::size_t>(i)])].push_back(i);
        std::vector<int> sizes;
        for (const auto& pl : pools) sizes.push_back(static_cast<int>(pl.size()));
        std::vector<int> budgets = proportional_budgets(sizes, cfg.k);
        for (int c = 0; c < classes; ++c) {
            // A class absent from the validation split falls back to the
            // whole validation set for its gradient signal.
            run_pool(pools[static_cast<std::size_t>(c)], val_rows[static_cast<std::size_t>(c)],
                     budgets[static_cast<std::size_t>(c)]);
        }
    }
    std::sort(out.indices.begin(), out.indices.end());
    out.validate(n);
    return out;
}

// ---------------------------------------------------------------------------
// Nonnegative least squares and matching pursuit

std::vector<double> nnls(const Tensor& A, const std::vector<double>& b, double lambda,
                         int max_iter) {
    int p = A.rows(), m = A.cols();
    if (static_cast<int>(b.size()) != p) throw std::invalid_argument("nnls: rhs length mismatch");
    if (lambda < 0.0) throw std::invalid_argument("nnls: negative regularizer");
    if (max_iter <= 0) max_iter = 3 * m + 30;

    // Normal equations: N = A^T A + lambda I, f = A^T b.
    Tensor N = mat_mul_tn(A, A);
    for (int i = 0; i < m; ++i) N.at(i, i) += lambda;
    std::vector<double> f(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < m; ++j)
            f[static_cast<std::size_t>(j)] += A.at(i, j) * b[static_cast<std::size_t>(i)];

    std::vector<double> x(static_cast<std::size_t>(m), 0.0);
    std::vector<char> active(static_cast<std::size_t>(m), 0);

    double fscale = 1.0;
    for (double v : f) fscale = std::max(fscale, std::fabs(v));
    const double tol_w = 1e-12 * fscale;

    auto solve_subsystem = [&](const std::vector<int>& idx) {
        int q = static_cast<int>(idx.size());
        Tensor M = Tensor::zeros({q, q});
        std::vector<double> rhs(static_cast<std::size_t>(q));
        for (int i = 0; i < q; ++i) {
            rhs[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
            for (int j = 0; j < q; ++j)
                M.at(i, j) = N.at(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        // Cholesky with escalating jitter; the subsystems are tiny.
        double jitter = 0.0;
        for (int attempt = 0; attempt < 8; ++attempt) {
            Tensor L = Tensor::zeros({q, q});
            bool ok = true;
            for (int i = 0; i < q && ok; ++i) {
                for (int j = 0; j <= i; ++j) {
                    double s = M.at(i, j) + (i == j ? jitter : 0.0);
                    for (int kk = 0; kk < j; ++kk) s -= L.at(i, kk) * L.at(j, kk);
                    if (i == j) {
                        if (s <= 0.0) {
                            ok = false;
                            break;
                        }
                        L.at(i, i) = std::sqrt(s);
                    } else {
                        L.at(i, j) = s / L.at(j, j);
                    }
                }
            }
            if (!ok) {
                jitter = jitter == 0.0 ? 1e-12 : jitter * 100.0;
                continue;
            }
            std::vector<double> y(static_cast<std::size_t>(q));
            for (int i = 0; i < q; ++i) {
                double s = rhs[static_cast<std::size_t>(i)];
                for (int j = 0; j < i; ++j) s -= L.at(i, j) * y[static_cast<std::size_t>(j)];
                y[static_cast<std::size_t>(i)] = s / L.at(i, i);
            }
            std::vector<double> z(static_cast<std::size_t>(q));
            for (int i = q - 1; i >= 0; --i) {
                double s = y[static_cast<std::size_t>(i)];
                for (int j = i + 1; j < q; ++j) s -= L.at(j, i) * z[static_cast<std::size_t>(j)];
                z[static_cast<std::size_t>(i)] = s / L.at(i, i);
            }
            return z;
        }
        throw std::runtime_error("nnls: subsystem solve failed");
    };

    for (int iter = 0; iter < max_iter; ++iter) {
        // Gradient at x: w = f - N x (only needed on the inactive set).
        int enter = -1;
        double best = tol_w;
        for (int j = 0; j < m; ++j) {
            if (active[static_cast<std::size_t>(j)]) continue;
            double w = f[static_cast<std::size_t>(j)];
            for (int i = 0; i < m; ++i)
                if (x[static_cast<std::size_t>(i)] != 0.0) w -= N.at(j, i) * x[static_cast<std::size_t>(i)];
            if (w > best) {
                best = w;
                enter = j;
            }
        }
        if (enter < 0) break;
        active[static_cast<std::size_t>(enter)] = 1;

        for (int inner = 0; inner < max_iter; ++inner) {
            std::vector<int> idx;
            for (int j = 0; j < m; ++j)
                if (active[static_cast<std::size_t>(j)]) idx.push_back(j);
            std::vector<double> z = solve_subsystem(idx);
            bool feasible = true;
            for (double v : z)
                if (v <= 0.0) feasible = false;
            if (feasible) {
                std::fill(x.begin(), x.end(), 0.0);
                for (std::size_t i = 0; i < idx.size(); ++i)
                    x[static_cast<std::size_t>(idx[i])] = z[i];
                break;
            }
            double alpha = 1.0;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                if (z[i] > 0.0) continue;
                double xi = x[static_cast<std::size_t>(idx[i])];
                double denom = xi - z[i];
                if (denom > 0.0) alpha = std::min(alpha, xi / denom);
            }
            for (std::size_t i = 0; i < idx.size(); ++i) {
                double& xi = x[static_cast<std::size_t>(idx[i])];
                xi += alpha * (z[i] - xi);
                if (xi <= 1e-14) {
                    xi = 0.0;
                    active[static_cast<std::size_t>(idx[i])] = 0;
                }
            }
        }
    }
    return x;
}

OmpResult gradmatch_omp(const Tensor& G, const std::vector<double>& target, int k, double lambda,
                        double tol, CostCounter* cost) {
    int n = G.rows(), p = G.cols();
    if (static_cast<int>(target.size()) != p)
        throw std::invalid_argument("matching pursuit: target length mismatch");
    if (k <= 0 || k > n) throw std::invalid_argument("matching pursuit: budget out of range");
    if (lambda < 0.0 || tol < 0.0) throw std::invalid_argument("matching pursuit: bad options");

    OmpResult res;
    std::vector<double> r = target;
    res.residual = norm2(r);
    res.residual_history.push_back(res.residual);
    std::vector<int> support;
    std::vector<char> unavailable(static_cast<std::size_t>(n), 0);
    const double corr_tol = 1e-14 * std::max(1.0, res.residual);
    int guard = 4 * k + 16;

    while (static_cast<int>(support.size()) < k && guard-- > 0) {
        int best = -1;
        double bc = corr_tol;
        for (int i = 0; i < n; ++i) {
            if (unavailable[static_cast<std::size_t>(i)]) continue;
            double c = 0.0;
            for (int j = 0; j < p; ++j) c += G.at(i, j) * r[static_cast<std::size_t>(j)];
            if (cost) ++cost->selector_gain_evals;
            if (c > bc) {
                bc = c;
                best = i;
            }
        }
        if (best < 0) break;
        support.push_back(best);
        unavailable[static_cast<std::size_t>(best)] = 1;

        // Refit nonnegative weights on the grown support.
        Tensor A = Tensor::zeros({p, static_cast<int>(support.size())});
        for (std::size_t s = 0; s < support.size(); ++s)
            for (int j = 0; j < p; ++j) A.at(j, static_cast<int>(s)) = G.at(support[s], j);
        std::vector<double> w = nnls(A, target, lambda);

        if (w.back() == 0.0) {
            // The new atom gained no weight; discard it for good and carry on
            // with the unchanged residual.
            support.pop_back();
            continue;
        }
        // Atoms the refit zeroed out drop from the support (they may be
        // re-picked later if the residual swings back toward them).
        std::vector<int> kept;
        std::vector<double> kept_w;
        for (std::size_t s = 0; s < support.size(); ++s) {
            if (w[s] > 0.0) {
                kept.push_back(support[s]);
                kept_w.push_back(w[s]);
            } else {
                unavailable[static_cast<std::size_t>(support[s])] = 0;
            }
        }
        support = kept;
        r = target;
        for (std::size_t s = 0; s < support.size(); ++s)
            for (int j = 0; j < p; ++j)
                r[static_cast<std::size_t>(j)] -= kept_w[s] * G.at(support[s], j);
        res.residual = norm2(r);
        res.residual_history.push_back(res.residual);
        if (res.residual <= tol) break;
    }

    // Order the final selection by index with weights kept aligned.
    std::vector<std::size_t> order(support.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return support[a] < support[b]; });
    // Recompute the weights for the final support so the stored pair is the
    // solved optimum rather than an intermediate.
    Tensor A = Tensor::zeros({p, static_cast<int>(support.size())});
    for (std::size_t s = 0; s < support.size(); ++s)
        for (int j = 0; j < p; ++j) A.at(j, static_cast<int>(s)) = G.at(support[s], j);
    std::vector<double> w_final =
        support.empty() ? std::vector<double>{} : nnls(A, target, lambda);
    res.selection.budget = k;
    for (std::size_t o : order) {
        res.selection.indices.push_back(support[o]);
        res.selection.weights.push_back(w_final[o]);
    }
    res.selection.validate(n);
    return res;
}

OmpResult gradmatch_select(const LastLayerProblem& p, int k, double lambda, double tol,
                           bool match_val, CostCounter* cost) {
    p.validate();
    Tensor G = head_train_grads(p, p.W, p.b);
    if (cost) cost->selector_head_grad_examples += p.n();
    std::vector<double> target;
    if (match_val) {
        target = head_mean_val_grad(p, p.W, p.b);
        if (cost) cost->selector_head_grad_examples += p.H_val.rows();
    } else {
        target.assign(static_cast<std::size_t>(G.cols()), 0.0);
        for (int i = 0; i < G.rows(); ++i)
            for (int j = 0; j < G.cols(); ++j)
                target[static_cast<std::size_t>(j)] += G.at(i, j) / G.rows();
    }
    return gradmatch_omp(G, target, k, lambda, tol, cost);
}

}  // namespace adanas
