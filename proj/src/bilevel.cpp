#include "adanas/bilevel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace adanas {

const char* selector_name(SelectorKind k) {
    switch (k) {
        case SelectorKind::Random: return "random";
        case SelectorKind::FacilityLocation: return "fl";
        case SelectorKind::Entropy: return "entropy";
        case SelectorKind::Glister: return "glister";
        case SelectorKind::GradMatch: return "gradmatch";
    }
    throw std::invalid_argument("selector_name: bad kind");
}

SelectorKind selector_from_name(const std::string& s) {
    if (s == "random") return SelectorKind::Random;
    if (s == "fl") return SelectorKind::FacilityLocation;
    if (s == "entropy") return SelectorKind::Entropy;
    if (s == "glister") return SelectorKind::Glister;
    if (s == "gradmatch") return SelectorKind::GradMatch;
    throw std::invalid_argument("selector_from_name: unknown selector '" + s + "'");
}

void BilevelConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("bilevel: epochs must be >= 1");
    if (alpha_period_steps < 1) throw std::invalid_argument("bilevel: alpha period must be >= 1");
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("bilevel: fraction must be in (0, 1]");
    if (batch < 1) throw std::invalid_argument("bilevel: batch must be >= 1");
    if (!(lr0 > 0.0) || !(lr_alpha > 0.0))
        throw std::invalid_argument("bilevel: learning rates must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("bilevel: momentum out of range");
    if (zeta < 0.0) throw std::invalid_argument("bilevel: zeta must be nonnegative");
    if (projection_epochs < 0)
        throw std::invalid_argument("bilevel: projection epochs must be nonnegative");
    if (projection_noise_samples < 1)
        throw std::invalid_argument("bilevel: projection noise samples must be >= 1");
    if (glister_rounds < 1) throw std::invalid_argument("bilevel: glister rounds must be >= 1");
    if (!(glister_eta > 0.0)) throw std::invalid_argument("bilevel: glister eta must be positive");
    if (gradmatch_lambda < 0.0)
        throw std::invalid_argument("bilevel: gradmatch regularizer must be nonnegative");
    if (entropy_proxy_epochs < 1)
        throw std::invalid_argument("bilevel: entropy proxy epochs must be >= 1");
}

std::vector<StepEvents> schedule_events(int total_steps, int refresh_period, int alpha_period) {
    if (total_steps < 0) throw std::invalid_argument("schedule_events: negative step count");
    if (alpha_period < 1) throw std::invalid_argument("schedule_events: alpha period must be >= 1");
    std::vector<StepEvents> ev(static_cast<std::size_t>(total_steps));
    for (int t = 0; t < total_steps; ++t) {
        auto& e = ev[static_cast<std::size_t>(t)];
        e.refresh = refresh_period > 0 ? t % refresh_period == 0 : t == 0;
        e.alpha = t % alpha_period == 0;
    }
    return ev;
}

namespace {

// Penultimate features of both splits for the gradient-based selectors. The
// noise stream is rewound afterwards so featurization never shifts the
// training trajectory.
LastLayerProblem featurize(Supernet& net, const SearchData& data, CostCounter& cost) {
    auto saved = net.noise_state();
    ForwardFeatures ft = supernet_forward(net, data.train.X);
    ForwardFeatures fv = supernet_forward(net, data.val.X);
    net.set_noise_state(saved);
    cost.selector_forward_examples += data.train.n() + data.val.n();
    LastLayerProblem p;
    p.H_train = std::move(ft.penultimate);
    p.y_train = data.train.y;
    p.H_val = std::move(fv.penultimate);
    p.y_val = data.val.y;
    p.W = net.params.at("head.W").value;
    p.b = net.params.at("head.b").value;
    return p;
}

}  // namespace

std::pair<Architecture, SearchTrace> adaptive_dpt(const SearchSpace& space, const SearchData& data,
                                                  const BilevelConfig& cfg, std::uint64_t seed,
                                                  const StepObserver& observe) {
    auto t_start = std::chrono::steady_clock::now();
    cfg.validate();
    space.validate();
    if (space.classes < 2)
        throw std::invalid_argument("adaptive_dpt: space needs a classification head");
    int n = data.train.n(), m = data.val.n();
    if (n == 0 || m == 0) throw std::invalid_argument("adaptive_dpt: empty data split");
    if (data.train.X.rows() != n || data.val.X.rows() != m)
        throw std::invalid_argument("adaptive_dpt: feature/label size mismatch");
    // floor with a nudge so the binary representation of fraction * n cannot
    // drop a unit (0.1 * 500 must give exactly 50)
    int k = static_cast<int>(std::floor(cfg.fraction * n + 1e-9));
    if (k < 1) throw std::invalid_argument("adaptive_dpt: fraction selects an empty subset");
    k = std::min(k, n);

    int steps_per_epoch = (k + cfg.batch - 1) / cfg.batch;
    int total_steps = cfg.epochs * steps_per_epoch;
    int refresh_period =
        cfg.subset_period_epochs > 0 ? cfg.subset_period_epochs * steps_per_epoch : 0;
    std::vector<StepEvents> events =
        schedule_events(total_steps, refresh_period, cfg.alpha_period_steps);

    Supernet net(space, hash_mix(seed, fnv1a("theta-init")), hash_mix(seed, fnv1a("noise")));
    Rng batch_rng = derive_rng(seed, "batch");
    Rng val_rng = derive_rng(seed, "valbatch");
    Rng selector_rng = derive_rng(seed, "selector");
    Rng project_rng = derive_rng(seed, "project");

    SearchTrace trace;
    trace.total_steps = total_steps;
    trace.steps_per_epoch = steps_per_epoch;
    trace.head_param_fraction = net.head_param_fraction();

    std::optional<SubsetSelection> fl_cache;
    std::optional<Tensor> entropy_probs;

    auto refresh = [&]() -> SubsetSelection {
        switch (cfg.selector) {
            case SelectorKind::Random:
                return select_random(n, k, selector_rng);
            case SelectorKind::FacilityLocation: {
                // Similarity sits on the raw inputs, so the selection is the
                // same at every refresh; compute it once.
                if (!fl_cache) {
                    SimilarityMatrix sim = similarity_matrix(data.train.X);
                    fl_cache = select_facility_location_per_class(sim, data.train.y, k,
                                                                  GreedyMode::Lazy, &trace.cost);
                }
                return *fl_cache;
            }
            case SelectorKind::Entropy: {
                // Score once with a small proxy net trained on the train
                // split; refreshes re-sample from the fixed histogram.
                if (!entropy_probs) {
                    MlpSpec proxy{data.train.X.cols(), {16}, space.classes};
                    Rng proxy_rng = derive_rng(seed, "entropy-proxy");
                    ParamSet params = mlp_init(proxy, proxy_rng);
                    TrainOpts po;
                    po.epochs = cfg.entropy_proxy_epochs;
                    po.batch = cfg.batch;
                    po.lr0 = cfg.lr0;
                    po.momentum = cfg.momentum;
                    train_mlp(proxy, params, data.train, po, proxy_rng);
                    entropy_probs = softmax_rows(mlp_forward(proxy, params, data.train.X).logits);
                    // one forward and one backward per proxy example-epoch,
                    // plus the scoring pass
                    trace.cost.selector_forward_examples +=
                        2LL * cfg.entropy_proxy_epochs * n + n;
                }
                return entropy_select_from_probs(*entropy_probs, k, selector_rng);
            }
            case SelectorKind::Glister: {
                LastLayerProblem p = featurize(net, data, trace.cost);
                GlisterConfig g;
                g.k = k;
                g.eta = cfg.glister_eta;
                g.rounds = cfg.glister_rounds;
                g.per_class = cfg.glister_per_class;
                return glister_select(p, g, nullptr, &trace.cost);
            }
            case SelectorKind::GradMatch: {
                LastLayerProblem p = featurize(net, data, trace.cost);
                SubsetSelection s =
                    gradmatch_select(p, k, cfg.gradmatch_lambda, 0.0, false, &trace.cost)
                        .selection;
                // Matching pursuit stops once no atom correlates with the
                // residual; pad the remaining budget with random unselected
                // indices at unit weight so the subset always has k entries.
                if (static_cast<int>(s.indices.size()) < k) {
                    std::vector<char> in(static_cast<std::size_t>(n), 0);
                    for (int i : s.indices) in[static_cast<std::size_t>(i)] = 1;
                    std::vector<int> rest;
                    for (int i = 0; i < n; ++i)
                        if (!in[static_cast<std::size_t>(i)]) rest.push_back(i);
                    int need = k - static_cast<int>(s.indices.size());
                    std::vector<int> extra = selector_rng.sample_without_replacement(
                        static_cast<int>(rest.size()), need);
                    std::vector<std::pair<int, double>> merged;
                    std::vector<double> w = s.effective_weights();
                    for (std::size_t i = 0; i < s.indices.size(); ++i)
                        merged.emplace_back(s.indices[i], w[i]);
                    for (int r : extra) merged.emplace_back(rest[static_cast<std::size_t>(r)], 1.0);
                    std::sort(merged.begin(), merged.end());
                    s.indices.clear();
                    s.weights.clear();
                    for (const auto& [idx, wt] : merged) {
                        s.indices.push_back(idx);
                        s.weights.push_back(wt);
                    }
                }
                return s;
            }
        }
        throw std::logic_error("adaptive_dpt: unhandled selector");
    };

    EpochBatcher train_batcher;
    EpochBatcher val_batcher;
    std::vector<int> val_all(static_cast<std::size_t>(m));
    std::iota(val_all.begin(), val_all.end(), 0);
    val_batcher.reset(std::move(val_all));

    std::vector<double> weight_of(static_cast<std::size_t>(n), 1.0);
    bool unit_weights = true;

    for (int t = 0; t < total_steps; ++t) {
        if (events[static_cast<std::size_t>(t)].refresh) {
            SubsetSelection s = refresh();
            // A refresh that re-selects the current subset is a no-op for the
            // batch iterator; only a changed subset restarts the epoch.
            if (trace.refreshes.empty() || s.indices != trace.refreshes.back().subset.indices)
                train_batcher.reset(s.indices);
            std::vector<double> w = s.effective_weights();
            std::fill(weight_of.begin(), weight_of.end(), 1.0);
            unit_weights = true;
            for (std::size_t i = 0; i < s.indices.size(); ++i) {
                weight_of[static_cast<std::size_t>(s.indices[i])] = w[i];
                if (w[i] != 1.0) unit_weights = false;
            }
            trace.refreshes.push_back(RefreshEvent{t, std::move(s)});
        }
        std::vector<int> mb_idx = train_batcher.next(cfg.batch, batch_rng);
        Batch mb = gather_rows(data.train, mb_idx);
        if (events[static_cast<std::size_t>(t)].alpha) {
            Batch vb = gather_rows(data.val, val_batcher.next(cfg.batch, val_rng));
            supernet_alpha_step(net, mb, vb, cfg.zeta, cfg.lr_alpha, &trace.cost);
            trace.alpha_step_indices.push_back(t);
        }
        if (unit_weights) {
            supernet_theta_step(net, mb, nullptr, cosine_lr(t, total_steps, cfg.lr0),
                                cfg.momentum, &trace.cost);
        } else {
            std::vector<double> w;
            w.reserve(mb_idx.size());
            for (int i : mb_idx) w.push_back(weight_of[static_cast<std::size_t>(i)]);
            supernet_theta_step(net, mb, &w, cosine_lr(t, total_steps, cfg.lr0), cfg.momentum,
                                &trace.cost);
        }
        if (observe) observe(t, net);
    }

    const SubsetSelection& last = trace.refreshes.back().subset;
    Batch tune = cfg.project_on_full ? data.train : gather_rows(data.train, last.indices);
    ProjectOpts po;
    po.tune_epochs = cfg.projection_epochs;
    po.batch = cfg.batch;
    po.lr0 = cfg.lr0;
    po.momentum = cfg.momentum;
    po.noise_samples = cfg.projection_noise_samples;
    Architecture arch =
        project(net, data.val, tune, po, project_rng, &trace.cost, &trace.decisions);
    trace.arch = arch;
    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {arch, trace};
}

CostCount count_cost(const SearchTrace& trace) {
    CostCount c;
    c.theta_examples = trace.cost.theta_examples;
    c.selector_overhead =
        0.5 * static_cast<double>(trace.cost.selector_forward_examples) +
        trace.head_param_fraction * static_cast<double>(trace.cost.selector_head_grad_examples);
    c.alpha_examples = static_cast<double>(trace.cost.alpha_examples);
    c.eval_overhead = 0.5 * static_cast<double>(trace.cost.eval_forward_examples);
    return c;
}

double train_final(const SearchSpace& space, const Architecture& arch, const Batch& train,
                   const Batch& test, int epochs, std::uint64_t seed, const TrainOpts& opts,
                   CostCounter* cost) {
    space.validate();
    if (arch.op_index.size() != space.edges.size())
        throw std::invalid_argument("train_final: architecture does not match the space");
    if (epochs < 0) throw std::invalid_argument("train_final: negative epochs");
    if (train.n() == 0 || test.n() == 0) throw std::invalid_argument("train_final: empty data");
    Supernet net(space, hash_mix(seed, fnv1a("final-theta")), hash_mix(seed, fnv1a("final-noise")));
    net.restrict_to(arch);
    Rng shuffle_rng = derive_rng(seed, "final-batch");
    EpochBatcher batcher;
    std::vector<int> all(static_cast<std::size_t>(train.n()));
    std::iota(all.begin(), all.end(), 0);
    batcher.reset(std::move(all));
    int steps_per_epoch = (train.n() + opts.batch - 1) / opts.batch;
    int total = epochs * steps_per_epoch;
    for (int t = 0; t < total; ++t) {
        Batch mb = gather_rows(train, batcher.next(opts.batch, shuffle_rng));
        supernet_theta_step(net, mb, nullptr, cosine_lr(t, total, opts.lr0), opts.momentum, cost);
    }
    return supernet_accuracy(net, test, cost);
}

}  // namespace adanas
