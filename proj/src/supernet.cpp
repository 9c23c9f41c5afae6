#include "adanas/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "adanas/linalg.hpp"

namespace adanas {

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Zero: return "zero";
        case OpKind::Identity: return "identity";
        case OpKind::Linear: return "linear";
        case OpKind::LinearNonlin: return "linear_nonlin";
        case OpKind::AvgCombine: return "avg_combine";
        case OpKind::Noise: return "noise";
    }
    throw std::logic_error("op_name: bad kind");
}

OpKind op_from_name(const std::string& s) {
    if (s == "zero") return OpKind::Zero;
    if (s == "identity") return OpKind::Identity;
    if (s == "linear") return OpKind::Linear;
    if (s == "linear_nonlin") return OpKind::LinearNonlin;
    if (s == "avg_combine") return OpKind::AvgCombine;
    if (s == "noise") return OpKind::Noise;
    throw std::invalid_argument("unknown op: " + s);
}

bool op_has_params(OpKind k) { return k == OpKind::Linear || k == OpKind::LinearNonlin; }

void SearchSpace::validate() const {
    if (nodes < 2) throw std::invalid_argument("space: need at least two nodes");
    if (width <= 0) throw std::invalid_argument("space: width must be positive");
    if (classes < 0) throw std::invalid_argument("space: negative class count");
    if (edges.empty()) throw std::invalid_argument("space: no edges");
    std::vector<char> has_in(static_cast<std::size_t>(nodes), 0);
    std::vector<char> has_out(static_cast<std::size_t>(nodes), 0);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const SpaceEdge& e = edges[i];
        if (e.from < 0 || e.to >= nodes || e.from >= e.to)
            throw std::invalid_argument("space: edge must go forward between valid nodes");
        if (i > 0) {
            const SpaceEdge& p = edges[i - 1];
            if (std::pair(p.to, p.from) >= std::pair(e.to, e.from))
                throw std::invalid_argument("space: edges must be sorted by (to, from), unique");
        }
        if (e.ops.empty()) throw std::invalid_argument("space: edge with no ops");
        for (std::size_t a = 0; a < e.ops.size(); ++a)
            for (std::size_t b = a + 1; b < e.ops.size(); ++b)
                if (e.ops[a] == e.ops[b]) throw std::invalid_argument("space: duplicate op on edge");
        has_in[static_cast<std::size_t>(e.to)] = 1;
        has_out[static_cast<std::size_t>(e.from)] = 1;
    }
    for (int j = 1; j < nodes; ++j)
        if (!has_in[static_cast<std::size_t>(j)])
            throw std::invalid_argument("space: node " + std::to_string(j) + " has no input");
    for (int j = 0; j + 1 < nodes; ++j)
        if (!has_out[static_cast<std::size_t>(j)])
            throw std::invalid_argument("space: node " + std::to_string(j) + " has no output");
}

long long SearchSpace::num_architectures() const {
    long long n = 1;
    for (const SpaceEdge& e : edges) {
        n *= static_cast<long long>(e.ops.size());
        if (n > (1ll << 40)) throw std::overflow_error("space: too many architectures to count");
    }
    return n;
}

SearchSpace parse_space(std::istream& in) {
    SearchSpace s;
    std::string line;
    while (std::getline(in, line)) {
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "name") {
            ls >> s.name;
        } else if (key == "nodes") {
            ls >> s.nodes;
        } else if (key == "width") {
            ls >> s.width;
        } else if (key == "classes") {
            ls >> s.classes;
        } else if (key == "edge") {
            SpaceEdge e;
            if (!(ls >> e.from >> e.to)) throw std::invalid_argument("space: bad edge line");
            std::string op;
            while (ls >> op) e.ops.push_back(op_from_name(op));
            s.edges.push_back(std::move(e));
        } else {
            throw std::invalid_argument("space: unknown directive '" + key + "'");
        }
    }
    std::sort(s.edges.begin(), s.edges.end(), [](const SpaceEdge& a, const SpaceEdge& b) {
        return std::pair(a.to, a.from) < std::pair(b.to, b.from);
    });
    s.validate();
    return s;
}

std::string space_to_text(const SearchSpace& s) {
    std::ostringstream out;
    if (!s.name.empty()) out << "name " << s.name << "\n";
    out << "nodes " << s.nodes << "\nwidth " << s.width << "\nclasses " << s.classes << "\n";
    for (const SpaceEdge& e : s.edges) {
        out << "edge " << e.from << " " << e.to;
        for (OpKind k : e.ops) out << " " << op_name(k);
        out << "\n";
    }
    return out.str();
}

SearchSpace builtin_space(const std::string& name, int width, int classes) {
    SearchSpace s;
    s.name = name;
    s.width = width;
    s.classes = classes;
    auto all_pairs = [&](int nodes, std::vector<OpKind> ops) {
        s.nodes = nodes;
        for (int to = 1; to < nodes; ++to)
            for (int from = 0; from < to; ++from) s.edges.push_back(SpaceEdge{from, to, ops});
    };
    if (name == "nb201-toy") {
        all_pairs(4, {OpKind::Zero, OpKind::Identity, OpKind::Linear, OpKind::LinearNonlin,
                      OpKind::AvgCombine});
    } else if (name == "oracle-27") {
        all_pairs(3, {OpKind::Zero, OpKind::Linear, OpKind::LinearNonlin});
    } else if (name == "s4-toy") {
        all_pairs(4, {OpKind::Linear, OpKind::Noise});
    } else {
        throw std::invalid_argument("unknown built-in space: " + name);
    }
    s.validate();
    return s;
}

std::vector<Architecture> enumerate_architectures(const SearchSpace& s) {
    long long total = s.num_architectures();
    std::vector<Architecture> out;
    out.reserve(static_cast<std::size_t>(total));
    Architecture a;
    a.op_index.assign(s.edges.size(), 0);
    for (long long i = 0; i < total; ++i) {
        out.push_back(a);
        // odometer, last edge fastest
        for (int e = static_cast<int>(s.edges.size()) - 1; e >= 0; --e) {
            if (++a.op_index[static_cast<std::size_t>(e)] <
                static_cast<int>(s.edges[static_cast<std::size_t>(e)].ops.size()))
                break;
            a.op_index[static_cast<std::size_t>(e)] = 0;
        }
    }
    return out;
}

std::string arch_to_string(const SearchSpace& s, const Architecture& a) {
    if (a.op_index.size() != s.edges.size())
        throw std::invalid_argument("arch_to_string: edge count mismatch");
    std::string out;
    for (std::size_t e = 0; e < s.edges.size(); ++e) {
        if (e) out += "|";
        int o = a.op_index[e];
        if (o < 0 || o >= static_cast<int>(s.edges[e].ops.size()))
            throw std::invalid_argument("arch_to_string: op index out of range");
        out += op_name(s.edges[e].ops[static_cast<std::size_t>(o)]);
    }
    return out;
}

Architecture arch_from_string(const SearchSpace& s, const std::string& text) {
    Architecture a;
    std::size_t start = 0;
    for (std::size_t e = 0; e < s.edges.size(); ++e) {
        std::size_t end = text.find('|', start);
        std::string tok = text.substr(start, end == std::string::npos ? end : end - start);
        OpKind k = op_from_name(tok);
        int idx = -1;
        for (std::size_t o = 0; o < s.edges[e].ops.size(); ++o)
            if (s.edges[e].ops[o] == k) idx = static_cast<int>(o);
        if (idx < 0) throw std::invalid_argument("arch_from_string: op not on edge: " + tok);
        a.op_index.push_back(idx);
        if (end == std::string::npos) {
            if (e + 1 != s.edges.size())
                throw std::invalid_argument("arch_from_string: too few edges");
            return a;
        }
        start = end + 1;
    }
    throw std::invalid_argument("arch_from_string: too many edges");
}

namespace {

// Max-subtracted softmax over the allowed entries; zeros elsewhere.
std::vector<double> masked_softmax_values(const Tensor& alpha, const std::vector<char>& allowed) {
    std::vector<double> s(static_cast<std::size_t>(alpha.numel()), 0.0);
    double mx = -1e300;
    bool any = false;
    for (int i = 0; i < alpha.numel(); ++i)
        if (allowed[static_cast<std::size_t>(i)]) {
            any = true;
            mx = std::max(mx, alpha[i]);
        }
    if (!any) throw std::invalid_argument("edge has no allowed ops");
    double z = 0.0;
    for (int i = 0; i < alpha.numel(); ++i)
        if (allowed[static_cast<std::size_t>(i)]) {
            s[static_cast<std::size_t>(i)] = std::exp(alpha[i] - mx);
            z += s[static_cast<std::size_t>(i)];
        }
    for (double& v : s) v /= z;
    return s;
}

bool any_allowed(const std::vector<char>& mask) {
    for (char c : mask)
        if (c) return true;
    return false;
}

Tensor draw_noise(Rng& rng, int n, int width) {
    Tensor z = Tensor::zeros({n, width});
    for (int i = 0; i < z.numel(); ++i) z[i] = rng.normal();
    return z;
}

}  // namespace

Tensor mixed_edge_output(const Tensor& alpha, const std::vector<Tensor>& op_outputs,
                         const std::vector<char>& allowed) {
    if (op_outputs.size() != static_cast<std::size_t>(alpha.numel()) ||
        allowed.size() != op_outputs.size())
        throw std::invalid_argument("mixed_edge_output: length mismatch");
    std::vector<double> s = masked_softmax_values(alpha, allowed);
    Tensor out;
    bool first = true;
    for (std::size_t o = 0; o < op_outputs.size(); ++o) {
        if (!allowed[o]) continue;
        if (first) {
            out = Tensor::zeros(op_outputs[o].shape);
            first = false;
        }
        for (int i = 0; i < out.numel(); ++i) out[i] += s[o] * op_outputs[o][i];
    }
    return out;
}

Supernet::Supernet(SearchSpace sp, std::uint64_t theta_seed, std::uint64_t noise_seed)
    : space(std::move(sp)), noise_rng(noise_seed) {
    space.validate();
    Rng init(theta_seed);
    double scale = 1.0 / std::sqrt(static_cast<double>(space.width));
    for (std::size_t e = 0; e < space.edges.size(); ++e) {
        const SpaceEdge& ed = space.edges[e];
        for (OpKind k : ed.ops) {
            if (!op_has_params(k)) continue;
            std::string base = "e" + std::to_string(e) + "." + op_name(k);
            Tensor w = Tensor::zeros({space.width, space.width});
            for (int i = 0; i < w.numel(); ++i) w[i] = scale * init.normal();
            params.add(base + ".W", std::move(w));
            params.add(base + ".b", Tensor::zeros({space.width}));
        }
        alpha.push_back(Tensor::zeros({static_cast<int>(ed.ops.size())}));
        allowed.push_back(std::vector<char>(ed.ops.size(), 1));
    }
    if (space.classes > 0) {
        Tensor w = Tensor::zeros({space.width, space.classes});
        for (int i = 0; i < w.numel(); ++i) w[i] = scale * init.normal();
        params.add("head.W", std::move(w));
        params.add("head.b", Tensor::zeros({space.classes}));
    }
}

void Supernet::restrict_edge(int edge, int op) {
    if (edge < 0 || edge >= edge_count()) throw std::out_of_range("restrict_edge: bad edge");
    auto& mask = allowed[static_cast<std::size_t>(edge)];
    if (op < 0 || op >= static_cast<int>(mask.size()))
        throw std::out_of_range("restrict_edge: bad op index");
    std::fill(mask.begin(), mask.end(), static_cast<char>(0));
    mask[static_cast<std::size_t>(op)] = 1;
}

void Supernet::restrict_to(const Architecture& a) {
    if (a.op_index.size() != static_cast<std::size_t>(edge_count()))
        throw std::invalid_argument("restrict_to: edge count mismatch");
    for (int e = 0; e < edge_count(); ++e) restrict_edge(e, a.op_index[static_cast<std::size_t>(e)]);
}

bool Supernet::edge_decided(int edge) const {
    const auto& mask = allowed[static_cast<std::size_t>(edge)];
    int n = 0;
    for (char c : mask) n += c ? 1 : 0;
    return n == 1;
}

double Supernet::head_param_fraction() const {
    long long head = 0, total = 0;
    for (const Param& p : params.items) {
        total += p.value.numel();
        if (p.name.rfind("head.", 0) == 0) head += p.value.numel();
    }
    return total > 0 ? static_cast<double>(head) / static_cast<double>(total) : 0.0;
}

SupernetTape supernet_forward_tape(Tape& tape, Supernet& net, const Tensor& X,
                                   const ParamSet* theta_override) {
    const SearchSpace& sp = net.space;
    if (X.cols() != sp.width)
        throw std::invalid_argument("supernet forward: input width " + std::to_string(X.cols()) +
                                    " does not match space width " + std::to_string(sp.width));
    const ParamSet& P = theta_override ? *theta_override : net.params;
    SupernetTape out;
    auto leaf_param = [&](const std::string& name) {
        VarId id = tape.leaf(P.at(name).value);
        out.theta_ids.emplace_back(name, id);
        return id;
    };
    int n = X.rows();
    std::vector<VarId> node_val(static_cast<std::size_t>(sp.nodes), -1);
    node_val[0] = tape.leaf(X);
    out.alpha_ids.assign(sp.edges.size(), -1);
    std::size_t next_edge = 0;
    for (int j = 1; j < sp.nodes; ++j) {
        VarId acc_node = -1;
        while (next_edge < sp.edges.size() && sp.edges[next_edge].to == j) {
            std::size_t e = next_edge++;
            const SpaceEdge& ed = sp.edges[e];
            out.alpha_ids[e] = tape.leaf(net.alpha[e]);
            if (!any_allowed(net.allowed[e])) continue;
            VarId s = tape.masked_softmax(out.alpha_ids[e], net.allowed[e]);
            VarId src = node_val[static_cast<std::size_t>(ed.from)];
            VarId acc = -1;
            for (std::size_t o = 0; o < ed.ops.size(); ++o) {
                if (!net.allowed[e][o]) {
                    // Keep the noise stream aligned with the unmasked forward
                    // so masked and full evaluations see identical draws
                    // everywhere else.
                    if (ed.ops[o] == OpKind::Noise) draw_noise(net.noise_rng, n, sp.width);
                    continue;
                }
                OpKind k = ed.ops[o];
                if (k == OpKind::Zero) continue;
                VarId term_in = -1;
                std::string base = "e" + std::to_string(e) + "." + op_name(k);
                switch (k) {
                    case OpKind::Identity: term_in = src; break;
                    case OpKind::AvgCombine: term_in = tape.scale(src, 0.5); break;
                    case OpKind::Linear:
                        term_in = tape.add_rowvec(tape.matmul(src, leaf_param(base + ".W")),
                                                  leaf_param(base + ".b"));
                        break;
                    case OpKind::LinearNonlin:
                        term_in = tape.tanh_of(tape.add_rowvec(
                            tape.matmul(src, leaf_param(base + ".W")), leaf_param(base + ".b")));
                        break;
                    case OpKind::Noise:
                        term_in = tape.leaf(draw_noise(net.noise_rng, n, sp.width));
                        break;
                    case OpKind::Zero: break;
                }
                VarId term = tape.scale_by_entry(s, static_cast<int>(o), term_in);
                acc = acc < 0 ? term : tape.add(acc, term);
            }
            if (acc >= 0) acc_node = acc_node < 0 ? acc : tape.add(acc_node, acc);
        }
        node_val[static_cast<std::size_t>(j)] =
            acc_node >= 0 ? acc_node : tape.leaf(Tensor::zeros({n, sp.width}));
    }
    out.penultimate = node_val[static_cast<std::size_t>(sp.nodes - 1)];
    if (sp.classes > 0) {
        out.logits = tape.add_rowvec(tape.matmul(out.penultimate, leaf_param("head.W")),
                                     leaf_param("head.b"));
    } else {
        out.logits = out.penultimate;
    }
    return out;
}

ForwardFeatures supernet_forward(Supernet& net, const Tensor& X) {
    const SearchSpace& sp = net.space;
    if (X.cols() != sp.width)
        throw std::invalid_argument("supernet forward: input width mismatch");
    int n = X.rows();
    std::vector<Tensor> node_val(static_cast<std::size_t>(sp.nodes));
    node_val[0] = X;
    std::size_t next_edge = 0;
    for (int j = 1; j < sp.nodes; ++j) {
        Tensor acc_node;
        bool have = false;
        while (next_edge < sp.edges.size() && sp.edges[next_edge].to == j) {
            std::size_t e = next_edge++;
            const SpaceEdge& ed = sp.edges[e];
            if (!any_allowed(net.allowed[e])) continue;
            std::vector<double> s = masked_softmax_values(net.alpha[e], net.allowed[e]);
            const Tensor& src = node_val[static_cast<std::size_t>(ed.from)];
            if (!have) {
                acc_node = Tensor::zeros({n, sp.width});
                have = true;
            }
            for (std::size_t o = 0; o < ed.ops.size(); ++o) {
                if (!net.allowed[e][o]) {
                    // Same stream alignment as the tape forward.
                    if (ed.ops[o] == OpKind::Noise) draw_noise(net.noise_rng, n, sp.width);
                    continue;
                }
                OpKind k = ed.ops[o];
                if (k == OpKind::Zero) continue;
                double w = s[o];
                std::string base = "e" + std::to_string(e) + "." + op_name(k);
                switch (k) {
                    case OpKind::Identity:
                        for (int i = 0; i < acc_node.numel(); ++i) acc_node[i] += w * src[i];
                        break;
                    case OpKind::AvgCombine:
                        for (int i = 0; i < acc_node.numel(); ++i) acc_node[i] += w * 0.5 * src[i];
                        break;
                    case OpKind::Linear:
                    case OpKind::LinearNonlin: {
                        Tensor t = mat_mul(src, net.params.at(base + ".W").value);
                        const Tensor& b = net.params.at(base + ".b").value;
                        for (int r = 0; r < t.rows(); ++r)
                            for (int c = 0; c < t.cols(); ++c) {
                                double v = t.at(r, c) + b[c];
                                if (k == OpKind::LinearNonlin) v = std::tanh(v);
                                acc_node.at(r, c) += w * v;
                            }
                        break;
                    }
                    case OpKind::Noise: {
                        Tensor z = draw_noise(net.noise_rng, n, sp.width);
                        for (int i = 0; i < acc_node.numel(); ++i) acc_node[i] += w * z[i];
                        break;
                    }
                    case OpKind::Zero: break;
                }
            }
        }
        node_val[static_cast<std::size_t>(j)] = have ? acc_node : Tensor::zeros({n, sp.width});
    }
    ForwardFeatures f;
    f.penultimate = node_val[static_cast<std::size_t>(sp.nodes - 1)];
    if (sp.classes > 0) {
        f.logits = mat_mul(f.penultimate, net.params.at("head.W").value);
        const Tensor& b = net.params.at("head.b").value;
        for (int r = 0; r < f.logits.rows(); ++r)
            for (int c = 0; c < f.logits.cols(); ++c) f.logits.at(r, c) += b[c];
    } else {
        f.logits = f.penultimate;
    }
    return f;
}

double supernet_accuracy(Supernet& net, const Batch& data, CostCounter* cost) {
    ForwardFeatures f = supernet_forward(net, data.X);
    if (cost) cost->eval_forward_examples += data.n();
    return accuracy(f.logits, data.y);
}

void supernet_theta_step(Supernet& net, const Batch& batch, const std::vector<double>* weights,
                         double lr, double momentum, CostCounter* cost) {
    if (net.space.classes <= 0)
        throw std::logic_error("theta step: space has no classification head");
    if (batch.n() == 0) throw std::invalid_argument("theta step: empty batch");
    Tape tape;
    SupernetTape f = supernet_forward_tape(tape, net, batch.X);
    VarId loss = weights ? tape.weighted_cross_entropy(f.logits, batch.y, *weights)
                         : tape.mean_cross_entropy(f.logits, batch.y);
    tape.backward(loss);
    GradMap grads;
    for (const auto& [name, id] : f.theta_ids) grads.emplace_back(name, tape.grad(id));
    sgd_momentum_step(net.params, grads, lr, momentum);
    if (cost) cost->theta_examples += batch.n();
}

void supernet_alpha_step(Supernet& net, const Batch& train_batch, const Batch& val_batch,
                         double zeta, double lr_alpha, CostCounter* cost) {
    if (train_batch.n() == 0) throw std::invalid_argument("alpha step: empty training subset");
    if (val_batch.n() == 0) throw std::invalid_argument("alpha step: empty validation batch");
    if (net.space.classes <= 0)
        throw std::logic_error("alpha step: space has no classification head");
    auto apply = [&](Tape& tape, const SupernetTape& f) {
        tape.backward(tape.mean_cross_entropy(f.logits, val_batch.y));
        for (int e = 0; e < net.edge_count(); ++e) {
            const Tensor& g = tape.grad(f.alpha_ids[static_cast<std::size_t>(e)]);
            check_finite(g, "alpha gradient");
            for (int i = 0; i < g.numel(); ++i)
                net.alpha[static_cast<std::size_t>(e)][i] -= lr_alpha * g[i];
        }
    };
    if (zeta == 0.0) {
        Tape tape;
        SupernetTape f = supernet_forward_tape(tape, net, val_batch.X);
        apply(tape, f);
        if (cost) cost->alpha_examples += val_batch.n();
        return;
    }
    // Virtual step: theta' = theta - zeta * grad L_train, treated as constant.
    Tape t1;
    SupernetTape f1 = supernet_forward_tape(t1, net, train_batch.X);
    t1.backward(t1.mean_cross_entropy(f1.logits, train_batch.y));
    ParamSet shifted = net.params;
    for (const auto& [name, id] : f1.theta_ids) {
        Tensor& v = shifted.at(name).value;
        const Tensor& g = t1.grad(id);
        for (int i = 0; i < v.numel(); ++i) v[i] -= zeta * g[i];
    }
    Tape t2;
    SupernetTape f2 = supernet_forward_tape(t2, net, val_batch.X, &shifted);
    apply(t2, f2);
    if (cost) cost->alpha_examples += val_batch.n() + train_batch.n();
}

Architecture discretize_argmax(const Supernet& net) {
    Architecture a;
    for (int e = 0; e < net.edge_count(); ++e) {
        const Tensor& al = net.alpha[static_cast<std::size_t>(e)];
        const auto& mask = net.allowed[static_cast<std::size_t>(e)];
        int best = -1;
        for (int o = 0; o < al.numel(); ++o) {
            if (!mask[static_cast<std::size_t>(o)]) continue;
            if (best < 0 || al[o] > al[best]) best = o;
        }
        if (best < 0) throw std::logic_error("discretize: edge with no allowed ops");
        a.op_index.push_back(best);
    }
    return a;
}

std::vector<double> perturbation_scores(Supernet& net, const Batch& val, int edge,
                                        CostCounter* cost, int samples) {
    if (edge < 0 || edge >= net.edge_count()) throw std::out_of_range("perturbation: bad edge");
    if (val.n() == 0) throw std::invalid_argument("perturbation: empty validation set");
    if (samples < 1) throw std::invalid_argument("perturbation: samples must be positive");
    auto& mask = net.allowed[static_cast<std::size_t>(edge)];
    const std::mt19937_64 s0 = net.noise_state();
    std::vector<double> scores(mask.size(), 0.0);
    std::mt19937_64 cur = s0;
    for (int rep = 0; rep < samples; ++rep) {
        // Every evaluation in one rep starts from the same stream position, so
        // full and masked forwards see identical draws; reps advance the
        // stream to fresh draws.
        net.set_noise_state(cur);
        double full = supernet_accuracy(net, val, cost);
        std::mt19937_64 next = net.noise_state();
        for (std::size_t o = 0; o < mask.size(); ++o) {
            char saved = mask[o];
            mask[o] = 0;
            net.set_noise_state(cur);
            double masked = supernet_accuracy(net, val, cost);
            mask[o] = saved;
            scores[o] += (full - masked) / samples;
        }
        cur = next;
    }
    net.set_noise_state(s0);
    return scores;
}

Architecture project(Supernet& net, const Batch& val, const Batch& tune_data,
                     const ProjectOpts& opts, Rng& shuffle_rng, CostCounter* cost,
                     std::vector<ProjectDecision>* decisions) {
    if (tune_data.n() == 0) throw std::invalid_argument("project: empty tuning data");
    if (opts.batch <= 0 || opts.tune_epochs < 0) throw std::invalid_argument("project: bad options");
    std::vector<int> todo;
    for (int e = 0; e < net.edge_count(); ++e)
        if (!net.edge_decided(e)) todo.push_back(e);
    int epochs_per = todo.empty() ? 0 : opts.tune_epochs / static_cast<int>(todo.size());
    int remainder = todo.empty() ? 0 : opts.tune_epochs % static_cast<int>(todo.size());
    int steps_per_epoch = (tune_data.n() + opts.batch - 1) / opts.batch;
    int total_steps = opts.tune_epochs * steps_per_epoch;
    std::vector<int> order(static_cast<std::size_t>(tune_data.n()));
    std::iota(order.begin(), order.end(), 0);
    int step = 0;
    for (std::size_t i = 0; i < todo.size(); ++i) {
        int e = todo[i];
        std::vector<double> scores = perturbation_scores(net, val, e, cost, opts.noise_samples);
        const auto& mask = net.allowed[static_cast<std::size_t>(e)];
        int best = -1;
        for (std::size_t o = 0; o < mask.size(); ++o) {
            if (!mask[o]) continue;
            if (best < 0 || scores[o] > scores[static_cast<std::size_t>(best)])
                best = static_cast<int>(o);
        }
        net.restrict_edge(e, best);
        if (decisions) decisions->push_back(ProjectDecision{e, best, scores});
        int share = epochs_per + (static_cast<int>(i) < remainder ? 1 : 0);
        for (int ep = 0; ep < share; ++ep) {
            shuffle_rng.shuffle(order);
            for (int b = 0; b < steps_per_epoch; ++b) {
                int lo = b * opts.batch;
                int hi = std::min(tune_data.n(), lo + opts.batch);
                Batch mb = gather_rows(tune_data, std::vector<int>(order.begin() + lo,
                                                                   order.begin() + hi));
                supernet_theta_step(net, mb, nullptr, cosine_lr(step, total_steps, opts.lr0),
                                    opts.momentum, cost);
                ++step;
            }
        }
    }
    return discretize_argmax(net);
}

}  // namespace adanas
