#include "hyperedit/hypergraph.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace hyperedit::hg {

bool Hypergraph::incident(int node, int edge) const {
    const auto& m = edge_members[edge];
    return std::binary_search(m.begin(), m.end(), node);
}

std::string Hypergraph::to_json() const {
    nlohmann::json j;
    j["num_nodes"] = num_nodes;
    j["num_edges"] = num_edges;
    j["incidence"] = edge_members;
    return j.dump();
}

void Hypergraph::validate() const {
    require(num_nodes >= 1 && num_edges >= 1, "Hypergraph: empty");
    for (int e = 0; e < num_edges; ++e)
        require(edge_degrees[e] >= 1, "Hypergraph: empty hyperedge");
    for (int i = 0; i < num_nodes; ++i)
        require(node_degrees[i] >= 1, "Hypergraph: uncovered node");
}

Hypergraph build_hypergraph(const Tensor& features, double tau) {
    require(features.shape.size() == 2, "build_hypergraph: features must be [C,N]");
    require(tau > 0.0, "build_hypergraph: tau must be positive");
    require(features.all_finite(), "build_hypergraph: non-finite features");
    int c = features.shape[0], n = features.shape[1];
    require(n >= 1, "build_hypergraph: need at least one node");
    require(n <= kMaxNodes, "build_hypergraph: node count exceeds cap " + std::to_string(kMaxNodes));

    Hypergraph g;
    g.num_nodes = n;
    g.num_edges = n;
    g.edge_members.resize(n);
    g.node_edges.resize(n);
    g.node_degrees.assign(n, 0);
    g.edge_degrees.assign(n, 0);

    double tau2 = tau * tau;
    for (int i = 0; i < n; ++i) {
        auto& members = g.edge_members[i];
        for (int j = 0; j < n; ++j) {
            if (j == i) {
                members.push_back(j);
                continue;
            }
            double d2 = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                double diff = features.at(ch, i) - features.at(ch, j);
                d2 += diff * diff;
            }
            if (d2 < tau2) members.push_back(j);
        }
        g.edge_degrees[i] = static_cast<int>(members.size());
        for (int m : members) {
            g.node_edges[m].push_back(i);
            ++g.node_degrees[m];
        }
    }
    g.validate();
    return g;
}

double median_pairwise_distance(const Tensor& features) {
    int c = features.shape[0], n = features.shape[1];
    std::vector<double> dists;
    dists.reserve(static_cast<size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                double diff = features.at(ch, i) - features.at(ch, j);
                d2 += diff * diff;
            }
            dists.push_back(std::sqrt(d2));
        }
    if (dists.empty()) return 1.0;
    size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
    return dists[mid];
}

Tensor v2e(const Tensor& node_features, const Hypergraph& g) {
    require(node_features.shape.size() == 2 && node_features.shape[1] == g.num_nodes,
            "v2e: node feature count does not match hypergraph");
    int c = node_features.shape[0];
    Tensor out({c, g.num_edges});
    for (int e = 0; e < g.num_edges; ++e) {
        double inv = 1.0 / g.edge_degrees[e];
        for (int m : g.edge_members[e])
            for (int ch = 0; ch < c; ++ch) out.at(ch, e) += node_features.at(ch, m) * inv;
    }
    return out;
}

Tensor e2v(const Tensor& edge_features, const Hypergraph& g) {
    require(edge_features.shape.size() == 2 && edge_features.shape[1] == g.num_edges,
            "e2v: edge feature count does not match hypergraph");
    int c = edge_features.shape[0];
    Tensor out({c, g.num_nodes});
    for (int i = 0; i < g.num_nodes; ++i) {
        double inv = 1.0 / g.node_degrees[i];
        for (int e : g.node_edges[i])
            for (int ch = 0; ch < c; ++ch) out.at(ch, i) += edge_features.at(ch, e) * inv;
    }
    return out;
}

namespace {

Tensor matmul_tn(const Tensor& wt, const Tensor& x) {
    // wt [Cin, Cout], x [Cin, N] -> [Cout, N]
    int cin = wt.shape[0], cout = wt.shape[1], n = x.shape[1];
    Tensor out({cout, n});
    for (int ic = 0; ic < cin; ++ic)
        for (int oc = 0; oc < cout; ++oc) {
            double w = wt.at(ic, oc);
            if (w == 0.0) continue;
            for (int j = 0; j < n; ++j) out.at(oc, j) += w * x.at(ic, j);
        }
    return out;
}

double apply_act(double v, Activation act) {
    switch (act) {
        case Activation::Identity: return v;
        case Activation::Relu: return v > 0.0 ? v : 0.0;
        case Activation::Gelu: {
            const double c = std::sqrt(2.0 / M_PI);
            return 0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v)));
        }
    }
    return v;
}

}  // namespace

Tensor hypconv(const Tensor& node_features, const Hypergraph& g, const HyPConvLayer& layer) {
    require(node_features.shape[0] == layer.weight_v2e.shape[0], "hypconv: C_in mismatch");
    require(layer.weight_v2e.shape[1] == layer.weight_e2v.shape[0], "hypconv: C_mid mismatch");
    require(layer.weight_e2v.shape[1] == layer.bias.shape[0], "hypconv: C_out mismatch");
    Tensor h = matmul_tn(layer.weight_v2e, node_features);  // [C_mid, N]
    Tensor he = v2e(h, g);                                  // [C_mid, E]
    Tensor hv = e2v(he, g);                                 // [C_mid, N]
    Tensor out = matmul_tn(layer.weight_e2v, hv);           // [C_out, N]
    int cout = out.shape[0], n = out.shape[1];
    for (int oc = 0; oc < cout; ++oc)
        for (int j = 0; j < n; ++j)
            out.at(oc, j) = apply_act(out.at(oc, j) + layer.bias(oc), layer.activation);
    return out;
}

Tensor graph_conv_reference(const Tensor& node_features, const GraphConvReference& ref) {
    int n = ref.adjacency.shape[0];
    require(ref.adjacency.shape.size() == 2 && ref.adjacency.shape[1] == n,
            "graph_conv_reference: adjacency must be square");
    require(node_features.shape[1] == n, "graph_conv_reference: node count mismatch");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            require(ref.adjacency.at(i, j) == ref.adjacency.at(j, i),
                    "graph_conv_reference: adjacency must be symmetric");
    int cin = node_features.shape[0], cout = ref.weight.shape[1];
    Tensor out({cout, n});
    for (int i = 0; i < n; ++i) {
        std::vector<double> agg(cin, 0.0);
        int deg = 0;
        for (int j = 0; j < n; ++j) {
            if (ref.adjacency.at(i, j) == 0.0) continue;
            ++deg;
            for (int ch = 0; ch < cin; ++ch) agg[ch] += node_features.at(ch, j);
        }
        require(deg >= 1, "graph_conv_reference: isolated node");
        for (int oc = 0; oc < cout; ++oc) {
            double s = ref.bias(oc);
            for (int ch = 0; ch < cin; ++ch) s += ref.weight.at(ch, oc) * agg[ch] / deg;
            out.at(oc, i) = apply_act(s, ref.activation);
        }
    }
    return out;
}

ag::Var v2e(const ag::Var& node_features, const Hypergraph& g) {
    require(node_features->value.shape[1] == g.num_nodes, "v2e: node count mismatch");
    Tensor out = v2e(node_features->value, g);
    auto n = std::make_shared<ag::Node>(std::move(out), node_features->requires_grad);
    if (n->requires_grad) {
        n->inputs = {node_features};
        // copy: the graph is often a temporary that dies before backward()
        Hypergraph graph = g;
        n->backprop = [graph = std::move(graph)](ag::Node& node) {
            ag::Node& x = *node.inputs[0];
            int c = x.value.shape[0];
            for (int e = 0; e < graph.num_edges; ++e) {
                double inv = 1.0 / graph.edge_degrees[e];
                for (int m : graph.edge_members[e])
                    for (int ch = 0; ch < c; ++ch)
                        x.grad.at(ch, m) += node.grad.at(ch, e) * inv;
            }
        };
    }
    return n;
}

ag::Var e2v(const ag::Var& edge_features, const Hypergraph& g) {
    require(edge_features->value.shape[1] == g.num_edges, "e2v: edge count mismatch");
    Tensor out = e2v(edge_features->value, g);
    auto n = std::make_shared<ag::Node>(std::move(out), edge_features->requires_grad);
    if (n->requires_grad) {
        n->inputs = {edge_features};
        // copy: the graph is often a temporary that dies before backward()
        Hypergraph graph = g;
        n->backprop = [graph = std::move(graph)](ag::Node& node) {
            ag::Node& x = *node.inputs[0];
            int c = x.value.shape[0];
            for (int i = 0; i < graph.num_nodes; ++i) {
                double inv = 1.0 / graph.node_degrees[i];
                for (int e : graph.node_edges[i])
                    for (int ch = 0; ch < c; ++ch)
                        x.grad.at(ch, e) += node.grad.at(ch, i) * inv;
            }
        };
    }
    return n;
}

ag::Var apply_activation(const ag::Var& x, Activation act) {
    switch (act) {
        case Activation::Identity: return x;
        case Activation::Relu: return ag::relu(x);
        case Activation::Gelu: return ag::gelu(x);
    }
    return x;
}

ag::Var hypconv(const ag::Var& node_features, const Hypergraph& g, const ag::Var& w_v2e,
                const ag::Var& w_e2v, const ag::Var& bias, Activation act) {
    int n = node_features->value.shape[1];
    int cout = w_e2v->value.shape[1];
    auto projected = ag::matmul(ag::transpose(w_v2e), node_features);  // [Cmid, N]
    auto edge_feats = v2e(projected, g);                               // [Cmid, E]
    auto node_feats = e2v(edge_feats, g);                              // [Cmid, N]
    auto mixed = ag::matmul(ag::transpose(w_e2v), node_feats);         // [Cout, N]
    auto bias_map = ag::reshape(ag::broadcast_spatial(bias, 1, n), {cout, n});
    return apply_activation(ag::add(mixed, bias_map), act);
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "relu") return Activation::Relu;
    if (name == "gelu") return Activation::Gelu;
    throw std::invalid_argument("unknown activation: " + name);
}

std::string activation_to_string(Activation act) {
    switch (act) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Gelu: return "gelu";
    }
    return "identity";
}

}  // namespace hyperedit::hg
