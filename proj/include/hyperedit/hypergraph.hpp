#pragma once

#include <string>
#include <vector>

#include "hyperedit/autograd.hpp"
#include "hyperedit/tensor.hpp"

namespace hyperedit::hg {

// Incidence-matrix hypergraph over the positions of a flattened feature map.
// One hyperedge per node: the tau-ball of that node plus the node itself.
struct Hypergraph {
    int num_nodes = 0;
    int num_edges = 0;
    std::vector<std::vector<int>> edge_members;   // per edge, sorted node indices
    std::vector<std::vector<int>> node_edges;     // per node, incident edge indices
    std::vector<int> node_degrees;                // D_v
    std::vector<int> edge_degrees;                // D_e

    bool incident(int node, int edge) const;
    std::string to_json() const;
    void validate() const;
};

enum class Activation { Identity, Relu, Gelu };

struct HyPConvLayer {
    Tensor weight_v2e;  // [C_in, C_mid]
    Tensor weight_e2v;  // [C_mid, C_out]
    Tensor bias;        // [C_out]
    Activation activation = Activation::Identity;
};

// Pairwise special case of the message passing, kept as a test oracle.
struct GraphConvReference {
    Tensor adjacency;  // [N,N] binary, symmetric, ones on diagonal
    Tensor weight;     // [C_in, C_out]
    Tensor bias;       // [C_out]
    Activation activation = Activation::Identity;
};

inline constexpr int kMaxNodes = 4096;  // pairwise distance is O(N^2 C)

// features: [C, N] channel vectors per spatial position; edge i collects
// every j with ||x_i - x_j||_2 < tau, plus i itself.
Hypergraph build_hypergraph(const Tensor& features, double tau);

// Median of all pairwise distances (i<j); the default tau when none is set.
double median_pairwise_distance(const Tensor& features);

// Degree-normalized aggregation, plain tensors.
Tensor v2e(const Tensor& node_features, const Hypergraph& g);   // [C,N] -> [C,E]
Tensor e2v(const Tensor& edge_features, const Hypergraph& g);   // [C,E] -> [C,N]
Tensor hypconv(const Tensor& node_features, const Hypergraph& g, const HyPConvLayer& layer);
Tensor graph_conv_reference(const Tensor& node_features, const GraphConvReference& ref);

// Autograd route used by the models; incidence is constant w.r.t. grads.
ag::Var v2e(const ag::Var& node_features, const Hypergraph& g);
ag::Var e2v(const ag::Var& edge_features, const Hypergraph& g);
ag::Var hypconv(const ag::Var& node_features, const Hypergraph& g, const ag::Var& w_v2e,
                const ag::Var& w_e2v, const ag::Var& bias, Activation act);

ag::Var apply_activation(const ag::Var& x, Activation act);
Activation activation_from_string(const std::string& name);
std::string activation_to_string(Activation act);

}  // namespace hyperedit::hg
