#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hyperedit/autograd.hpp"
#include "hyperedit/hypergraph.hpp"
#include "hyperedit/tensor.hpp"

namespace th {

using hyperedit::Tensor;
namespace ag = hyperedit::ag;
namespace hg = hyperedit::hg;

inline std::string data_dir() {
    const char* env = std::getenv("HYPEREDIT_TEST_DATA");
    return env ? env : "tests/data";
}

inline Tensor random_tensor(std::vector<int> shape, std::mt19937& rng, double stddev = 1.0) {
    return Tensor::randn(std::move(shape), rng, stddev);
}

// Builds a valid hypergraph from random member sets; every node gets covered.
inline hg::Hypergraph random_hypergraph(std::mt19937& rng, int n, int e) {
    hg::Hypergraph g;
    g.num_nodes = n;
    g.num_edges = e;
    g.edge_members.resize(e);
    std::uniform_int_distribution<int> node_pick(0, n - 1);
    std::bernoulli_distribution keep(0.3);
    for (int i = 0; i < e; ++i) {
        std::vector<bool> in(n, false);
        for (int j = 0; j < n; ++j)
            if (keep(rng)) in[j] = true;
        in[node_pick(rng)] = true;  // nonempty
        for (int j = 0; j < n; ++j)
            if (in[j]) g.edge_members[i].push_back(j);
    }
    std::vector<bool> covered(n, false);
    for (const auto& m : g.edge_members)
        for (int j : m) covered[j] = true;
    for (int j = 0; j < n; ++j)
        if (!covered[j]) {
            auto& m = g.edge_members[static_cast<size_t>(j) % e];
            m.push_back(j);
            std::sort(m.begin(), m.end());
            m.erase(std::unique(m.begin(), m.end()), m.end());
        }
    g.node_edges.assign(n, {});
    g.node_degrees.assign(n, 0);
    g.edge_degrees.assign(e, 0);
    for (int i = 0; i < e; ++i) {
        g.edge_degrees[i] = static_cast<int>(g.edge_members[i].size());
        for (int j : g.edge_members[i]) {
            g.node_edges[j].push_back(i);
            ++g.node_degrees[j];
        }
    }
    g.validate();
    return g;
}

// Explicit D_v^-1 H D_e^-1 H^T oracle, built independently of the
// incidence-list implementation.
inline Tensor dense_hypconv(const Tensor& x, const hg::Hypergraph& g,
                            const hg::HyPConvLayer& layer) {
    int n = g.num_nodes, e = g.num_edges;
    int cin = x.shape[0];
    int cmid = layer.weight_v2e.shape[1];
    int cout = layer.weight_e2v.shape[1];
    Tensor h({n, e});
    for (int edge = 0; edge < e; ++edge)
        for (int m : g.edge_members[edge]) h.at(m, edge) = 1.0;

    Tensor xw({cmid, n});
    for (int c = 0; c < cmid; ++c)
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int k = 0; k < cin; ++k) s += layer.weight_v2e.at(k, c) * x.at(k, i);
            xw.at(c, i) = s;
        }
    Tensor ef({cmid, e});
    for (int c = 0; c < cmid; ++c)
        for (int edge = 0; edge < e; ++edge) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += xw.at(c, i) * h.at(i, edge);
            ef.at(c, edge) = s / g.edge_degrees[edge];
        }
    Tensor nf({cmid, n});
    for (int c = 0; c < cmid; ++c)
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int edge = 0; edge < e; ++edge) s += ef.at(c, edge) * h.at(i, edge);
            nf.at(c, i) = s / g.node_degrees[i];
        }
    Tensor out({cout, n});
    for (int c = 0; c < cout; ++c)
        for (int i = 0; i < n; ++i) {
            double s = layer.bias(c);
            for (int k = 0; k < cmid; ++k) s += layer.weight_e2v.at(k, c) * nf.at(k, i);
            switch (layer.activation) {
                case hg::Activation::Identity: break;
                case hg::Activation::Relu: s = s > 0.0 ? s : 0.0; break;
                case hg::Activation::Gelu:
                    s = 0.5 * s *
                        (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (s + 0.044715 * s * s * s)));
                    break;
            }
            out.at(c, i) = s;
        }
    return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (long i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

// Central finite differences against analytic gradients for a scalar root.
// `build` must construct a fresh graph from the current parameter values.
inline double max_grad_rel_err(const std::vector<ag::Var>& params,
                               const std::function<ag::Var()>& build, double step = 1e-4) {
    ag::zero_grad(params);
    ag::Var root = build();
    ag::backward(root);
    double worst = 0.0;
    for (const auto& p : params) {
        for (long i = 0; i < p->value.numel(); ++i) {
            double saved = p->value.data[i];
            p->value.data[i] = saved + step;
            double up = build()->value(0);
            p->value.data[i] = saved - step;
            double down = build()->value(0);
            p->value.data[i] = saved;
            double fd = (up - down) / (2.0 * step);
            double an = p->grad.data[i];
            double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    return worst;
}

}  // namespace th
