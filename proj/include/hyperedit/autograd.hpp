#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hyperedit/tensor.hpp"

namespace hyperedit::ag {

// Reverse-mode autodiff over dense double tensors. Small tape, built per
// forward pass; sized for desk-scale models, not throughput.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<Var> inputs;
    std::function<void(Node&)> backprop;  // reads this->grad, accumulates into inputs

    explicit Node(Tensor v, bool rg) : value(std::move(v)), requires_grad(rg) {
        if (requires_grad) grad = Tensor::zeros(value.shape);
    }
};

Var constant(Tensor v);
Var param(Tensor v);
// Runs backward from a scalar root; seeds root grad with 1.
void backward(const Var& root);
void zero_grad(const std::vector<Var>& params);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var tanh_(const Var& a);
Var exp_(const Var& a);
Var square(const Var& a);

// ---- reductions / shape ----
Var sum(const Var& a);
Var mean(const Var& a);
Var reshape(const Var& a, std::vector<int> shape);
Var concat_channels(const Var& a, const Var& b);  // [Ca,H,W] + [Cb,H,W]

// ---- linear algebra / nn ----
Var matmul(const Var& a, const Var& b);                       // [m,k]x[k,n]
Var transpose(const Var& a);                                  // [m,n] -> [n,m]
Var linear(const Var& x, const Var& w, const Var& b);          // x [n], w [m,n], b [m]
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x [Cin,H,W], w [Cout,Cin,k,k], b [Cout]
Var upsample_nearest2(const Var& x);                           // [C,H,W] -> [C,2H,2W]
Var gather_rows(const Var& table, const std::vector<int>& ids);  // table [V,D] -> [T,D]
Var select_row(const Var& m, int row);                         // [T,D] -> [D]
Var broadcast_spatial(const Var& v, int h, int w);             // [C] -> [C,h,w]
Var mean_spatial(const Var& x);                                // [C,H,W] -> [C]
Var mean_rows(const Var& m, const std::vector<int>& rows);     // mean of selected rows of [T,D]
Var stack_rows(const std::vector<Var>& rows);                  // T x [D] -> [T,D]

}  // namespace hyperedit::ag
