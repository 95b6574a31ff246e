#include "hyperedit/autograd.hpp"

#include <algorithm>
#include <unordered_set>

namespace hyperedit::ag {

Var constant(Tensor v) { return std::make_shared<Node>(std::move(v), false); }
Var param(Tensor v) { return std::make_shared<Node>(std::move(v), true); }

namespace {

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> bp) {
    bool rg = false;
    for (const auto& in : inputs) rg = rg || in->requires_grad;
    auto n = std::make_shared<Node>(std::move(value), rg);
    if (rg) {
        n->inputs = std::move(inputs);
        n->backprop = std::move(bp);
    }
    return n;
}

void ensure_grad(const Var& v) {
    if (v->requires_grad && v->grad.shape != v->value.shape) v->grad = Tensor::zeros(v->value.shape);
}

void topo(const Var& v, std::unordered_set<Node*>& seen, std::vector<Var>& order) {
    if (!v->requires_grad || seen.count(v.get())) return;
    seen.insert(v.get());
    for (const auto& in : v->inputs) topo(in, seen, order);
    order.push_back(v);
}

}  // namespace

void backward(const Var& root) {
    require(root->value.numel() == 1, "backward: root must be scalar");
    std::unordered_set<Node*> seen;
    std::vector<Var> order;
    topo(root, seen, order);
    for (const auto& v : order) {
        v->grad = Tensor::zeros(v->value.shape);
        for (const auto& in : v->inputs) ensure_grad(in);
    }
    root->grad.data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params) p->grad = Tensor::zeros(p->value.shape);
}

Var add(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), "add: shape mismatch");
    Tensor out = a->value;
    for (long i = 0; i < out.numel(); ++i) out.data[i] += b->value.data[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (int s = 0; s < 2; ++s) {
            Node& in = *n.inputs[s];
            if (!in.requires_grad) continue;
            for (long i = 0; i < n.grad.numel(); ++i) in.grad.data[i] += n.grad.data[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), "sub: shape mismatch");
    Tensor out = a->value;
    for (long i = 0; i < out.numel(); ++i) out.data[i] -= b->value.data[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node& x = *n.inputs[0];
        Node& y = *n.inputs[1];
        for (long i = 0; i < n.grad.numel(); ++i) {
            if (x.requires_grad) x.grad.data[i] += n.grad.data[i];
            if (y.requires_grad) y.grad.data[i] -= n.grad.data[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), "mul: shape mismatch");
    Tensor out = a->value;
    for (long i = 0; i < out.numel(); ++i) out.data[i] *= b->value.data[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node& x = *n.inputs[0];
        Node& y = *n.inputs[1];
        for (long i = 0; i < n.grad.numel(); ++i) {
            if (x.requires_grad) x.grad.data[i] += n.grad.data[i] * y.value.data[i];
            if (y.requires_grad) y.grad.data[i] += n.grad.data[i] * x.value.data[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (double& v : out.data) v *= s;
    return make_op(std::move(out), {a}, [s](Node& n) {
        Node& x = *n.inputs[0];
        for (long i = 0; i < n.grad.numel(); ++i) x.grad.data[i] += n.grad.data[i] * s;
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (double& v : out.data) v += s;
    return make_op(std::move(out), {a}, [](Node& n) {
        Node& x = *n.inputs[0];
        for (long i = 0; i < n.grad.numel(); ++i) x.grad.data[i] += n.grad.data[i];
    });
}

Var relu(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return make_op(std::move(out), {a}, [](Node& n) {
        Node& x = *n.inputs[0];
        for (long i = 0; i < n.grad.numel(); ++i)
            if (x.value.data[i] > 0.0) x.grad.data[i] += n.grad.data[i];
    });
}

namespace {
// tanh form of GELU
double gelu_f(double x) {
    const double c = std::sqrt(2.0 / M_PI);
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}
double gelu_df(double x) {
    const double c = std::sqrt(2.0 / M_PI);
    double u = c * (x + 0.044715 * x * x * x);
    double t = std::tanh(u);
    double du = c * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}
}  // namespace

Var gelu(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = gelu_f(v);
    return make_op(std::move(out), {a}, [](Node& n) {
        Node& x = *n.inputs[0];
        for (long i = 0; i < n.grad.numel(); ++i)
            x.grad.data[i] += n.grad.data[i] * gelu_df(x.value.data[i]);
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return make_op(std::move(out), {a}, [](Node& n) {
        Node& x = *n.inputs[0];
        for (long i = 0; i < n.grad.numel(); ++i) {
            double y = n.value.data[i];
            x.grad.data[i] += n.grad.data[i] * y * (1.0 - y);
        }
    });
}

Var tanh_(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = std::tanh(v);
    return make_op(std::move(out), {a}, [](Node& n) {
        Node& x = *n.inputs[0];
        for (long i = 0; i < n.grad.numel(); ++i) {
            double y = n.value.data[i];
            x.grad.data[i] += n.grad.data[i] * (1.0 - y * y);
        }
    });
}

Var exp_(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = std::exp(v);
    return make_op(std::move(out), {a}, [](Node& n) {
        Node& x = *n.inputs[0];
        for (long i = 0; i < n.grad.numel(); ++i)
            x.grad.data[i] += n.grad.data[i] * n.value.data[i];
    });
}

Var square(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v *= v;
    return make_op(std::move(out), {a}, [](Node& n) {
        Node& x = *n.inputs[0];
        for (long i = 0; i < n.grad.numel(); ++i)
            x.grad.data[i] += n.grad.data[i] * 2.0 * x.value.data[i];
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a->value.data) s += v;
    return make_op(Tensor::from({1}, {s}), {a}, [](Node& n) {
        Node& x = *n.inputs[0];
        for (long i = 0; i < x.grad.numel(); ++i) x.grad.data[i] += n.grad.data[0];
    });
}

Var mean(const Var& a) {
    long m = a->value.numel();
    double s = 0.0;
    for (double v : a->value.data) s += v;
    return make_op(Tensor::from({1}, {s / m}), {a}, [m](Node& n) {
        Node& x = *n.inputs[0];
        double g = n.grad.data[0] / m;
        for (long i = 0; i < x.grad.numel(); ++i) x.grad.data[i] += g;
    });
}

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out;
    out.shape = std::move(shape);
    out.data = a->value.data;
    require(out.numel() == a->value.numel(), "reshape: element count mismatch");
    return make_op(std::move(out), {a}, [](Node& n) {
        Node& x = *n.inputs[0];
        for (long i = 0; i < n.grad.numel(); ++i) x.grad.data[i] += n.grad.data[i];
    });
}

Var concat_channels(const Var& a, const Var& b) {
    require(a->value.shape.size() == 3 && b->value.shape.size() == 3, "concat: rank 3 expected");
    require(a->value.shape[1] == b->value.shape[1] && a->value.shape[2] == b->value.shape[2],
            "concat: spatial mismatch");
    int ca = a->value.shape[0], cb = b->value.shape[0];
    int h = a->value.shape[1], w = a->value.shape[2];
    Tensor out({ca + cb, h, w});
    std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
    std::copy(b->value.data.begin(), b->value.data.end(),
              out.data.begin() + static_cast<long>(ca) * h * w);
    return make_op(std::move(out), {a, b}, [ca, h, w](Node& n) {
        Node& x = *n.inputs[0];
        Node& y = *n.inputs[1];
        long na = static_cast<long>(ca) * h * w;
        for (long i = 0; i < na; ++i)
            if (x.requires_grad) x.grad.data[i] += n.grad.data[i];
        for (long i = na; i < n.grad.numel(); ++i)
            if (y.requires_grad) y.grad.data[i - na] += n.grad.data[i];
    });
}

Var matmul(const Var& a, const Var& b) {
    require(a->value.shape.size() == 2 && b->value.shape.size() == 2, "matmul: rank 2 expected");
    int m = a->value.shape[0], k = a->value.shape[1], n2 = b->value.shape[1];
    require(b->value.shape[0] == k, "matmul: inner dim mismatch");
    Tensor out({m, n2});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double av = a->value.at(i, p);
            if (av == 0.0) continue;
            for (int j = 0; j < n2; ++j) out.at(i, j) += av * b->value.at(p, j);
        }
    return make_op(std::move(out), {a, b}, [m, k, n2](Node& n) {
        Node& A = *n.inputs[0];
        Node& B = *n.inputs[1];
        if (A.requires_grad)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n2; ++j) {
                    double g = n.grad.at(i, j);
                    for (int p = 0; p < k; ++p) A.grad.at(i, p) += g * B.value.at(p, j);
                }
        if (B.requires_grad)
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double av = A.value.at(i, p);
                    for (int j = 0; j < n2; ++j) B.grad.at(p, j) += av * n.grad.at(i, j);
                }
    });
}

Var transpose(const Var& a) {
    require(a->value.shape.size() == 2, "transpose: rank 2 expected");
    int r = a->value.shape[0], c = a->value.shape[1];
    Tensor out({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(j, i) = a->value.at(i, j);
    return make_op(std::move(out), {a}, [r, c](Node& n) {
        Node& x = *n.inputs[0];
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) x.grad.at(i, j) += n.grad.at(j, i);
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    require(x->value.shape.size() == 1, "linear: vector input expected");
    int n_in = x->value.shape[0], n_out = w->value.shape[0];
    require(w->value.shape[1] == n_in && b->value.shape[0] == n_out, "linear: dim mismatch");
    Tensor out({n_out});
    for (int i = 0; i < n_out; ++i) {
        double s = b->value(i);
        for (int j = 0; j < n_in; ++j) s += w->value.at(i, j) * x->value(j);
        out(i) = s;
    }
    return make_op(std::move(out), {x, w, b}, [n_in, n_out](Node& n) {
        Node& X = *n.inputs[0];
        Node& W = *n.inputs[1];
        Node& B = *n.inputs[2];
        for (int i = 0; i < n_out; ++i) {
            double g = n.grad(i);
            if (B.requires_grad) B.grad(i) += g;
            for (int j = 0; j < n_in; ++j) {
                if (W.requires_grad) W.grad.at(i, j) += g * X.value(j);
                if (X.requires_grad) X.grad(j) += g * W.value.at(i, j);
            }
        }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    require(x->value.shape.size() == 3 && w->value.shape.size() == 4, "conv2d: bad ranks");
    int cin = x->value.shape[0], h = x->value.shape[1], wd = x->value.shape[2];
    int cout = w->value.shape[0], k = w->value.shape[2];
    require(w->value.shape[1] == cin && w->value.shape[3] == k, "conv2d: weight shape");
    require(b->value.shape[0] == cout, "conv2d: bias shape");
    int ho = (h + 2 * pad - k) / stride + 1;
    int wo = (wd + 2 * pad - k) / stride + 1;
    Tensor out({cout, ho, wo});
    for (int oc = 0; oc < cout; ++oc)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double s = b->value(oc);
                for (int ic = 0; ic < cin; ++ic)
                    for (int ky = 0; ky < k; ++ky) {
                        int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= wd) continue;
                            s += w->value.at(oc, ic, ky, kx) * x->value.at(ic, iy, ix);
                        }
                    }
                out.at(oc, oy, ox) = s;
            }
    return make_op(std::move(out), {x, w, b}, [cin, h, wd, cout, k, ho, wo, stride, pad](Node& n) {
        Node& X = *n.inputs[0];
        Node& W = *n.inputs[1];
        Node& B = *n.inputs[2];
        for (int oc = 0; oc < cout; ++oc)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double g = n.grad.at(oc, oy, ox);
                    if (g == 0.0) continue;
                    if (B.requires_grad) B.grad(oc) += g;
                    for (int ic = 0; ic < cin; ++ic)
                        for (int ky = 0; ky < k; ++ky) {
                            int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= wd) continue;
                                if (W.requires_grad)
                                    W.grad.at(oc, ic, ky, kx) += g * X.value.at(ic, iy, ix);
                                if (X.requires_grad)
                                    X.grad.at(ic, iy, ix) += g * W.value.at(oc, ic, ky, kx);
                            }
                        }
                }
    });
}

Var upsample_nearest2(const Var& x) {
    require(x->value.shape.size() == 3, "upsample: rank 3 expected");
    int c = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2];
    Tensor out({c, 2 * h, 2 * w});
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                out.at(ic, y, xx) = x->value.at(ic, y / 2, xx / 2);
    return make_op(std::move(out), {x}, [c, h, w](Node& n) {
        Node& X = *n.inputs[0];
        for (int ic = 0; ic < c; ++ic)
            for (int y = 0; y < 2 * h; ++y)
                for (int xx = 0; xx < 2 * w; ++xx)
                    X.grad.at(ic, y / 2, xx / 2) += n.grad.at(ic, y, xx);
    });
}

Var gather_rows(const Var& table, const std::vector<int>& ids) {
    require(table->value.shape.size() == 2, "gather_rows: rank 2 expected");
    int v = table->value.shape[0], d = table->value.shape[1];
    Tensor out({static_cast<int>(ids.size()), d});
    for (size_t t = 0; t < ids.size(); ++t) {
        require(ids[t] >= 0 && ids[t] < v, "gather_rows: index out of range");
        for (int j = 0; j < d; ++j) out.at(static_cast<int>(t), j) = table->value.at(ids[t], j);
    }
    return make_op(std::move(out), {table}, [ids, d](Node& n) {
        Node& T = *n.inputs[0];
        for (size_t t = 0; t < ids.size(); ++t)
            for (int j = 0; j < d; ++j)
                T.grad.at(ids[t], j) += n.grad.at(static_cast<int>(t), j);
    });
}

Var select_row(const Var& m, int row) {
    require(m->value.shape.size() == 2, "select_row: rank 2 expected");
    require(row >= 0 && row < m->value.shape[0], "select_row: out of range");
    int d = m->value.shape[1];
    Tensor out({d});
    for (int j = 0; j < d; ++j) out(j) = m->value.at(row, j);
    return make_op(std::move(out), {m}, [row, d](Node& n) {
        Node& M = *n.inputs[0];
        for (int j = 0; j < d; ++j) M.grad.at(row, j) += n.grad(j);
    });
}

Var broadcast_spatial(const Var& v, int h, int w) {
    require(v->value.shape.size() == 1, "broadcast_spatial: vector expected");
    int c = v->value.shape[0];
    Tensor out({c, h, w});
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) out.at(ic, y, xx) = v->value(ic);
    return make_op(std::move(out), {v}, [c, h, w](Node& n) {
        Node& V = *n.inputs[0];
        for (int ic = 0; ic < c; ++ic) {
            double s = 0.0;
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) s += n.grad.at(ic, y, xx);
            V.grad(ic) += s;
        }
    });
}

Var mean_spatial(const Var& x) {
    require(x->value.shape.size() == 3, "mean_spatial: rank 3 expected");
    int c = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2];
    Tensor out({c});
    for (int ic = 0; ic < c; ++ic) {
        double s = 0.0;
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) s += x->value.at(ic, y, xx);
        out(ic) = s / (h * w);
    }
    return make_op(std::move(out), {x}, [c, h, w](Node& n) {
        Node& X = *n.inputs[0];
        for (int ic = 0; ic < c; ++ic) {
            double g = n.grad(ic) / (h * w);
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) X.grad.at(ic, y, xx) += g;
        }
    });
}

Var mean_rows(const Var& m, const std::vector<int>& rows) {
    require(m->value.shape.size() == 2, "mean_rows: rank 2 expected");
    require(!rows.empty(), "mean_rows: empty selection");
    int d = m->value.shape[1];
    Tensor out({d});
    for (int r : rows) {
        require(r >= 0 && r < m->value.shape[0], "mean_rows: out of range");
        for (int j = 0; j < d; ++j) out(j) += m->value.at(r, j);
    }
    for (int j = 0; j < d; ++j) out(j) /= rows.size();
    return make_op(std::move(out), {m}, [rows, d](Node& n) {
        Node& M = *n.inputs[0];
        for (int r : rows)
            for (int j = 0; j < d; ++j) M.grad.at(r, j) += n.grad(j) / rows.size();
    });
}

Var stack_rows(const std::vector<Var>& rows) {
    require(!rows.empty(), "stack_rows: empty input");
    int d = rows[0]->value.shape[0];
    Tensor out({static_cast<int>(rows.size()), d});
    for (size_t t = 0; t < rows.size(); ++t) {
        require(rows[t]->value.shape == std::vector<int>{d}, "stack_rows: row dim mismatch");
        for (int j = 0; j < d; ++j) out.at(static_cast<int>(t), j) = rows[t]->value(j);
    }
    std::vector<Var> inputs(rows.begin(), rows.end());
    return make_op(std::move(out), std::move(inputs), [d](Node& n) {
        for (size_t t = 0; t < n.inputs.size(); ++t) {
            Node& r = *n.inputs[t];
            if (!r.requires_grad) continue;
            for (int j = 0; j < d; ++j) r.grad(j) += n.grad.at(static_cast<int>(t), j);
        }
    });
}

}  // namespace hyperedit::ag
