#include "hyperedit/losses.hpp"

#include <algorithm>
#include <cmath>

namespace hyperedit::loss {

void LossWeights::validate() const {
    require(std::isfinite(lambda_bce) && lambda_bce >= 0.0, "lambda_bce must be >= 0");
    require(std::isfinite(lambda_dice) && lambda_dice >= 0.0, "lambda_dice must be >= 0");
    require(std::isfinite(lambda_txt) && lambda_txt >= 0.0, "lambda_txt must be >= 0");
    require(std::isfinite(lambda_mask) && lambda_mask >= 0.0, "lambda_mask must be >= 0");
}

void validate_mask_pair(const Tensor& predicted, const Tensor& ground_truth) {
    require(predicted.same_shape(ground_truth), "mask pair: shape mismatch");
    require(predicted.numel() > 0, "mask pair: empty");
    for (double v : predicted.data)
        require(v >= 0.0 && v <= 1.0, "predicted mask outside [0,1]");
    for (double v : ground_truth.data)
        require(v == 0.0 || v == 1.0, "ground-truth mask must be binary");
}

namespace {
double clip01(double v) { return std::clamp(v, kBceEps, 1.0 - kBceEps); }
}

double bce_loss(const Tensor& predicted, const Tensor& ground_truth) {
    validate_mask_pair(predicted, ground_truth);
    double s = 0.0;
    for (long i = 0; i < predicted.numel(); ++i) {
        double p = clip01(predicted.data[i]);
        double m = ground_truth.data[i];
        s -= m * std::log(p) + (1.0 - m) * std::log(1.0 - p);
    }
    return s / predicted.numel();
}

double dice_loss(const Tensor& predicted, const Tensor& ground_truth, double smooth) {
    validate_mask_pair(predicted, ground_truth);
    double inter = 0.0, sp = 0.0, sg = 0.0;
    for (long i = 0; i < predicted.numel(); ++i) {
        inter += predicted.data[i] * ground_truth.data[i];
        sp += predicted.data[i];
        sg += ground_truth.data[i];
    }
    return 1.0 - (2.0 * inter + smooth) / (sp + sg + smooth);
}

double mask_loss(const Tensor& predicted, const Tensor& ground_truth, const LossWeights& w) {
    w.validate();
    return w.lambda_bce * bce_loss(predicted, ground_truth) +
           w.lambda_dice * dice_loss(predicted, ground_truth);
}

double text_loss(const Tensor& logits, const std::vector<int>& targets, int ignore_index) {
    require(logits.shape.size() == 2, "text_loss: logits must be [T,V]");
    int t_len = logits.shape[0], v = logits.shape[1];
    require(v >= 2, "text_loss: vocabulary must have at least 2 entries");
    require(static_cast<int>(targets.size()) == t_len, "text_loss: target length mismatch");
    double s = 0.0;
    int count = 0;
    for (int t = 0; t < t_len; ++t) {
        int y = targets[t];
        if (y == ignore_index) continue;
        require(y >= 0 && y < v, "text_loss: target index out of range");
        double mx = logits.at(t, 0);
        for (int j = 1; j < v; ++j) mx = std::max(mx, logits.at(t, j));
        double z = 0.0;
        for (int j = 0; j < v; ++j) z += std::exp(logits.at(t, j) - mx);
        s += std::log(z) - (logits.at(t, y) - mx);
        ++count;
    }
    require(count > 0, "text_loss: all positions ignored");
    return s / count;
}

double total_loss(double txt, double mask, const LossWeights& w) {
    w.validate();
    return w.lambda_txt * txt + w.lambda_mask * mask;
}

namespace {

ag::Var make_scalar_op(double value, std::vector<ag::Var> inputs,
                       std::function<void(ag::Node&)> bp) {
    bool rg = false;
    for (const auto& in : inputs) rg = rg || in->requires_grad;
    auto n = std::make_shared<ag::Node>(Tensor::from({1}, {value}), rg);
    if (rg) {
        n->inputs = std::move(inputs);
        n->backprop = std::move(bp);
    }
    return n;
}

}  // namespace

ag::Var bce_loss(const ag::Var& predicted, const Tensor& ground_truth) {
    double v = bce_loss(predicted->value, ground_truth);
    Tensor gt = ground_truth;
    return make_scalar_op(v, {predicted}, [gt](ag::Node& n) {
        ag::Node& p = *n.inputs[0];
        long m = p.value.numel();
        double g = n.grad.data[0] / m;
        for (long i = 0; i < m; ++i) {
            double pv = p.value.data[i];
            if (pv < kBceEps || pv > 1.0 - kBceEps) continue;  // clipped region
            p.grad.data[i] += g * (-gt.data[i] / pv + (1.0 - gt.data[i]) / (1.0 - pv));
        }
    });
}

ag::Var dice_loss(const ag::Var& predicted, const Tensor& ground_truth, double smooth) {
    double v = dice_loss(predicted->value, ground_truth, smooth);
    Tensor gt = ground_truth;
    return make_scalar_op(v, {predicted}, [gt, smooth](ag::Node& n) {
        ag::Node& p = *n.inputs[0];
        double inter = 0.0, sp = 0.0, sg = 0.0;
        for (long i = 0; i < p.value.numel(); ++i) {
            inter += p.value.data[i] * gt.data[i];
            sp += p.value.data[i];
            sg += gt.data[i];
        }
        double num = 2.0 * inter + smooth;
        double den = sp + sg + smooth;
        double g = n.grad.data[0];
        for (long i = 0; i < p.value.numel(); ++i) {
            // d(1 - num/den)/dp_i = -(2 m_i den - num) / den^2
            p.grad.data[i] += g * (num - 2.0 * gt.data[i] * den) / (den * den);
        }
    });
}

ag::Var mask_loss(const ag::Var& predicted, const Tensor& ground_truth, const LossWeights& w) {
    w.validate();
    auto b = ag::scale(bce_loss(predicted, ground_truth), w.lambda_bce);
    auto d = ag::scale(dice_loss(predicted, ground_truth), w.lambda_dice);
    return ag::add(b, d);
}

ag::Var text_loss(const ag::Var& logits, const std::vector<int>& targets, int ignore_index) {
    double v = text_loss(logits->value, targets, ignore_index);
    return make_scalar_op(v, {logits}, [targets, ignore_index](ag::Node& n) {
        ag::Node& l = *n.inputs[0];
        int t_len = l.value.shape[0], vsz = l.value.shape[1];
        int count = 0;
        for (int t = 0; t < t_len; ++t)
            if (targets[t] != ignore_index) ++count;
        double g = n.grad.data[0] / count;
        for (int t = 0; t < t_len; ++t) {
            int y = targets[t];
            if (y == ignore_index) continue;
            double mx = l.value.at(t, 0);
            for (int j = 1; j < vsz; ++j) mx = std::max(mx, l.value.at(t, j));
            double z = 0.0;
            for (int j = 0; j < vsz; ++j) z += std::exp(l.value.at(t, j) - mx);
            for (int j = 0; j < vsz; ++j) {
                double soft = std::exp(l.value.at(t, j) - mx) / z;
                l.grad.at(t, j) += g * (soft - (j == y ? 1.0 : 0.0));
            }
        }
    });
}

}  // namespace hyperedit::loss
