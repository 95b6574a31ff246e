#pragma once

#include <vector>

#include "hyperedit/autograd.hpp"
#include "hyperedit/tensor.hpp"

namespace hyperedit::loss {

inline constexpr double kBceEps = 1e-7;      // clipping floor for log terms
inline constexpr double kDiceSmooth = 1.0;
inline constexpr int kIgnoreIndex = -1;      // padding positions in text targets

struct LossWeights {
    double lambda_bce = 1.0;
    double lambda_dice = 1.0;
    double lambda_txt = 1.0;
    double lambda_mask = 1.0;

    void validate() const;
};

// predicted in [0,1], ground truth strictly binary, same shape.
void validate_mask_pair(const Tensor& predicted, const Tensor& ground_truth);

// Mean over pixels of -[M log M^ + (1-M) log(1-M^)], M^ clipped to [eps, 1-eps].
double bce_loss(const Tensor& predicted, const Tensor& ground_truth);

// 1 - (2 sum(M^ M) + smooth) / (sum M^ + sum M + smooth)
double dice_loss(const Tensor& predicted, const Tensor& ground_truth,
                 double smooth = kDiceSmooth);

double mask_loss(const Tensor& predicted, const Tensor& ground_truth, const LossWeights& w);

// Mean token-level cross-entropy over positions whose target != ignore_index.
// logits: [T, V]. Throws if every position is ignored.
double text_loss(const Tensor& logits, const std::vector<int>& targets,
                 int ignore_index = kIgnoreIndex);

double total_loss(double txt, double mask, const LossWeights& w);

// Differentiable routes (same formulas, gradients w.r.t. predictions/logits).
ag::Var bce_loss(const ag::Var& predicted, const Tensor& ground_truth);
ag::Var dice_loss(const ag::Var& predicted, const Tensor& ground_truth,
                  double smooth = kDiceSmooth);
ag::Var mask_loss(const ag::Var& predicted, const Tensor& ground_truth, const LossWeights& w);
ag::Var text_loss(const ag::Var& logits, const std::vector<int>& targets,
                  int ignore_index = kIgnoreIndex);

}  // namespace hyperedit::loss
