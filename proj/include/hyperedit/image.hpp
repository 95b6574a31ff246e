#pragma once

#include <string>

#include "hyperedit/tensor.hpp"

namespace hyperedit::img {

// Images are [C,H,W] tensors with values in [0,1]; masks are [1,H,W] with
// entries in {0,1} (1 = region to edit). Batches are [B,C,H,W].

struct FlattenedFeatures {
    Tensor data;  // [B, C, N], N = height * width
    int height = 0;
    int width = 0;
};

FlattenedFeatures flatten_for_graph(const Tensor& features);  // [B,C,H,W] -> [B,C,HW]
Tensor restore_shape(const FlattenedFeatures& flat);          // exact inverse

void validate_image(const Tensor& image);  // [C,H,W], finite, in [0,1]
void validate_mask(const Tensor& mask);    // [1,H,W], binary

Tensor load_png(const std::string& path);             // [3,H,W] in [0,1]
void save_png(const std::string& path, const Tensor& image);
Tensor load_mask_png(const std::string& path);        // [1,H,W], 0/255 -> {0,1}
void save_mask_png(const std::string& path, const Tensor& mask);

// Morphological dilation with a square structuring element of side 2r+1.
Tensor dilate_mask(const Tensor& mask, int radius);

// Feathered composite: mask blurred with a circular-support Gaussian of the
// given radius; pixels at distance > radius outside the mask keep the
// original values bit-exactly.
Tensor blend(const Tensor& original, const Tensor& generated, const Tensor& mask, int radius);

Tensor clamp01(Tensor t);

}  // namespace hyperedit::img
