#pragma once

#include <cstdint>
#include <vector>

#include "usema/autodiff.hpp"
#include "usema/grid.hpp"

namespace usema {

inline constexpr double kDiceSmooth = 1e-5;

// Class labels for a batch, one grid per sample.
using LabelBatch = std::vector<LabelGrid>;

// [B, K, H, W] one-hot encoding; ValidationError on labels outside [0, K).
template <typename T>
Tensor<T> one_hot(const LabelBatch& labels, std::int64_t classes);

// 1 - mean_k (2 sum p t + s) / (sum p + sum t + s), p = softmax over the class axis
// of logits [B, K, H, W], sums over batch and pixels.
template <typename T>
Var<T> dice_loss(const Var<T>& logits, const Tensor<T>& target, T smooth = static_cast<T>(kDiceSmooth));

// Mean over pixels of -log softmax(logits)[label].
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const LabelBatch& labels);

// Nearest-neighbour downsampling by an integer factor: sample (r*f, c*f).
LabelGrid downsample_labels(const LabelGrid& labels, std::int64_t factor);

// Weights 1, 1/2, 1/4, ... (finest first) normalised to sum 1.
std::vector<double> deep_supervision_weights(std::size_t scales);

// sum_s w_s (dice + CE) with targets downsampled to each scale's extent.
template <typename T>
Var<T> combined_ds_loss(const std::vector<Var<T>>& logits, const LabelBatch& labels,
                        const std::vector<double>& weights);

}  // namespace usema
