#pragma once

#include <torch/torch.h>

namespace mitia::mreg {

inline constexpr int kDefaultBins = 32;

// Joint intensity distribution of two images over B x B bins spanning
// [-1, 1]^2, with its marginals.
struct JointHistogram {
  torch::Tensor joint;       // [B, B], sums to 1
  torch::Tensor marginal_a;  // [B], row sums
  torch::Tensor marginal_b;  // [B], column sums

  int bins() const { return static_cast<int>(joint.size(0)); }
};

// Parzen-window histogram: each pixel spreads unit mass over bin centers
// with a Gaussian kernel whose sigma is one bin width. Differentiable in the
// intensities. a and b hold the same number of elements.
JointHistogram parzen_histogram(const torch::Tensor& a, const torch::Tensor& b, int bins = kDefaultBins);

// Hard-binned histogram with the same bin edges and no smoothing.
JointHistogram hard_histogram(const torch::Tensor& a, const torch::Tensor& b, int bins = kDefaultBins);

// sum_ij P(i,j) log(P(i,j) / (P_a(i) P_b(j))) over cells with P(i,j) > 0.
double mutual_information(const JointHistogram& histogram);

// Negative Parzen mutual information, averaged over the batch.
// a, b: [N, 1, H, W] (or any shape with a leading batch dimension).
torch::Tensor mutual_information_loss(const torch::Tensor& a, const torch::Tensor& b,
                                      int bins = kDefaultBins);

// Negative hard-binned mutual information of two single images.
double mutual_information_loss_hard(const torch::Tensor& a, const torch::Tensor& b,
                                    int bins = kDefaultBins);

// Diffusion regularizer: mean squared forward difference along rows plus
// the same along columns, each averaged over channels and valid positions.
// field: [N, 2, H, W] or [2, H, W].
torch::Tensor smoothness_loss(const torch::Tensor& field);

}  // namespace mitia::mreg
