#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>

namespace mitia::mreg {

// Affine regressor: five 3x3 convs (32, 64, 64, 64, 64; the first with
// stride 2; 2x2 max-pool after the second and fourth; batch norm and leaky
// ReLU after each) then fully connected 32 -> 4.
struct CoarseRegNetSpec {
  int64_t image_size = 64;
  double width_mult = 1.0;
  std::array<int64_t, 5> conv_filters{32, 64, 64, 64, 64};
  int64_t hidden = 32;
  int64_t outputs = 4;
};

// U-shaped encoder-decoder emitting a 2-channel displacement field.
struct FineRegNetSpec {
  double width_mult = 1.0;
  std::array<int64_t, 7> down_filters{32, 64, 64, 64, 64, 64, 64};
  std::array<int64_t, 7> up_filters{64, 64, 64, 64, 64, 64, 32};
};

class CoarseRegNetImpl : public torch::nn::Module {
 public:
  explicit CoarseRegNetImpl(const CoarseRegNetSpec& spec);
  // pair: [N, 2, H, W] (x, y_tilde). Returns theta [N, 4].
  torch::Tensor forward(const torch::Tensor& pair);

  const CoarseRegNetSpec& spec() const { return spec_; }

 private:
  CoarseRegNetSpec spec_;
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(CoarseRegNet);

class FineRegNetImpl : public torch::nn::Module {
 public:
  explicit FineRegNetImpl(const FineRegNetSpec& spec);
  // pair: [N, 2, H, W] (x_c, y_tilde). Returns displacement [N, 2, H, W].
  torch::Tensor forward(const torch::Tensor& pair);

  const FineRegNetSpec& spec() const { return spec_; }

 private:
  FineRegNetSpec spec_;
  torch::nn::ModuleList down_{nullptr};
  torch::nn::ModuleList up_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(FineRegNet);

}  // namespace mitia::mreg
