#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>

namespace mitia::nets {

// Channel count after applying a uniform width multiplier (at least 1).
int64_t scaled(int64_t channels, double width_mult);

enum class OutputSquash {
  kTanh,      // onto [-1, 1]
  kUnitTanh,  // (tanh + 1) / 2, onto [0, 1]
};

struct ResnetGeneratorOptions {
  int64_t in_channels = 1;
  int64_t out_channels = 1;
  int64_t base_width = 64;
  int num_blocks = 9;
  double width_mult = 1.0;
  OutputSquash squash = OutputSquash::kTanh;
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

// 7x7 stem, two stride-2 convolutions, residual blocks, two transposed
// convolutions and a 7x7 head; instance normalization and ReLU throughout.
class ResnetGeneratorImpl : public torch::nn::Module {
 public:
  explicit ResnetGeneratorImpl(const ResnetGeneratorOptions& options);
  torch::Tensor forward(const torch::Tensor& x);

  const ResnetGeneratorOptions& options() const { return options_; }

 private:
  ResnetGeneratorOptions options_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResnetGenerator);

struct PatchDiscriminatorOptions {
  int64_t in_channels = 1;
  int64_t base_width = 64;
  double width_mult = 1.0;
};

// 70x70 PatchGAN: C64-C128-C256-C512 with 4x4 kernels, then a 1-channel
// logit map. Needs inputs of at least 32 x 32.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(const PatchDiscriminatorOptions& options);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

// N(0, 0.02) weights and zero biases for every convolution.
void init_normal(torch::nn::Module& module, double stddev = 0.02);

// Flattened copy of all parameters and buffers, for equality checks.
torch::Tensor snapshot(const torch::nn::Module& module);

void freeze(torch::nn::Module& module);

template <typename ModuleHolder>
void save_module(const ModuleHolder& module, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  torch::save(module, path.string());
}

template <typename ModuleHolder>
void load_module(ModuleHolder& module, const std::filesystem::path& path) {
  torch::load(module, path.string());
}

}  // namespace mitia::nets
