#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>

#include "mitia/image.hpp"
#include "mitia/mreg/networks.hpp"
#include "mitia/mreg/warp.hpp"
#include "mitia/training.hpp"

namespace mitia::mreg {

// Stacks x and y_tilde ([N, 1, H, W] each) into [N, 2, H, W].
torch::Tensor stack_pair(const torch::Tensor& x, const torch::Tensor& y_tilde);

AffineTheta coarse_register(const ImageSlice& x, const ImageSlice& y_tilde, CoarseRegNet& net);
DeformationField fine_register(const ImageSlice& x_c, const ImageSlice& y_tilde, FineRegNet& net);

// Coarse-to-fine registration. The coarse network may be absent, in which
// case the fine network sees the raw source (fine-only registration).
struct MRegModel {
  CoarseRegNet coarse{nullptr};
  FineRegNet fine{nullptr};

  // Batched fields, all [N, 2, H, W].
  torch::Tensor coarse_field(const torch::Tensor& x, const torch::Tensor& y_tilde);
  // phi = phi_c + phi_f (plain addition).
  torch::Tensor full_field(const torch::Tensor& x, const torch::Tensor& y_tilde);
  // x resampled through the full field.
  torch::Tensor warp(const torch::Tensor& x, const torch::Tensor& y_tilde);

  void eval();
  void save(const std::filesystem::path& directory) const;
};

DeformationField full_field(const ImageSlice& x, const ImageSlice& y_tilde, MRegModel& model);

// Gradient-free warp(x, y) -> x_f as a PairMap; evaluation mode.
PairMap as_pair_map(MRegModel model);

struct RegTrainConfig {
  int epochs = 80;
  OptimizerConfig optimizer;
  double width_mult = 1.0;
  double lambda_smooth = 1.0;
  int bins = 32;
  uint64_t seed = 0;
  std::filesystem::path log_csv;
  std::filesystem::path checkpoint;
  bool verbose = false;
};

// Minimizes the Parzen MI loss between x warped by theta_to_field(R_C(x, y))
// and y. If `detector` is given its mean output after warping is logged per
// epoch.
CoarseRegNet train_coarse(const PairedDataset& dataset, const RegTrainConfig& config,
                          const PairMap& detector = nullptr);

// Minimizes mean D(x_c o phi_f, y) + lambda_smooth * smoothness(phi_f) with
// the coarse network (optional) and the detector frozen. `detector` must be
// differentiable in its first argument.
FineRegNet train_fine(const PairedDataset& dataset, CoarseRegNet coarse, const PairMap& detector,
                      const RegTrainConfig& config);

MRegModel load_mreg(const std::filesystem::path& directory, int64_t image_size, double width_mult);

}  // namespace mitia::mreg
