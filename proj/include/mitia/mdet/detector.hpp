#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mitia/image.hpp"
#include "mitia/nets.hpp"
#include "mitia/synth/mdet_sample.hpp"
#include "mitia/training.hpp"

namespace mitia::mdet {

inline constexpr double kDefaultThreshold = 0.1;

// Per-pixel misalignment error in [0, 1], float32 [H, W].
struct ErrorMap {
  torch::Tensor values;
};

// Weight applied to each pixel of the prior loss.
struct ConfidenceMatrix {
  torch::Tensor weights;
  double threshold_used = kDefaultThreshold;
};

// Residual generator with a 2-channel (a, b) input and an output squashed
// onto [0, 1].
struct DetectorNetSpec {
  int64_t base_width = 64;
  int num_blocks = 9;
  double width_mult = 1.0;
};

class DetectorNetImpl : public torch::nn::Module {
 public:
  explicit DetectorNetImpl(const DetectorNetSpec& spec);
  // a, b: [N, 1, H, W]. Returns [N, 1, H, W] in [0, 1].
  torch::Tensor forward(const torch::Tensor& a, const torch::Tensor& b);

  const DetectorNetSpec& spec() const { return spec_; }

 private:
  DetectorNetSpec spec_;
  nets::ResnetGenerator net_{nullptr};
};
TORCH_MODULE(DetectorNet);

// Evaluation-mode forward pass of a single pair.
ErrorMap detect(const ImageSlice& a, const ImageSlice& b, DetectorNet& net);

// Frozen, gradient-free detector as a PairMap.
PairMap as_pair_map(DetectorNet net);

// W(p) = 0 where error >= th, 1 - error elsewhere.
ConfidenceMatrix activate(const ErrorMap& error, double threshold = kDefaultThreshold);
torch::Tensor activate(const torch::Tensor& error, double threshold = kDefaultThreshold);

// Network input for a training sample: channels (x, y_dg), never swapped.
torch::Tensor detector_input(const synth::MDetSample& sample);

class DetectorTrainer {
 public:
  DetectorTrainer(DetectorNet net, const OptimizerConfig& optimizer);

  // One optimization step on L1(D(x, y_dg), label); returns the loss.
  double step(const synth::MDetSample& sample);
  DetectorNet net() const { return net_; }

 private:
  DetectorNet net_;
  torch::optim::Adam optimizer_;
};

struct DetectorTrainConfig {
  int epochs = 80;
  OptimizerConfig optimizer;
  DetectorNetSpec net;
  uint64_t seed = 0;
  synth::AffineRanges affine_ranges;
  // Elastic parameters quoted for 64 x 64; rescaled to the image size.
  synth::ElasticParams elastic;
  // Fraction of samples drawn without any deformation (label = 0).
  double aligned_fraction = 0.2;
  std::filesystem::path log_csv;
  std::filesystem::path checkpoint;
  bool verbose = false;
};

// Online training: every step draws a fresh deformation and remap of one
// source image. An epoch visits every source once.
DetectorNet train_detector(const std::vector<ImageSlice>& sources, const DetectorTrainConfig& config);

struct ErrorSummary {
  std::vector<double> per_pair;  // mean detector output per pair, fraction
  double mean = 0.0;
  double stddev = 0.0;

  std::string mean_percent() const;
  std::string stddev_percent() const;
};

// Percent with two decimals: 0.0278 -> "2.78".
std::string format_percent(double fraction);

ErrorSummary summarize(const std::vector<double>& values);

// Mean detector output per pair. When `warp` is given the source image is
// replaced by warp(x, y_tilde) first.
ErrorSummary mean_misalignment_error(const PairedDataset& dataset, const PairMap& detector,
                                     const PairMap& warp = nullptr);

DetectorNet load_detector(const std::filesystem::path& path, const DetectorNetSpec& spec);

}  // namespace mitia::mdet
