#include "mitia/mdet/detector.hpp"

#include <cmath>
#include <iostream>
#include <numeric>

#include <fmt/format.h>

#include "mitia/errors.hpp"

namespace mitia::mdet {

DetectorNetImpl::DetectorNetImpl(const DetectorNetSpec& spec) : spec_(spec) {
  nets::ResnetGeneratorOptions options;
  options.in_channels = 2;
  options.out_channels = 1;
  options.base_width = spec.base_width;
  options.num_blocks = spec.num_blocks;
  options.width_mult = spec.width_mult;
  options.squash = nets::OutputSquash::kUnitTanh;
  net_ = register_module("net", nets::ResnetGenerator(options));
}

torch::Tensor DetectorNetImpl::forward(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "detector input");
  return net_->forward(torch::cat({a, b}, 1));
}

ErrorMap detect(const ImageSlice& a, const ImageSlice& b, DetectorNet& net) {
  require_same_shape(a.pixels, b.pixels, "detect");
  torch::NoGradGuard no_grad;
  const bool was_training = net->is_training();
  net->eval();
  auto out = net->forward(a.batched(), b.batched())[0][0].contiguous();
  if (was_training) net->train();
  return {out};
}

PairMap as_pair_map(DetectorNet net) {
  net->eval();
  nets::freeze(*net);
  return [net](const torch::Tensor& a, const torch::Tensor& b) mutable { return net->forward(a, b); };
}

torch::Tensor activate(const torch::Tensor& error, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("activation threshold must lie in (0, 1)");
  auto weights = 1.0 - error;
  return torch::where(error >= threshold, torch::zeros_like(weights), weights);
}

ConfidenceMatrix activate(const ErrorMap& error, double threshold) {
  return {activate(error.values, threshold), threshold};
}

torch::Tensor detector_input(const synth::MDetSample& sample) {
  return torch::cat({sample.x.batched(), sample.y_dg.batched()}, 1);
}

DetectorTrainer::DetectorTrainer(DetectorNet net, const OptimizerConfig& optimizer)
    : net_(std::move(net)), optimizer_(make_adam(net_->parameters(), optimizer)) {}

double DetectorTrainer::step(const synth::MDetSample& sample) {
  net_->train();
  optimizer_.zero_grad();
  auto input = detector_input(sample);
  auto pred = net_->forward(input.narrow(1, 0, 1), input.narrow(1, 1, 1));
  auto loss = (pred - sample.label.unsqueeze(0).unsqueeze(0)).abs().mean();
  require_finite(loss, "train-mdet");
  loss.backward();
  optimizer_.step();
  return loss.item<double>();
}

DetectorNet train_detector(const std::vector<ImageSlice>& sources, const DetectorTrainConfig& config) {
  if (sources.empty()) throw ValidationError("train_detector: no source images");
  torch::manual_seed(derive_seed(config.seed, {0xde7}));
  DetectorNet net(config.net);
  DetectorTrainer trainer(net, config.optimizer);

  const int size = static_cast<int>(sources.front().height());
  auto elastic = config.elastic;
  const double factor = size / 64.0;
  elastic.max_displacement *= factor;
  elastic.smoothing_sigma *= factor;
  synth::MDetSampler sampler(config.seed, config.affine_ranges, elastic, config.aligned_fraction);

  CsvLog log(config.log_csv, {"stage", "epoch", "loss"});
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    for (size_t index : epoch_order(sources.size(), config.seed, epoch)) {
      total += trainer.step(sampler.next(sources[index]));
    }
    const double mean = total / static_cast<double>(sources.size());
    log.row({"mdet", std::to_string(epoch), format_number(mean)});
    if (config.verbose) std::cerr << fmt::format("[mdet] epoch {} loss {:.6f}\n", epoch, mean);
  }
  net->eval();
  if (!config.checkpoint.empty()) nets::save_module(net, config.checkpoint);
  return net;
}

std::string format_percent(double fraction) { return fmt::format("{:.2f}", fraction * 100.0); }

std::string ErrorSummary::mean_percent() const { return format_percent(mean); }
std::string ErrorSummary::stddev_percent() const { return format_percent(stddev); }

ErrorSummary summarize(const std::vector<double>& values) {
  ErrorSummary summary;
  summary.per_pair = values;
  if (values.empty()) return summary;
  const double n = static_cast<double>(values.size());
  summary.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double squares = 0.0;
  for (double v : values) squares += (v - summary.mean) * (v - summary.mean);
  summary.stddev = std::sqrt(squares / n);
  return summary;
}

ErrorSummary mean_misalignment_error(const PairedDataset& dataset, const PairMap& detector, const PairMap& warp) {
  torch::NoGradGuard no_grad;
  std::vector<double> values;
  values.reserve(dataset.size());
  for (const auto& pair : dataset.pairs) {
    auto x = pair.x.batched();
    auto y = pair.y_tilde.batched();
    if (warp) x = warp(x, y);
    values.push_back(detector(x, y).mean().item<double>());
  }
  return summarize(values);
}

DetectorNet load_detector(const std::filesystem::path& path, const DetectorNetSpec& spec) {
  if (!std::filesystem::exists(path)) throw ConfigError("detector checkpoint not found: " + path.string());
  DetectorNet net(spec);
  nets::load_module(net, path);
  net->eval();
  return net;
}

}  // namespace mitia::mdet
