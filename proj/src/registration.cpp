#include "mitia/mreg/registration.hpp"

#include <iostream>

#include <fmt/format.h>

#include "mitia/errors.hpp"
#include "mitia/mreg/losses.hpp"
#include "mitia/nets.hpp"
#include "mitia/random.hpp"

namespace mitia::mreg {

torch::Tensor stack_pair(const torch::Tensor& x, const torch::Tensor& y_tilde) {
  require_same_shape(x, y_tilde, "registration input");
  return torch::cat({x, y_tilde}, 1);
}

AffineTheta coarse_register(const ImageSlice& x, const ImageSlice& y_tilde, CoarseRegNet& net) {
  torch::NoGradGuard no_grad;
  return theta_from_tensor(net->forward(stack_pair(x.batched(), y_tilde.batched()))[0]);
}

DeformationField fine_register(const ImageSlice& x_c, const ImageSlice& y_tilde, FineRegNet& net) {
  torch::NoGradGuard no_grad;
  return DeformationField(net->forward(stack_pair(x_c.batched(), y_tilde.batched()))[0].contiguous());
}

torch::Tensor MRegModel::coarse_field(const torch::Tensor& x, const torch::Tensor& y_tilde) {
  if (!coarse) return torch::zeros({x.size(0), 2, x.size(2), x.size(3)}, x.options());
  return theta_to_field(coarse->forward(stack_pair(x, y_tilde)), x.size(2), x.size(3));
}

torch::Tensor MRegModel::full_field(const torch::Tensor& x, const torch::Tensor& y_tilde) {
  auto phi_c = coarse_field(x, y_tilde);
  if (!fine) return phi_c;
  auto x_c = coarse ? resample(x, phi_c) : x;
  return phi_c + fine->forward(stack_pair(x_c, y_tilde));
}

torch::Tensor MRegModel::warp(const torch::Tensor& x, const torch::Tensor& y_tilde) {
  return resample(x, full_field(x, y_tilde));
}

void MRegModel::eval() {
  if (coarse) coarse->eval();
  if (fine) fine->eval();
}

void MRegModel::save(const std::filesystem::path& directory) const {
  if (coarse) nets::save_module(coarse, directory / "coarse.pt");
  if (fine) nets::save_module(fine, directory / "fine.pt");
}

DeformationField full_field(const ImageSlice& x, const ImageSlice& y_tilde, MRegModel& model) {
  torch::NoGradGuard no_grad;
  return DeformationField(model.full_field(x.batched(), y_tilde.batched())[0].contiguous());
}

PairMap as_pair_map(MRegModel model) {
  model.eval();
  if (model.coarse) nets::freeze(*model.coarse);
  if (model.fine) nets::freeze(*model.fine);
  return [model](const torch::Tensor& x, const torch::Tensor& y) mutable { return model.warp(x, y); };
}

namespace {

void require_nonempty(const PairedDataset& dataset, std::string_view stage) {
  if (dataset.empty()) throw ValidationError(fmt::format("{}: empty dataset", stage));
}

double mean_detector_error(const PairedDataset& dataset, const PairMap& detector, MRegModel& model) {
  torch::NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& pair : dataset.pairs) {
    auto y = pair.y_tilde.batched();
    total += detector(model.warp(pair.x.batched(), y), y).mean().item<double>();
  }
  return total / static_cast<double>(dataset.size());
}

}  // namespace

CoarseRegNet train_coarse(const PairedDataset& dataset, const RegTrainConfig& config, const PairMap& detector) {
  require_nonempty(dataset, "train-mreg coarse");
  torch::manual_seed(derive_seed(config.seed, {0xc0a}));
  CoarseRegNetSpec spec;
  spec.image_size = dataset.pairs.front().x.height();
  spec.width_mult = config.width_mult;
  CoarseRegNet net(spec);
  auto optimizer = make_adam(net->parameters(), config.optimizer);
  CsvLog log(config.log_csv, {"stage", "epoch", "loss", "mi_loss", "detector_error"});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    net->train();
    double total = 0.0;
    for (size_t index : epoch_order(dataset.size(), config.seed, epoch)) {
      const auto& pair = dataset.pairs[index];
      auto x = pair.x.batched();
      auto y = pair.y_tilde.batched();
      optimizer.zero_grad();
      auto field = theta_to_field(net->forward(stack_pair(x, y)), x.size(2), x.size(3));
      auto loss = mutual_information_loss(resample(x, field), y, config.bins);
      require_finite(loss, "train-mreg coarse");
      loss.backward();
      optimizer.step();
      total += loss.item<double>();
    }
    const double mean = total / static_cast<double>(dataset.size());
    std::string detected = "";
    if (detector) {
      net->eval();
      MRegModel model{net, nullptr};
      detected = format_number(mean_detector_error(dataset, detector, model));
    }
    log.row({"coarse", std::to_string(epoch), format_number(mean), format_number(mean), detected});
    if (config.verbose) std::cerr << fmt::format("[mreg coarse] epoch {} mi_loss {:.6f} {}\n", epoch, mean, detected);
  }
  net->eval();
  if (!config.checkpoint.empty()) nets::save_module(net, config.checkpoint);
  return net;
}

FineRegNet train_fine(const PairedDataset& dataset, CoarseRegNet coarse, const PairMap& detector,
                      const RegTrainConfig& config) {
  require_nonempty(dataset, "train-mreg fine");
  if (!detector) throw ConfigError("train-mreg fine: a detector is required");
  torch::manual_seed(derive_seed(config.seed, {0xf1e}));
  if (coarse) {
    coarse->eval();
    nets::freeze(*coarse);
  }
  FineRegNetSpec spec;
  spec.width_mult = config.width_mult;
  FineRegNet net(spec);
  auto optimizer = make_adam(net->parameters(), config.optimizer);
  CsvLog log(config.log_csv, {"stage", "epoch", "loss", "mi_loss", "detector_error"});

  // The coarse stage is frozen, so its warp is computed once.
  std::vector<torch::Tensor> coarse_warped;
  {
    torch::NoGradGuard no_grad;
    MRegModel model{coarse, nullptr};
    for (const auto& pair : dataset.pairs) {
      auto x = pair.x.batched();
      coarse_warped.push_back(coarse ? model.warp(x, pair.y_tilde.batched()) : x);
    }
  }

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    net->train();
    double total = 0.0;
    double total_error = 0.0;
    double total_mi = 0.0;
    for (size_t index : epoch_order(dataset.size(), config.seed, epoch)) {
      const auto& x_c = coarse_warped[index];
      auto y = dataset.pairs[index].y_tilde.batched();
      optimizer.zero_grad();
      auto phi_f = net->forward(stack_pair(x_c, y));
      auto x_f = resample(x_c, phi_f);
      auto error = detector(x_f, y).abs().mean();
      auto loss = error + config.lambda_smooth * smoothness_loss(phi_f);
      require_finite(loss, "train-mreg fine");
      loss.backward();
      optimizer.step();
      total += loss.item<double>();
      total_error += error.item<double>();
      {
        torch::NoGradGuard no_grad;
        total_mi += mutual_information_loss(x_f, y, config.bins).item<double>();
      }
    }
    const double n = static_cast<double>(dataset.size());
    log.row({"fine", std::to_string(epoch), format_number(total / n), format_number(total_mi / n),
             format_number(total_error / n)});
    if (config.verbose) {
      std::cerr << fmt::format("[mreg fine] epoch {} loss {:.6f} detector {:.6f}\n", epoch, total / n,
                               total_error / n);
    }
  }
  net->eval();
  if (!config.checkpoint.empty()) nets::save_module(net, config.checkpoint);
  return net;
}

MRegModel load_mreg(const std::filesystem::path& directory, int64_t image_size, double width_mult) {
  MRegModel model;
  const auto coarse_path = directory / "coarse.pt";
  const auto fine_path = directory / "fine.pt";
  if (!std::filesystem::exists(coarse_path) && !std::filesystem::exists(fine_path)) {
    throw ConfigError("no registration checkpoint in " + directory.string());
  }
  if (std::filesystem::exists(coarse_path)) {
    CoarseRegNetSpec spec;
    spec.image_size = image_size;
    spec.width_mult = width_mult;
    model.coarse = CoarseRegNet(spec);
    nets::load_module(model.coarse, coarse_path);
  }
  if (std::filesystem::exists(fine_path)) {
    FineRegNetSpec spec;
    spec.width_mult = width_mult;
    model.fine = FineRegNet(spec);
    nets::load_module(model.fine, fine_path);
  }
  model.eval();
  return model;
}

}  // namespace mitia::mreg
