#include "mitia/nets.hpp"

#include <algorithm>
#include <cmath>

namespace mitia::nets {
namespace nn = torch::nn;

int64_t scaled(int64_t channels, double width_mult) {
  return std::max<int64_t>(1, std::llround(static_cast<double>(channels) * width_mult));
}

namespace {

nn::InstanceNorm2d instance_norm(int64_t channels) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(false).track_running_stats(false));
}

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int64_t channels) {
  body_ = register_module(
      "body", nn::Sequential(nn::ReflectionPad2d(1), nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)),
                             instance_norm(channels), nn::ReLU(), nn::ReflectionPad2d(1),
                             nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)), instance_norm(channels)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body_->forward(x); }

ResnetGeneratorImpl::ResnetGeneratorImpl(const ResnetGeneratorOptions& options) : options_(options) {
  const int64_t c = scaled(options.base_width, options.width_mult);
  nn::Sequential body;
  body->push_back(nn::ReflectionPad2d(3));
  body->push_back(nn::Conv2d(nn::Conv2dOptions(options.in_channels, c, 7)));
  body->push_back(instance_norm(c));
  body->push_back(nn::ReLU());
  int64_t width = c;
  for (int i = 0; i < 2; ++i) {
    body->push_back(nn::Conv2d(nn::Conv2dOptions(width, width * 2, 3).stride(2).padding(1)));
    body->push_back(instance_norm(width * 2));
    body->push_back(nn::ReLU());
    width *= 2;
  }
  for (int i = 0; i < options.num_blocks; ++i) body->push_back(ResidualBlock(width));
  for (int i = 0; i < 2; ++i) {
    body->push_back(
        nn::ConvTranspose2d(nn::ConvTranspose2dOptions(width, width / 2, 3).stride(2).padding(1).output_padding(1)));
    body->push_back(instance_norm(width / 2));
    body->push_back(nn::ReLU());
    width /= 2;
  }
  body->push_back(nn::ReflectionPad2d(3));
  body->push_back(nn::Conv2d(nn::Conv2dOptions(width, options.out_channels, 7)));
  body_ = register_module("body", body);
  init_normal(*this);
}

torch::Tensor ResnetGeneratorImpl::forward(const torch::Tensor& x) {
  auto out = body_->forward(x).tanh();
  if (options_.squash == OutputSquash::kUnitTanh) out = (out + 1.0) * 0.5;
  return out;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const PatchDiscriminatorOptions& options) {
  const int64_t d = scaled(options.base_width, options.width_mult);
  auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); };
  body_ = register_module(
      "body",
      nn::Sequential(nn::Conv2d(nn::Conv2dOptions(options.in_channels, d, 4).stride(2).padding(1)), lrelu(),
                     nn::Conv2d(nn::Conv2dOptions(d, d * 2, 4).stride(2).padding(1)), instance_norm(d * 2), lrelu(),
                     nn::Conv2d(nn::Conv2dOptions(d * 2, d * 4, 4).stride(2).padding(1)), instance_norm(d * 4), lrelu(),
                     nn::Conv2d(nn::Conv2dOptions(d * 4, d * 8, 4).stride(1).padding(1)), instance_norm(d * 8), lrelu(),
                     nn::Conv2d(nn::Conv2dOptions(d * 8, 1, 4).stride(1).padding(1))));
  init_normal(*this);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) { return body_->forward(x); }

void init_normal(nn::Module& module, double stddev) {
  torch::NoGradGuard no_grad;
  for (auto& child : module.modules(/*include_self=*/false)) {
    auto* conv = child->as<nn::Conv2d>();
    auto* deconv = child->as<nn::ConvTranspose2d>();
    if (conv != nullptr) {
      conv->weight.normal_(0.0, stddev);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (deconv != nullptr) {
      deconv->weight.normal_(0.0, stddev);
      if (deconv->bias.defined()) deconv->bias.zero_();
    }
  }
}

torch::Tensor snapshot(const nn::Module& module) {
  std::vector<torch::Tensor> parts;
  for (const auto& p : module.parameters()) parts.push_back(p.detach().reshape({-1}).to(torch::kFloat64));
  for (const auto& b : module.buffers()) parts.push_back(b.detach().reshape({-1}).to(torch::kFloat64));
  if (parts.empty()) return torch::zeros({0}, torch::kFloat64);
  return torch::cat(parts).clone();
}

void freeze(nn::Module& module) {
  for (auto& p : module.parameters()) p.set_requires_grad(false);
  module.eval();
}

}  // namespace mitia::nets
