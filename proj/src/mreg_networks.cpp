#include "mitia/mreg/networks.hpp"

#include "mitia/nets.hpp"

namespace mitia::mreg {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

nn::LeakyReLU leaky() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); }

class ConvBlockImpl : public nn::Module {
 public:
  ConvBlockImpl(int64_t in, int64_t out, int64_t stride)
      : conv_(register_module("conv", nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)))),
        norm_(register_module("norm", nn::BatchNorm2d(out))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    return F::leaky_relu(norm_->forward(conv_->forward(x)), F::LeakyReLUFuncOptions().negative_slope(0.2));
  }

 private:
  nn::Conv2d conv_;
  nn::BatchNorm2d norm_;
};
TORCH_MODULE(ConvBlock);

}  // namespace

CoarseRegNetImpl::CoarseRegNetImpl(const CoarseRegNetSpec& spec) : spec_(spec) {
  std::array<int64_t, 5> f{};
  for (size_t i = 0; i < f.size(); ++i) f[i] = nets::scaled(spec.conv_filters[i], spec.width_mult);
  auto block = [](int64_t in, int64_t out, int64_t stride) { return ConvBlock(in, out, stride); };
  nn::Sequential features;
  features->push_back(block(2, f[0], 2));
  features->push_back(block(f[0], f[1], 1));
  features->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
  features->push_back(block(f[1], f[2], 1));
  features->push_back(block(f[2], f[3], 1));
  features->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
  features->push_back(block(f[3], f[4], 1));
  features_ = register_module("features", features);

  int64_t flat = 0;
  {
    torch::NoGradGuard no_grad;
    features_->eval();
    flat = features_->forward(torch::zeros({1, 2, spec.image_size, spec.image_size})).numel();
    features_->train();
  }
  const int64_t hidden = nets::scaled(spec.hidden, spec.width_mult);
  fc1_ = register_module("fc1", nn::Linear(flat, hidden));
  fc2_ = register_module("fc2", nn::Linear(hidden, spec.outputs));
  torch::NoGradGuard no_grad;
  fc2_->weight.zero_();
  fc2_->bias.zero_();
}

torch::Tensor CoarseRegNetImpl::forward(const torch::Tensor& pair) {
  auto h = features_->forward(pair).flatten(1);
  h = F::leaky_relu(fc1_->forward(h), F::LeakyReLUFuncOptions().negative_slope(0.2));
  return fc2_->forward(h);
}

FineRegNetImpl::FineRegNetImpl(const FineRegNetSpec& spec) : spec_(spec) {
  std::array<int64_t, 7> d{};
  std::array<int64_t, 7> u{};
  for (size_t i = 0; i < 7; ++i) {
    d[i] = nets::scaled(spec.down_filters[i], spec.width_mult);
    u[i] = nets::scaled(spec.up_filters[i], spec.width_mult);
  }
  auto conv = [](int64_t in, int64_t out, int64_t stride) {
    return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)), leaky());
  };
  nn::ModuleList down;
  down->push_back(conv(2, d[0], 1));
  for (size_t i = 1; i < 7; ++i) down->push_back(conv(d[i - 1], d[i], 2));
  nn::ModuleList up;
  int64_t in = d[6];
  for (size_t i = 0; i < 6; ++i) {
    up->push_back(conv(in, u[i], 1));
    in = u[i] + d[5 - i];
  }
  up->push_back(conv(in, u[6], 1));
  down_ = register_module("down", down);
  up_ = register_module("up", up);
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(u[6], 2, 3).padding(1)));
  torch::NoGradGuard no_grad;
  head_->weight.zero_();
  head_->bias.zero_();
}

torch::Tensor FineRegNetImpl::forward(const torch::Tensor& pair) {
  std::vector<torch::Tensor> skips;
  auto h = pair;
  for (const auto& layer : *down_) {
    h = layer->as<nn::Sequential>()->forward(h);
    skips.push_back(h);
  }
  for (size_t i = 0; i < 6; ++i) {
    h = up_[i]->as<nn::Sequential>()->forward(h);
    const auto& skip = skips[5 - i];
    h = F::interpolate(h, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{skip.size(2), skip.size(3)})
                              .mode(torch::kNearest));
    h = torch::cat({h, skip}, 1);
  }
  h = up_[6]->as<nn::Sequential>()->forward(h);
  return head_->forward(h);
}

}  // namespace mitia::mreg
