#include <algorithm>
#include <cmath>

#include "mitia/errors.hpp"
#include "mitia/mreg/losses.hpp"

namespace mitia::mreg {
namespace {

constexpr double kLogEps = 1e-10;

// Per-pixel Parzen weights, [N, P, B], each row summing to one.
torch::Tensor parzen_weights(const torch::Tensor& values, int bins) {
  const double width = 2.0 / bins;
  const double sigma = width;
  auto centers = torch::arange(bins, values.options()) * width + (-1.0 + width / 2.0);
  auto diff = values.unsqueeze(-1) - centers;
  auto weights = torch::exp(-(diff * diff) / (2.0 * sigma * sigma));
  return weights / weights.sum(-1, true);
}

torch::Tensor batch_mutual_information(const torch::Tensor& joint) {
  auto pa = joint.sum(2, true);
  auto pb = joint.sum(1, true);
  auto ratio = torch::log(joint + kLogEps) - torch::log(pa * pb + kLogEps);
  return (joint * ratio).sum({1, 2});
}

void check_bins(int bins) {
  if (bins < 2) throw ValidationError("mutual information needs at least 2 bins");
}

}  // namespace

JointHistogram parzen_histogram(const torch::Tensor& a, const torch::Tensor& b, int bins) {
  check_bins(bins);
  if (a.numel() != b.numel()) throw ValidationError("histogram inputs differ in size");
  auto wa = parzen_weights(a.reshape({1, -1}), bins);
  auto wb = parzen_weights(b.reshape({1, -1}), bins);
  auto joint = torch::bmm(wa.transpose(1, 2), wb).squeeze(0) / static_cast<double>(a.numel());
  return {joint, joint.sum(1), joint.sum(0)};
}

JointHistogram hard_histogram(const torch::Tensor& a, const torch::Tensor& b, int bins) {
  check_bins(bins);
  if (a.numel() != b.numel()) throw ValidationError("histogram inputs differ in size");
  auto va = a.detach().to(torch::kFloat64).reshape({-1}).contiguous();
  auto vb = b.detach().to(torch::kFloat64).reshape({-1}).contiguous();
  auto joint = torch::zeros({bins, bins}, torch::kFloat64);
  auto acc = joint.accessor<double, 2>();
  const double width = 2.0 / bins;
  auto bin_of = [&](double v) {
    const int index = static_cast<int>(std::floor((v + 1.0) / width));
    return std::clamp(index, 0, bins - 1);
  };
  const double* pa = va.data_ptr<double>();
  const double* pb = vb.data_ptr<double>();
  const int64_t count = va.numel();
  for (int64_t i = 0; i < count; ++i) acc[bin_of(pa[i])][bin_of(pb[i])] += 1.0;
  joint /= static_cast<double>(count);
  return {joint, joint.sum(1), joint.sum(0)};
}

double mutual_information(const JointHistogram& histogram) {
  auto joint = histogram.joint.detach().to(torch::kFloat64).contiguous();
  auto ma = histogram.marginal_a.detach().to(torch::kFloat64).contiguous();
  auto mb = histogram.marginal_b.detach().to(torch::kFloat64).contiguous();
  auto j = joint.accessor<double, 2>();
  auto pa = ma.accessor<double, 1>();
  auto pb = mb.accessor<double, 1>();
  double mi = 0.0;
  for (int64_t r = 0; r < joint.size(0); ++r) {
    for (int64_t c = 0; c < joint.size(1); ++c) {
      if (j[r][c] > 0.0) mi += j[r][c] * std::log(j[r][c] / (pa[r] * pb[c]));
    }
  }
  return mi;
}

torch::Tensor mutual_information_loss(const torch::Tensor& a, const torch::Tensor& b, int bins) {
  check_bins(bins);
  if (a.sizes() != b.sizes() || a.dim() < 2) throw ValidationError("mutual information inputs must match");
  const int64_t n = a.size(0);
  auto wa = parzen_weights(a.reshape({n, -1}), bins);
  auto wb = parzen_weights(b.reshape({n, -1}), bins);
  auto joint = torch::bmm(wa.transpose(1, 2), wb) / static_cast<double>(wa.size(1));
  return -batch_mutual_information(joint).mean();
}

double mutual_information_loss_hard(const torch::Tensor& a, const torch::Tensor& b, int bins) {
  return -mutual_information(hard_histogram(a, b, bins));
}

torch::Tensor smoothness_loss(const torch::Tensor& field) {
  auto f = field.dim() == 3 ? field.unsqueeze(0) : field;
  if (f.dim() != 4) throw ValidationError("smoothness_loss expects [N, 2, H, W]");
  const int64_t h = f.size(2);
  const int64_t w = f.size(3);
  auto total = torch::zeros({}, f.options());
  if (h > 1) {
    auto d_rows = f.narrow(2, 1, h - 1) - f.narrow(2, 0, h - 1);
    total = total + (d_rows * d_rows).mean();
  }
  if (w > 1) {
    auto d_cols = f.narrow(3, 1, w - 1) - f.narrow(3, 0, w - 1);
    total = total + (d_cols * d_cols).mean();
  }
  return total;
}

}  // namespace mitia::mreg
