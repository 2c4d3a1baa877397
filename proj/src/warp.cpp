#include "mitia/mreg/warp.hpp"

#include <cmath>

#include "mitia/errors.hpp"

namespace mitia::mreg {

DeformationField::DeformationField(torch::Tensor displacement_in) : displacement(std::move(displacement_in)) {
  if (!displacement.defined() || displacement.dim() != 3 || displacement.size(0) != 2) {
    throw ValidationError("DeformationField expects a [2, H, W] tensor");
  }
}

DeformationField DeformationField::zeros(int64_t height, int64_t width) {
  return DeformationField(torch::zeros({2, height, width}));
}

double DeformationField::max_abs() const { return displacement.abs().max().item<double>(); }

DeformationField DeformationField::operator+(const DeformationField& other) const {
  require_same_shape(displacement, other.displacement, "field addition");
  return DeformationField(displacement + other.displacement);
}

namespace {

// Pixel-center grids broadcastable to [N, H, W].
std::pair<torch::Tensor, torch::Tensor> pixel_grid(int64_t height, int64_t width, torch::TensorOptions options) {
  auto rows = torch::arange(height, options).view({1, height, 1});
  auto cols = torch::arange(width, options).view({1, 1, width});
  return {rows, cols};
}

}  // namespace

torch::Tensor resample(const torch::Tensor& images, const torch::Tensor& field, double fill) {
  if (images.dim() != 4 || field.dim() != 4 || field.size(1) != 2 || images.size(0) != field.size(0)) {
    throw ValidationError("resample expects images [N, C, H, W] and field [N, 2, H, W]");
  }
  require_same_shape(images, field, "resample image vs field");

  const int64_t n = images.size(0);
  const int64_t channels = images.size(1);
  const int64_t height = images.size(2);
  const int64_t width = images.size(3);
  const auto options = field.options();

  auto [rows, cols] = pixel_grid(height, width, options);
  auto qy = rows + field.select(1, 0);
  auto qx = cols + field.select(1, 1);
  auto y0 = qy.detach().floor();
  auto x0 = qx.detach().floor();
  auto wy = qy - y0;
  auto wx = qx - x0;

  auto flat = images.reshape({n, channels, height * width});
  auto result = torch::zeros_like(images);
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      auto yi = y0 + dy;
      auto xi = x0 + dx;
      auto valid = (yi >= 0).logical_and(yi < height).logical_and(xi >= 0).logical_and(xi < width);
      auto index = (yi.clamp(0, height - 1) * width + xi.clamp(0, width - 1)).to(torch::kLong);
      index = index.reshape({n, 1, height * width}).expand({n, channels, height * width});
      auto taps = flat.gather(2, index).reshape({n, channels, height, width});
      auto mask = valid.unsqueeze(1).expand_as(taps);
      taps = torch::where(mask, taps, torch::full_like(taps, fill));
      auto weight = (dy == 1 ? wy : 1 - wy) * (dx == 1 ? wx : 1 - wx);
      result = result + weight.unsqueeze(1).to(taps.scalar_type()) * taps;
    }
  }
  return result;
}

ImageSlice resample(const ImageSlice& image, const DeformationField& field, double fill) {
  require_same_shape(image.pixels, field.displacement, "resample image vs field");
  torch::NoGradGuard no_grad;
  auto out = resample(image.batched(), field.displacement.unsqueeze(0), fill).clamp(-1.0, 1.0);
  return ImageSlice(out.squeeze(0).squeeze(0), image.modality_tag, image.slice_index);
}

torch::Tensor resample_labels(const torch::Tensor& labels, const torch::Tensor& field, int fill_label) {
  require_same_shape(labels, field, "label resample");
  const int64_t height = labels.size(0);
  const int64_t width = labels.size(1);
  auto [rows, cols] = pixel_grid(height, width, torch::TensorOptions().dtype(torch::kFloat64));
  auto qy = (rows.squeeze(0) + field.select(0, 0).to(torch::kFloat64) + 0.5).floor();
  auto qx = (cols.squeeze(0) + field.select(0, 1).to(torch::kFloat64) + 0.5).floor();
  auto valid = (qy >= 0).logical_and(qy < height).logical_and(qx >= 0).logical_and(qx < width);
  auto index = (qy.clamp(0, height - 1) * width + qx.clamp(0, width - 1)).to(torch::kLong);
  auto flat = labels.reshape({-1}).to(torch::kInt32);
  auto taps = flat.index_select(0, index.reshape({-1})).reshape({height, width});
  return torch::where(valid, taps, torch::full_like(taps, fill_label));
}

double AffineTheta::scale() const { return std::exp(log_scale); }

bool AffineTheta::is_finite() const {
  return std::isfinite(rotation) && std::isfinite(log_scale) && std::isfinite(translate_x) &&
         std::isfinite(translate_y);
}

DeformationField theta_to_field(const AffineTheta& theta, int64_t height, int64_t width) {
  auto row = torch::tensor({theta.rotation, theta.log_scale, theta.translate_x, theta.translate_y},
                           torch::kFloat64)
                 .view({1, 4});
  return DeformationField(theta_to_field(row, height, width).squeeze(0).to(torch::kFloat32));
}

torch::Tensor theta_to_field(const torch::Tensor& theta, int64_t height, int64_t width) {
  if (theta.dim() != 2 || theta.size(1) != 4) throw ValidationError("theta must be [N, 4]");
  const auto options = theta.options();
  auto [rows, cols] = pixel_grid(height, width, options);
  const double cy = static_cast<double>(height - 1) / 2.0;
  const double cx = static_cast<double>(width - 1) / 2.0;
  auto dy = rows - cy;
  auto dx = cols - cx;

  auto column = [&](int i) { return theta.select(1, i).view({-1, 1, 1}); };
  auto rotation = column(0);
  auto scale = column(1).exp();
  auto tx = column(2) * static_cast<double>(width);
  auto ty = column(3) * static_cast<double>(height);
  auto cos_r = rotation.cos();
  auto sin_r = rotation.sin();

  auto qx = cx + scale * (cos_r * dx - sin_r * dy) + tx;
  auto qy = cy + scale * (sin_r * dx + cos_r * dy) + ty;
  return torch::stack({qy - rows, qx - cols}, 1);
}

AffineTheta theta_from_tensor(const torch::Tensor& row) {
  auto values = row.detach().to(torch::kFloat64).reshape({-1}).contiguous();
  if (values.numel() != 4) throw ValidationError("theta row must hold 4 values");
  const double* v = values.data_ptr<double>();
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace mitia::mreg
