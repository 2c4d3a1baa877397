#pragma once

#include <torch/torch.h>

#include "mitia/image.hpp"

namespace mitia::mreg {

// Dense displacement in pixels, float32 [2, H, W]; channel 0 is the row
// (dy) component, channel 1 the column (dx) component. Resampling through a
// field reads the source at p + displacement(p).
struct DeformationField {
  torch::Tensor displacement;

  DeformationField() = default;
  explicit DeformationField(torch::Tensor displacement);

  static DeformationField zeros(int64_t height, int64_t width);

  int64_t height() const { return displacement.size(1); }
  int64_t width() const { return displacement.size(2); }

  // Largest |dy| or |dx| over the field.
  double max_abs() const;
  DeformationField operator+(const DeformationField& other) const;
};

// Differentiable bilinear resampling. images: [N, C, H, W]; field:
// [N, 2, H, W]. out(p) = bilinear(images, p + field(p)); taps that fall
// outside the image read `fill`. Gradients flow to both images and field.
torch::Tensor resample(const torch::Tensor& images, const torch::Tensor& field,
                       double fill = kBackground);

ImageSlice resample(const ImageSlice& image, const DeformationField& field, double fill = kBackground);

// Nearest-neighbour resampling of an integer label map [H, W]; outside
// samples read `fill_label`.
torch::Tensor resample_labels(const torch::Tensor& labels, const torch::Tensor& field, int fill_label = -1);

// Rotation (radians), log isotropic scale, and translation as a fraction of
// the image extent.
struct AffineTheta {
  double rotation = 0.0;
  double log_scale = 0.0;
  double translate_x = 0.0;
  double translate_y = 0.0;

  static AffineTheta identity() { return {}; }
  double scale() const;
  bool is_finite() const;
};

// Center-anchored affine sampling map q = c + s R (p - c) + t, with
// t = (translate_y * H, translate_x * W) pixels, expressed as the
// displacement q - p.
DeformationField theta_to_field(const AffineTheta& theta, int64_t height, int64_t width);

// Batched, differentiable version. theta: [N, 4] ordered (rotation,
// log_scale, translate_x, translate_y). Returns [N, 2, H, W].
torch::Tensor theta_to_field(const torch::Tensor& theta, int64_t height, int64_t width);

AffineTheta theta_from_tensor(const torch::Tensor& row);

}  // namespace mitia::mreg
