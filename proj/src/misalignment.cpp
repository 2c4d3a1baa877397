#include "mitia/synth/misalignment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "mitia/errors.hpp"

namespace mitia::synth {
namespace {

double deg_to_rad(double degrees) { return degrees * std::numbers::pi / 180.0; }

// Cubic B-spline basis weights for the four taps around a fractional
// position; nonnegative and summing to one.
std::array<double, 4> bspline_weights(double f) {
  const double f2 = f * f;
  const double f3 = f2 * f;
  return {(1.0 - f) * (1.0 - f) * (1.0 - f) / 6.0, (3.0 * f3 - 6.0 * f2 + 4.0) / 6.0,
          (-3.0 * f3 + 3.0 * f2 + 3.0 * f + 1.0) / 6.0, f3 / 6.0};
}

// Resamples `count` control values onto `length` output samples spanning
// the same extent.
std::vector<double> bspline_upsample(const std::vector<double>& control, int length) {
  const int count = static_cast<int>(control.size());
  std::vector<double> out(length, 0.0);
  for (int i = 0; i < length; ++i) {
    const double t = length > 1 ? static_cast<double>(i) * (count - 1) / (length - 1) : 0.0;
    const int base = static_cast<int>(std::floor(t));
    const auto w = bspline_weights(t - base);
    double value = 0.0;
    for (int k = 0; k < 4; ++k) {
      const int index = std::clamp(base - 1 + k, 0, count - 1);
      value += w[k] * control[index];
    }
    out[i] = value;
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;
  return kernel;
}

// Separable Gaussian blur with replicated borders; every output is a convex
// combination of inputs.
void gaussian_smooth(std::vector<double>& data, int height, int width, double sigma) {
  if (sigma <= 0.0) return;
  const auto kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(data.size());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * data[r * width + std::clamp(c + k, 0, width - 1)];
      tmp[r * width + c] = acc;
    }
  }
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp[std::clamp(r + k, 0, height - 1) * width + c];
      data[r * width + c] = acc;
    }
  }
}

}  // namespace

bool AffineRanges::contains(const AffineParams& params) const {
  return std::abs(params.rotation_deg) <= max_rotation_deg && std::abs(params.translate_x) <= max_translate &&
         std::abs(params.translate_y) <= max_translate && std::abs(params.scale - 1.0) <= max_scale_delta;
}

AffineParams sample_affine(Rng& rng, const AffineRanges& ranges) {
  AffineParams params;
  params.rotation_deg = uniform(rng, -ranges.max_rotation_deg, ranges.max_rotation_deg);
  params.scale = 1.0 + uniform(rng, -ranges.max_scale_delta, ranges.max_scale_delta);
  params.translate_x = uniform(rng, -ranges.max_translate, ranges.max_translate);
  params.translate_y = uniform(rng, -ranges.max_translate, ranges.max_translate);
  return params;
}

mreg::DeformationField affine_field(const AffineParams& params, int64_t height, int64_t width) {
  if (!(params.scale > 0.0)) throw ValidationError("affine scale must be positive");
  const double theta = deg_to_rad(params.rotation_deg);
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  const double cy = (height - 1) / 2.0;
  const double cx = (width - 1) / 2.0;
  const double ty = params.translate_y * static_cast<double>(height);
  const double tx = params.translate_x * static_cast<double>(width);

  auto field = torch::empty({2, height, width}, torch::kFloat64);
  auto acc = field.accessor<double, 3>();
  for (int64_t r = 0; r < height; ++r) {
    for (int64_t c = 0; c < width; ++c) {
      // Inverse of p -> c + s R (p - c) + t.
      const double dy = static_cast<double>(r) - cy - ty;
      const double dx = static_cast<double>(c) - cx - tx;
      const double qx = cx + (ct * dx + st * dy) / params.scale;
      const double qy = cy + (-st * dx + ct * dy) / params.scale;
      acc[0][r][c] = qy - static_cast<double>(r);
      acc[1][r][c] = qx - static_cast<double>(c);
    }
  }
  return mreg::DeformationField(field.to(torch::kFloat32));
}

ImageSlice random_affine(const ImageSlice& x, const AffineParams& params) {
  return mreg::resample(x, affine_field(params, x.height(), x.width()));
}

ElasticParams ElasticParams::for_size(int size) {
  ElasticParams params;
  const double factor = size / 64.0;
  params.max_displacement *= factor;
  params.smoothing_sigma *= factor;
  return params;
}

void ElasticParams::validate() const {
  if (control_grid < 2) throw ValidationError("elastic control grid must be at least 2x2");
  if (!(max_displacement >= 0.0)) throw ValidationError("elastic max displacement must be nonnegative");
  if (!(smoothing_sigma >= 0.0)) throw ValidationError("elastic smoothing sigma must be nonnegative");
}

mreg::DeformationField elastic_field(const ElasticParams& params, int64_t height, int64_t width, uint64_t seed) {
  params.validate();
  const int grid = params.control_grid;
  if (params.max_displacement == 0.0) return mreg::DeformationField::zeros(height, width);

  Rng rng(seed);
  auto field = torch::empty({2, height, width}, torch::kFloat64);
  auto acc = field.accessor<double, 3>();
  for (int channel = 0; channel < 2; ++channel) {
    std::vector<double> control(grid * grid);
    for (auto& value : control) value = uniform(rng, -params.max_displacement, params.max_displacement);

    // Rows of the control grid first, then columns.
    std::vector<double> wide(static_cast<size_t>(grid) * width);
    for (int g = 0; g < grid; ++g) {
      std::vector<double> row(control.begin() + g * grid, control.begin() + (g + 1) * grid);
      auto up = bspline_upsample(row, static_cast<int>(width));
      std::copy(up.begin(), up.end(), wide.begin() + static_cast<ptrdiff_t>(g) * width);
    }
    std::vector<double> dense(static_cast<size_t>(height) * width);
    for (int64_t c = 0; c < width; ++c) {
      std::vector<double> column(grid);
      for (int g = 0; g < grid; ++g) column[g] = wide[g * width + c];
      auto up = bspline_upsample(column, static_cast<int>(height));
      for (int64_t r = 0; r < height; ++r) dense[r * width + c] = up[r];
    }
    gaussian_smooth(dense, static_cast<int>(height), static_cast<int>(width), params.smoothing_sigma);
    for (int64_t r = 0; r < height; ++r) {
      for (int64_t c = 0; c < width; ++c) acc[channel][r][c] = dense[r * width + c];
    }
  }
  return mreg::DeformationField(field.to(torch::kFloat32));
}

ElasticResult random_elastic(const ImageSlice& x, const ElasticParams& params, uint64_t seed) {
  auto field = elastic_field(params, x.height(), x.width(), seed);
  return {mreg::resample(x, field), field};
}

}  // namespace mitia::synth
