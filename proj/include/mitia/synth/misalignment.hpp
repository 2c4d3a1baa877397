#pragma once

#include <cstdint>

#include "mitia/image.hpp"
#include "mitia/mreg/warp.hpp"
#include "mitia/random.hpp"

namespace mitia::synth {

struct AffineParams {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double translate_x = 0.0;  // fraction of width
  double translate_y = 0.0;  // fraction of height

  static AffineParams identity() { return {}; }
};

// Symmetric sampling ranges; defaults are +-3 deg, +-3 %, +-3 %.
struct AffineRanges {
  double max_rotation_deg = 3.0;
  double max_translate = 0.03;
  double max_scale_delta = 0.03;

  bool contains(const AffineParams& params) const;
};

AffineParams sample_affine(Rng& rng, const AffineRanges& ranges = {});

// Displacement realizing the forward map p -> c + s R (p - c) + t, i.e.
// sampling the source at the inverse map.
mreg::DeformationField affine_field(const AffineParams& params, int64_t height, int64_t width);

// Rotation, then isotropic scale, then translation about the image
// center. Bilinear, background fill.
ImageSlice random_affine(const ImageSlice& x, const AffineParams& params);

struct ElasticParams {
  int control_grid = 8;
  double max_displacement = 4.0;  // pixels
  double smoothing_sigma = 2.0;   // pixels

  // Defaults are quoted at 64 x 64; displacement and sigma scale with size.
  static ElasticParams for_size(int size);
  void validate() const;
};

// Control-point displacements uniform in [-m, m] per component, upsampled
// with the cubic B-spline basis and Gaussian smoothed. Both steps use
// nonnegative normalized weights, so |dy|, |dx| <= m everywhere.
mreg::DeformationField elastic_field(const ElasticParams& params, int64_t height, int64_t width, uint64_t seed);

struct ElasticResult {
  ImageSlice image;
  mreg::DeformationField field;
};

ElasticResult random_elastic(const ImageSlice& x, const ElasticParams& params, uint64_t seed);

}  // namespace mitia::synth
