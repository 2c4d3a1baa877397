#pragma once

#include <cstdint>

#include "mitia/image.hpp"
#include "mitia/random.hpp"
#include "mitia/synth/misalignment.hpp"
#include "mitia/synth/shuffle_remap.hpp"

namespace mitia::synth {

// Detector training example. y_dg is a pointwise remap of x_tilde, so it is
// aligned with x_tilde and misaligned with x; label = |x - x_tilde| / 2.
struct MDetSample {
  ImageSlice x;
  ImageSlice x_tilde;
  ImageSlice y_dg;
  torch::Tensor label;
};

MDetSample make_mdet_sample(const ImageSlice& x, const AffineParams& affine, const ElasticParams& elastic,
                            const ShuffleRemapSpec& remap, uint64_t seed);

// Draws fresh corruption parameters for every sample. A fraction of the
// samples skips the deformation entirely (x_tilde = x, label = 0).
class MDetSampler {
 public:
  MDetSampler(uint64_t seed, AffineRanges affine_ranges, ElasticParams elastic, double aligned_fraction = 0.0);

  MDetSample next(const ImageSlice& x);

 private:
  Rng rng_;
  AffineRanges affine_ranges_;
  ElasticParams elastic_;
  double aligned_fraction_;
};

}  // namespace mitia::synth
