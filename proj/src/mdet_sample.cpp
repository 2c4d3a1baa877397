#include "mitia/synth/mdet_sample.hpp"

#include "mitia/errors.hpp"

namespace mitia::synth {

MDetSample make_mdet_sample(const ImageSlice& x, const AffineParams& affine, const ElasticParams& elastic,
                            const ShuffleRemapSpec& remap, uint64_t seed) {
  auto moved = random_affine(x, affine);
  auto x_tilde = random_elastic(moved, elastic, seed).image;
  auto y_dg = shuffle_remap(x_tilde, remap);
  auto label = (x.pixels - x_tilde.pixels).abs() / 2.0;
  return {x, x_tilde, y_dg, label};
}

MDetSampler::MDetSampler(uint64_t seed, AffineRanges affine_ranges, ElasticParams elastic, double aligned_fraction)
    : rng_(derive_seed(seed, {0x5a3})),
      affine_ranges_(affine_ranges),
      elastic_(elastic),
      aligned_fraction_(aligned_fraction) {
  elastic_.validate();
  if (!(aligned_fraction >= 0.0 && aligned_fraction <= 1.0)) {
    throw ValidationError("aligned_fraction must lie in [0, 1]");
  }
}

MDetSample MDetSampler::next(const ImageSlice& x) {
  const bool aligned = bernoulli(rng_, aligned_fraction_);
  auto affine = sample_affine(rng_, affine_ranges_);
  const auto remap = random_shuffle_spec(rng_);
  const uint64_t elastic_seed = rng_();
  auto elastic = elastic_;
  if (aligned) {
    affine = AffineParams::identity();
    elastic.max_displacement = 0.0;
  }
  return make_mdet_sample(x, affine, elastic, remap, elastic_seed);
}

}  // namespace mitia::synth
