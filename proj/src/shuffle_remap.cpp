#include "mitia/synth/shuffle_remap.hpp"

#include <algorithm>
#include <numeric>

#include "mitia/errors.hpp"

namespace mitia::synth {
namespace {

std::vector<double> segment_widths(const ShuffleRemapSpec& spec) {
  std::vector<double> widths(spec.k);
  double previous = -1.0;
  for (int j = 0; j < spec.k; ++j) {
    const double next = j + 1 < spec.k ? spec.boundaries[j] : 1.0;
    widths[j] = next - previous;
    previous = next;
  }
  return widths;
}

// Shift applied to every value of segment j. Both partial sums run over
// segment indices in increasing order, so an unmoved segment gets exactly 0.
std::vector<double> segment_offsets(const ShuffleRemapSpec& spec) {
  const auto widths = segment_widths(spec);
  std::vector<double> offsets(spec.k);
  for (int j = 0; j < spec.k; ++j) {
    double placed_before = 0.0;
    double originally_before = 0.0;
    for (int s = 0; s < spec.k; ++s) {
      if (spec.permutation[s] < spec.permutation[j]) placed_before += widths[s];
      if (s < j) originally_before += widths[s];
    }
    offsets[j] = placed_before - originally_before;
  }
  return offsets;
}

int segment_of(const ShuffleRemapSpec& spec, double value) {
  auto it = std::upper_bound(spec.boundaries.begin(), spec.boundaries.end(), value);
  return static_cast<int>(std::distance(spec.boundaries.begin(), it));
}

}  // namespace

ShuffleRemapSpec ShuffleRemapSpec::identity(int k) {
  ShuffleRemapSpec spec;
  spec.k = k;
  for (int j = 1; j < k; ++j) spec.boundaries.push_back(-1.0 + 2.0 * j / k);
  spec.permutation.resize(k);
  std::iota(spec.permutation.begin(), spec.permutation.end(), 0);
  spec.validate();
  return spec;
}

void ShuffleRemapSpec::validate() const {
  if (k < kMinSegments || k > kMaxSegments) throw ValidationError("shuffle remap k must lie in [2, 50]");
  if (static_cast<int>(boundaries.size()) != k - 1) throw ValidationError("shuffle remap needs k - 1 boundaries");
  double previous = -1.0;
  for (double b : boundaries) {
    if (!(b > previous) || !(b < 1.0)) {
      throw ValidationError("shuffle remap boundaries must be strictly increasing inside (-1, 1)");
    }
    previous = b;
  }
  if (static_cast<int>(permutation.size()) != k) throw ValidationError("shuffle remap permutation has wrong size");
  std::vector<int> sorted = permutation;
  std::sort(sorted.begin(), sorted.end());
  for (int j = 0; j < k; ++j) {
    if (sorted[j] != j) throw ValidationError("shuffle remap permutation is not a bijection");
  }
}

double ShuffleRemapSpec::apply(double value) const {
  const auto offsets = segment_offsets(*this);
  return std::clamp(value + offsets[segment_of(*this, value)], -1.0, 1.0);
}

ShuffleRemapSpec random_shuffle_spec(Rng& rng) {
  ShuffleRemapSpec spec;
  spec.k = uniform_int(rng, ShuffleRemapSpec::kMinSegments, ShuffleRemapSpec::kMaxSegments);
  const double min_width = 2.0 / (4.0 * spec.k);
  // Uniform cut points conditioned on every segment being at least
  // min_width wide: draw on the shortened axis and re-insert the gaps. This
  // is the distribution rejection resampling converges to.
  const double free_length = 2.0 - spec.k * min_width;
  std::vector<double> cuts(spec.k - 1);
  for (auto& c : cuts) c = uniform(rng, 0.0, free_length);
  std::sort(cuts.begin(), cuts.end());
  for (int j = 0; j < spec.k - 1; ++j) spec.boundaries.push_back(-1.0 + min_width * (j + 1) + cuts[j]);
  spec.permutation.resize(spec.k);
  std::iota(spec.permutation.begin(), spec.permutation.end(), 0);
  std::shuffle(spec.permutation.begin(), spec.permutation.end(), rng);
  spec.validate();
  return spec;
}

ImageSlice shuffle_remap(const ImageSlice& x, const ShuffleRemapSpec& spec) {
  spec.validate();
  const auto offsets = segment_offsets(spec);
  auto out = torch::empty_like(x.pixels);
  const float* src = x.pixels.data_ptr<float>();
  float* dst = out.data_ptr<float>();
  for (int64_t i = 0; i < x.pixels.numel(); ++i) {
    const double v = src[i];
    const double mapped = v + offsets[segment_of(spec, v)];
    dst[i] = static_cast<float>(std::clamp(mapped, -1.0, 1.0));
  }
  return ImageSlice(out, x.modality_tag, x.slice_index);
}

}  // namespace mitia::synth
