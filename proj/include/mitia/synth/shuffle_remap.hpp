#pragma once

#include <vector>

#include "mitia/image.hpp"
#include "mitia/random.hpp"

namespace mitia::synth {

// Piecewise permutation of the intensity axis. The axis [-1, 1] is cut into
// k segments at `boundaries`; segment j keeps its width and slides to
// output slot permutation[j] (0-based). Segments are half-open [a, b)
// except the last, which is closed.
struct ShuffleRemapSpec {
  int k = 2;
  std::vector<double> boundaries;  // k - 1 strictly increasing values in (-1, 1)
  std::vector<int> permutation;    // bijection on {0, ..., k-1}

  static constexpr int kMinSegments = 2;
  static constexpr int kMaxSegments = 50;

  // Equal-width segments with the identity permutation.
  static ShuffleRemapSpec identity(int k);

  // Throws ValidationError on any violated invariant.
  void validate() const;

  // Maps a single intensity.
  double apply(double value) const;
};

// k uniform in [2, 50]; cut points uniform in (-1, 1), redrawn until every
// segment is at least 2 / (4k) wide; uniformly random permutation.
ShuffleRemapSpec random_shuffle_spec(Rng& rng);

ImageSlice shuffle_remap(const ImageSlice& x, const ShuffleRemapSpec& spec);

}  // namespace mitia::synth
