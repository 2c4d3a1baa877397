#pragma once

#include <cstdint>
#include <vector>

#include "mitia/image.hpp"
#include "mitia/synth/misalignment.hpp"

namespace mitia::synth {

struct TrainingSetOptions {
  DatasetMode mode = DatasetMode::kPaired;
  int slice_offset = 3;
  double probability = 0.5;
  uint64_t seed = 0;
  AffineRanges affine_ranges;
};

// Pairs slice i of volumes_x[s] with a slice of volumes_y[s]:
//   Paired: slice i, untouched.
//   RA:     random_affine applied to x.
//   MS:     with probability p, slice i +- offset (sign uniform, clamped to
//           the volume).
//   RA+MS:  both.
// When the volumes carry label maps, every pair gets ground-truth masks:
// pixels whose structure labels agree are aligned; a disagreement involving
// a structure absent from the other slice is unregistrable; any other
// disagreement is registrable.
PairedDataset build_training_set(const std::vector<Volume>& volumes_x, const std::vector<Volume>& volumes_y,
                                 const TrainingSetOptions& options);

// Aligned evaluation pairs with y as the reference.
PairedDataset build_test_set(const std::vector<Volume>& volumes_x, const std::vector<Volume>& volumes_y);

// Index of the paired y slice for x slice `index` under a mis-slice draw.
int mis_slice_index(int index, int offset, bool negative, int num_slices);

// Label-based masks for a pair (see build_training_set).
GroundTruthMasks masks_from_labels(const torch::Tensor& labels_x, const std::vector<int>& present_x,
                                   const torch::Tensor& labels_y, const std::vector<int>& present_y);

}  // namespace mitia::synth
