#include "mitia/synth/training_set.hpp"

#include <algorithm>
#include <set>

#include "mitia/errors.hpp"
#include "mitia/random.hpp"

namespace mitia::synth {
namespace {

std::vector<int> unique_labels(const torch::Tensor& labels) {
  auto flat = labels.to(torch::kInt32).contiguous();
  std::set<int> ids;
  const int32_t* data = flat.data_ptr<int32_t>();
  for (int64_t i = 0; i < flat.numel(); ++i) ids.insert(data[i]);
  return {ids.begin(), ids.end()};
}

void check_volumes(const std::vector<Volume>& volumes_x, const std::vector<Volume>& volumes_y) {
  if (volumes_x.size() != volumes_y.size()) throw ValidationError("x and y volume lists differ in length");
  for (size_t s = 0; s < volumes_x.size(); ++s) {
    volumes_x[s].validate();
    volumes_y[s].validate();
    if (volumes_x[s].num_slices() != volumes_y[s].num_slices()) {
      throw ValidationError("volumes of subject '" + volumes_x[s].subject_id + "' have unequal slice counts");
    }
    if (volumes_x[s].num_slices() > 0) {
      require_same_shape(volumes_x[s].slices.front().pixels, volumes_y[s].slices.front().pixels,
                         "subject " + volumes_x[s].subject_id);
    }
  }
}

}  // namespace

int mis_slice_index(int index, int offset, bool negative, int num_slices) {
  return std::clamp(negative ? index - offset : index + offset, 0, num_slices - 1);
}

GroundTruthMasks masks_from_labels(const torch::Tensor& labels_x, const std::vector<int>& present_x,
                                   const torch::Tensor& labels_y, const std::vector<int>& present_y) {
  require_same_shape(labels_x, labels_y, "label maps");
  const std::set<int> in_x(present_x.begin(), present_x.end());
  const std::set<int> in_y(present_y.begin(), present_y.end());
  auto lx = labels_x.to(torch::kInt32).contiguous();
  auto ly = labels_y.to(torch::kInt32).contiguous();
  auto masks = GroundTruthMasks::all_aligned(lx.size(0), lx.size(1));
  float* aligned = masks.aligned.data_ptr<float>();
  float* registrable = masks.registrable.data_ptr<float>();
  float* unregistrable = masks.unregistrable.data_ptr<float>();
  const int32_t* a = lx.data_ptr<int32_t>();
  const int32_t* b = ly.data_ptr<int32_t>();
  auto exists_in = [](const std::set<int>& set, int id) { return id < 0 || set.count(id) > 0; };
  for (int64_t i = 0; i < lx.numel(); ++i) {
    if (a[i] == b[i]) continue;
    aligned[i] = 0.0F;
    if (!exists_in(in_y, a[i]) || !exists_in(in_x, b[i])) {
      unregistrable[i] = 1.0F;
    } else {
      registrable[i] = 1.0F;
    }
  }
  return masks;
}

PairedDataset build_training_set(const std::vector<Volume>& volumes_x, const std::vector<Volume>& volumes_y,
                                 const TrainingSetOptions& options) {
  check_volumes(volumes_x, volumes_y);
  if (options.probability < 0.0 || options.probability > 1.0) throw ValidationError("mis-slice probability must lie in [0, 1]");
  if (options.slice_offset < 0) throw ValidationError("slice offset must be nonnegative");

  const bool affine = options.mode == DatasetMode::kRandomAffine || options.mode == DatasetMode::kRandomAffineMisSlice;
  const bool mis_slice = options.mode == DatasetMode::kMisSlice || options.mode == DatasetMode::kRandomAffineMisSlice;

  PairedDataset dataset;
  dataset.mode = options.mode;
  for (size_t s = 0; s < volumes_x.size(); ++s) {
    const auto& vx = volumes_x[s];
    const auto& vy = volumes_y[s];
    const bool has_labels = vx.structure_labels.has_value() && vy.structure_labels.has_value();
    const int n = vx.num_slices();
    for (int i = 0; i < n; ++i) {
      Rng rng(derive_seed(options.seed, {static_cast<uint64_t>(s), static_cast<uint64_t>(i)}));
      SlicePair pair;
      pair.subject_id = vx.subject_id;
      pair.x = vx.slices[i];
      pair.x.slice_index = i;
      torch::Tensor labels_x = has_labels ? (*vx.structure_labels)[i] : torch::Tensor();
      if (affine) {
        const auto params = sample_affine(rng, options.affine_ranges);
        const auto field = affine_field(params, pair.x.height(), pair.x.width());
        pair.x = mreg::resample(pair.x, field);
        pair.x.slice_index = i;
        if (has_labels) labels_x = mreg::resample_labels(labels_x, field.displacement);
      }
      int j = i;
      if (mis_slice && bernoulli(rng, options.probability)) {
        const bool negative = bernoulli(rng, 0.5);
        j = mis_slice_index(i, options.slice_offset, negative, n);
      }
      pair.y_tilde = vy.slices[j];
      pair.y_tilde.slice_index = j;
      if (has_labels) {
        pair.masks = masks_from_labels(labels_x, unique_labels((*vx.structure_labels)[i]), (*vy.structure_labels)[j],
                                       unique_labels((*vy.structure_labels)[j]));
      }
      dataset.pairs.push_back(std::move(pair));
    }
  }
  dataset.validate();
  return dataset;
}

PairedDataset build_test_set(const std::vector<Volume>& volumes_x, const std::vector<Volume>& volumes_y) {
  check_volumes(volumes_x, volumes_y);
  PairedDataset dataset;
  dataset.mode = DatasetMode::kPaired;
  for (size_t s = 0; s < volumes_x.size(); ++s) {
    for (int i = 0; i < volumes_x[s].num_slices(); ++i) {
      SlicePair pair;
      pair.subject_id = volumes_x[s].subject_id;
      pair.x = volumes_x[s].slices[i];
      pair.y_tilde = volumes_y[s].slices[i];
      pair.reference = volumes_y[s].slices[i];
      pair.masks = GroundTruthMasks::all_aligned(pair.x.height(), pair.x.width());
      dataset.pairs.push_back(std::move(pair));
    }
  }
  return dataset;
}

}  // namespace mitia::synth
