#include "mitia/image.hpp"

#include <algorithm>
#include <cctype>

#include "mitia/errors.hpp"

namespace mitia {

ImageSlice::ImageSlice(torch::Tensor pixels_in, std::string modality_tag_in, int slice_index_in)
    : pixels(std::move(pixels_in)), modality_tag(std::move(modality_tag_in)), slice_index(slice_index_in) {
  if (!pixels.defined() || pixels.dim() != 2) {
    throw ValidationError("ImageSlice expects a 2-D tensor");
  }
  if (pixels.size(0) <= 0 || pixels.size(1) <= 0) {
    throw ValidationError("ImageSlice dimensions must be positive");
  }
  pixels = pixels.detach().to(torch::kFloat32).contiguous();
}

bool ImageSlice::in_range(float tolerance) const {
  if (!pixels.defined()) return false;
  const float lo = pixels.min().item<float>();
  const float hi = pixels.max().item<float>();
  return lo >= -1.0F - tolerance && hi <= 1.0F + tolerance;
}

GroundTruthMasks GroundTruthMasks::all_aligned(int64_t height, int64_t width) {
  return {torch::ones({height, width}), torch::zeros({height, width}), torch::zeros({height, width})};
}

bool GroundTruthMasks::is_partition() const {
  if (!aligned.defined() || !registrable.defined() || !unregistrable.defined()) return false;
  if (aligned.sizes() != registrable.sizes() || aligned.sizes() != unregistrable.sizes()) return false;
  for (const auto* mask : {&aligned, &registrable, &unregistrable}) {
    auto binary = mask->eq(0).logical_or(mask->eq(1));
    if (!binary.all().item<bool>()) return false;
  }
  return (aligned + registrable + unregistrable).eq(1).all().item<bool>();
}

void Volume::validate() const {
  for (size_t i = 0; i < slices.size(); ++i) {
    if (i > 0 && slices[i].slice_index != slices[i - 1].slice_index + 1) {
      throw ValidationError("volume '" + subject_id + "' has non-contiguous slice indices");
    }
    if (slices[i].pixels.sizes() != slices.front().pixels.sizes()) {
      throw ValidationError("volume '" + subject_id + "' mixes slice shapes");
    }
  }
  if (structure_labels && structure_labels->size() != slices.size()) {
    throw ValidationError("volume '" + subject_id + "' has a label map count that differs from its slice count");
  }
}

std::string to_string(DatasetMode mode) {
  switch (mode) {
    case DatasetMode::kPaired:
      return "Paired";
    case DatasetMode::kRandomAffine:
      return "RA";
    case DatasetMode::kMisSlice:
      return "MS";
    case DatasetMode::kRandomAffineMisSlice:
      return "RA+MS";
  }
  return "Paired";
}

DatasetMode parse_dataset_mode(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "PAIRED") return DatasetMode::kPaired;
  if (upper == "RA") return DatasetMode::kRandomAffine;
  if (upper == "MS") return DatasetMode::kMisSlice;
  if (upper == "RA+MS" || upper == "RA_MS" || upper == "RAMS") return DatasetMode::kRandomAffineMisSlice;
  throw ValidationError("unknown dataset mode '" + std::string(text) + "'");
}

void PairedDataset::validate() const {
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    require_same_shape(pair.x.pixels, pair.y_tilde.pixels, "pair " + std::to_string(i));
    if (pair.reference) require_same_shape(pair.x.pixels, pair.reference->pixels, "reference of pair " + std::to_string(i));
    if (pair.masks) require_same_shape(pair.x.pixels, pair.masks->aligned, "masks of pair " + std::to_string(i));
    if (i > 0) require_same_shape(pairs.front().x.pixels, pair.x.pixels, "dataset slice size");
  }
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, std::string_view what) {
  if (!a.defined() || !b.defined() || a.dim() < 2 || b.dim() < 2 || a.size(-1) != b.size(-1) ||
      a.size(-2) != b.size(-2)) {
    throw ValidationError("shape mismatch: " + std::string(what));
  }
}

}  // namespace mitia
