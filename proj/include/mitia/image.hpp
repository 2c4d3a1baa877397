#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mitia {

// Background intensity of every normalized slice.
inline constexpr float kBackground = -1.0F;

// A single 2-D slice, float32 [H, W] with intensities in [-1, 1].
//
// The tensor is shared, not copied, when an ImageSlice is copied. Nothing in
// the library writes into an existing slice's pixels; operations return new
// slices.
struct ImageSlice {
  torch::Tensor pixels;
  std::string modality_tag;
  int slice_index = 0;

  ImageSlice() = default;
  ImageSlice(torch::Tensor pixels, std::string modality_tag = {}, int slice_index = 0);

  int64_t height() const { return pixels.size(0); }
  int64_t width() const { return pixels.size(1); }

  // [1, 1, H, W] view for network input.
  torch::Tensor batched() const { return pixels.unsqueeze(0).unsqueeze(0); }

  bool in_range(float tolerance = 0.0F) const;
};

// Region masks of a synthesized pair: aligned (Omega), registrable and
// unregistrable misalignment. Each is float32 [H, W] holding 0 or 1.
struct GroundTruthMasks {
  torch::Tensor aligned;
  torch::Tensor registrable;
  torch::Tensor unregistrable;

  static GroundTruthMasks all_aligned(int64_t height, int64_t width);

  // Masks are binary and sum to one at every pixel.
  bool is_partition() const;
};

struct Volume {
  std::vector<ImageSlice> slices;
  std::string subject_id;
  std::string modality_tag;
  // Per-slice structure label maps (int32 [H, W], -1 = background). Present
  // only for synthetic volumes; used to derive ground-truth masks.
  std::optional<std::vector<torch::Tensor>> structure_labels;

  // Throws ValidationError unless slice indices are contiguous, strictly
  // increasing and every slice has the same shape.
  void validate() const;
  int num_slices() const { return static_cast<int>(slices.size()); }
};

enum class DatasetMode { kPaired, kRandomAffine, kMisSlice, kRandomAffineMisSlice };

std::string to_string(DatasetMode mode);
DatasetMode parse_dataset_mode(std::string_view text);

struct SlicePair {
  ImageSlice x;
  ImageSlice y_tilde;
  std::optional<GroundTruthMasks> masks;
  std::optional<ImageSlice> reference;
  std::string subject_id;
};

struct PairedDataset {
  std::vector<SlicePair> pairs;
  DatasetMode mode = DatasetMode::kPaired;

  // Throws ValidationError if any pair mixes shapes or if the dataset is not
  // uniformly sized.
  void validate() const;
  bool empty() const { return pairs.empty(); }
  size_t size() const { return pairs.size(); }
};

// Throws ValidationError if the two tensors do not share their trailing
// spatial shape.
void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, std::string_view what);

}  // namespace mitia
