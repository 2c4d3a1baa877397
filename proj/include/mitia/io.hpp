#pragma once

#include <filesystem>
#include <string_view>

#include "mitia/image.hpp"

namespace mitia::io {

enum class SliceFormat { kPng16, kRawF32 };

SliceFormat parse_slice_format(std::string_view text);

// rawf32 layout: 4-byte magic "RF32", uint32 height, uint32 width, then
// height*width float32 values in row-major order. All little-endian.
inline constexpr char kRawMagic[4] = {'R', 'F', '3', '2'};

void save_slice(const ImageSlice& slice, const std::filesystem::path& path, SliceFormat format);

// Reads png (8- or 16-bit, mapped linearly from its full dynamic range) or
// rawf32 (values taken verbatim and required to lie in [-1, 1]).
ImageSlice load_slice(const std::filesystem::path& path);

// Manifest: a JSON array of
//   {"x": path, "y": path,
//    "masks": {"aligned": path, "registrable": path, "unregistrable": path},
//    "reference": path}
// with masks and reference optional. Paths are relative to the manifest
// directory. Records may also carry "subject" and "mode".
PairedDataset load_dataset(const std::filesystem::path& manifest_path);

// Writes every slice of the dataset as rawf32 under `directory` and a
// manifest.json next to them. Returns the manifest path.
std::filesystem::path write_dataset(const PairedDataset& dataset, const std::filesystem::path& directory);

// 8-bit display image of a [-1, 1] slice.
void save_png8(const torch::Tensor& pixels, const std::filesystem::path& path);

}  // namespace mitia::io
