#include "mitia/io.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mitia/errors.hpp"

namespace mitia::io {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_u32(std::ostream& out, uint32_t value) {
  std::array<char, 4> bytes{};
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFU);
  out.write(bytes.data(), 4);
}

uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), 4);
  uint32_t value = 0;
  for (int i = 0; i < 4; ++i) value |= static_cast<uint32_t>(bytes[i]) << (8 * i);
  return value;
}

void write_rawf32(const torch::Tensor& pixels, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const auto data = pixels.to(torch::kFloat32).contiguous();
  out.write(kRawMagic, 4);
  put_u32(out, static_cast<uint32_t>(data.size(0)));
  put_u32(out, static_cast<uint32_t>(data.size(1)));
  const float* values = data.data_ptr<float>();
  for (int64_t i = 0; i < data.numel(); ++i) {
    uint32_t bits = 0;
    std::memcpy(&bits, &values[i], 4);
    put_u32(out, bits);
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

torch::Tensor read_rawf32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path.string() + "'");
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || std::memcmp(magic.data(), kRawMagic, 4) != 0) {
    throw LoadError("'" + path.string() + "' is not a rawf32 file");
  }
  const uint32_t height = get_u32(in);
  const uint32_t width = get_u32(in);
  if (height == 0 || width == 0) throw LoadError("'" + path.string() + "' has an empty shape");
  auto pixels = torch::empty({height, width}, torch::kFloat32);
  float* values = pixels.data_ptr<float>();
  for (int64_t i = 0; i < pixels.numel(); ++i) {
    const uint32_t bits = get_u32(in);
    std::memcpy(&values[i], &bits, 4);
  }
  if (!in) throw LoadError("'" + path.string() + "' is truncated");
  return pixels;
}

torch::Tensor read_png(const fs::path& path) {
  cv::Mat image = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  if (image.empty()) throw LoadError("cannot read image '" + path.string() + "'");
  double full_range = 0.0;
  if (image.depth() == CV_8U) {
    full_range = 255.0;
  } else if (image.depth() == CV_16U) {
    full_range = 65535.0;
  } else {
    throw LoadError("'" + path.string() + "' must be 8- or 16-bit");
  }
  cv::Mat as_double;
  image.convertTo(as_double, CV_64F);
  auto pixels = torch::empty({image.rows, image.cols}, torch::kFloat32);
  auto acc = pixels.accessor<float, 2>();
  for (int r = 0; r < image.rows; ++r) {
    for (int c = 0; c < image.cols; ++c) {
      acc[r][c] = static_cast<float>(2.0 * (as_double.at<double>(r, c) / full_range) - 1.0);
    }
  }
  return pixels;
}

fs::path resolve(const fs::path& base, const std::string& entry) {
  fs::path p(entry);
  return p.is_absolute() ? p : base / p;
}

ImageSlice load_checked(const fs::path& path, const std::string& tag) {
  if (!fs::exists(path)) throw LoadError("missing file '" + path.string() + "'");
  auto slice = load_slice(path);
  slice.modality_tag = tag;
  return slice;
}

}  // namespace

SliceFormat parse_slice_format(std::string_view text) {
  if (text == "png16") return SliceFormat::kPng16;
  if (text == "rawf32") return SliceFormat::kRawF32;
  throw ValidationError("unknown slice format '" + std::string(text) + "'");
}

void save_slice(const ImageSlice& slice, const fs::path& path, SliceFormat format) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  if (format == SliceFormat::kRawF32) {
    write_rawf32(slice.pixels, path);
    return;
  }
  const auto data = slice.pixels.to(torch::kFloat64).contiguous();
  cv::Mat image(static_cast<int>(data.size(0)), static_cast<int>(data.size(1)), CV_16UC1);
  auto acc = data.accessor<double, 2>();
  for (int r = 0; r < image.rows; ++r) {
    for (int c = 0; c < image.cols; ++c) {
      const double unit = std::clamp((acc[r][c] + 1.0) / 2.0, 0.0, 1.0);
      image.at<uint16_t>(r, c) = static_cast<uint16_t>(std::lround(unit * 65535.0));
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), image);
  } catch (const cv::Exception&) {
    ok = false;
  }
  if (!ok) throw IoError("cannot write '" + path.string() + "'");
}

void save_png8(const torch::Tensor& pixels, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto data = pixels.to(torch::kFloat64).contiguous();
  cv::Mat image(static_cast<int>(data.size(0)), static_cast<int>(data.size(1)), CV_8UC1);
  auto acc = data.accessor<double, 2>();
  for (int r = 0; r < image.rows; ++r) {
    for (int c = 0; c < image.cols; ++c) {
      image.at<uint8_t>(r, c) = static_cast<uint8_t>(std::lround(std::clamp((acc[r][c] + 1.0) / 2.0, 0.0, 1.0) * 255.0));
    }
  }
  if (!cv::imwrite(path.string(), image)) throw IoError("cannot write '" + path.string() + "'");
}

ImageSlice load_slice(const fs::path& path) {
  if (!fs::exists(path)) throw LoadError("missing file '" + path.string() + "'");
  const auto ext = path.extension().string();
  torch::Tensor pixels;
  if (ext == ".png") {
    pixels = read_png(path);
  } else {
    pixels = read_rawf32(path);
    const float lo = pixels.min().item<float>();
    const float hi = pixels.max().item<float>();
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo < -1.0F || hi > 1.0F) {
      throw ValidationError("'" + path.string() + "' holds values outside [-1, 1]");
    }
  }
  return ImageSlice(pixels);
}

PairedDataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("cannot open manifest '" + manifest_path.string() + "'");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw LoadError("malformed manifest '" + manifest_path.string() + "': " + e.what());
  }
  if (!manifest.is_array()) throw LoadError("manifest must be a JSON array");

  const fs::path base = manifest_path.parent_path();
  PairedDataset dataset;
  for (size_t i = 0; i < manifest.size(); ++i) {
    const auto& record = manifest[i];
    if (!record.contains("x") || !record.contains("y")) {
      throw LoadError("manifest record " + std::to_string(i) + " needs x and y");
    }
    SlicePair pair;
    pair.x = load_checked(resolve(base, record["x"].get<std::string>()), "X");
    pair.y_tilde = load_checked(resolve(base, record["y"].get<std::string>()), "Y");
    if (record.contains("masks")) {
      const auto& masks = record["masks"];
      GroundTruthMasks m;
      m.aligned = load_checked(resolve(base, masks.at("aligned").get<std::string>()), "mask").pixels;
      m.registrable = load_checked(resolve(base, masks.at("registrable").get<std::string>()), "mask").pixels;
      m.unregistrable = load_checked(resolve(base, masks.at("unregistrable").get<std::string>()), "mask").pixels;
      pair.masks = std::move(m);
    }
    if (record.contains("reference")) {
      pair.reference = load_checked(resolve(base, record["reference"].get<std::string>()), "Y");
    }
    pair.subject_id = record.value("subject", std::string{});
    if (record.contains("x_slice")) pair.x.slice_index = record["x_slice"].get<int>();
    if (record.contains("y_slice")) pair.y_tilde.slice_index = record["y_slice"].get<int>();
    if (i == 0 && record.contains("mode")) dataset.mode = parse_dataset_mode(record["mode"].get<std::string>());
    dataset.pairs.push_back(std::move(pair));
  }
  dataset.validate();
  return dataset;
}

fs::path write_dataset(const PairedDataset& dataset, const fs::path& directory) {
  fs::create_directories(directory / "slices");
  json manifest = json::array();
  for (size_t i = 0; i < dataset.pairs.size(); ++i) {
    const auto& pair = dataset.pairs[i];
    const std::string stem = "slices/" + std::to_string(i);
    json record;
    record["x"] = stem + "_x.f32";
    record["y"] = stem + "_y.f32";
    save_slice(pair.x, directory / record["x"].get<std::string>(), SliceFormat::kRawF32);
    save_slice(pair.y_tilde, directory / record["y"].get<std::string>(), SliceFormat::kRawF32);
    if (pair.masks) {
      json masks;
      masks["aligned"] = stem + "_aligned.f32";
      masks["registrable"] = stem + "_registrable.f32";
      masks["unregistrable"] = stem + "_unregistrable.f32";
      save_slice(ImageSlice(pair.masks->aligned), directory / masks["aligned"].get<std::string>(), SliceFormat::kRawF32);
      save_slice(ImageSlice(pair.masks->registrable), directory / masks["registrable"].get<std::string>(),
                 SliceFormat::kRawF32);
      save_slice(ImageSlice(pair.masks->unregistrable), directory / masks["unregistrable"].get<std::string>(),
                 SliceFormat::kRawF32);
      record["masks"] = masks;
    }
    if (pair.reference) {
      record["reference"] = stem + "_ref.f32";
      save_slice(*pair.reference, directory / record["reference"].get<std::string>(), SliceFormat::kRawF32);
    }
    record["subject"] = pair.subject_id;
    record["x_slice"] = pair.x.slice_index;
    record["y_slice"] = pair.y_tilde.slice_index;
    record["mode"] = to_string(dataset.mode);
    manifest.push_back(std::move(record));
  }
  const fs::path manifest_path = directory / "manifest.json";
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot write '" + manifest_path.string() + "'");
  out << manifest.dump(1) << "\n";
  return manifest_path;
}

}  // namespace mitia::io
