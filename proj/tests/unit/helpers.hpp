#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "mitia/image.hpp"

namespace testing {

inline torch::Tensor random_image(int64_t h, int64_t w, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand({h, w}, gen, torch::kFloat32) * 2.0 - 1.0;
}

// Values drawn from a small set of levels, as float32.
inline torch::Tensor random_levels(int64_t h, int64_t w, int levels, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, levels - 1);
  auto t = torch::empty({h, w}, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  for (int64_t i = 0; i < h * w; ++i) p[i] = -1.0F + 2.0F * static_cast<float>(pick(rng)) / static_cast<float>(levels);
  return t;
}

inline bool bit_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && a.dtype() == b.dtype() && torch::equal(a, b);
}

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() / ("mitia_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Central finite-difference gradient of a scalar function of `x` (float64).
template <typename Fn>
torch::Tensor numeric_gradient(Fn fn, const torch::Tensor& x, double eps = 1e-6) {
  auto grad = torch::zeros_like(x);
  auto flat = x.view({-1});
  auto gflat = grad.view({-1});
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + eps;
    const double plus = fn(x);
    flat[i] = orig - eps;
    const double minus = fn(x);
    flat[i] = orig;
    gflat[i] = (plus - minus) / (2.0 * eps);
  }
  return grad;
}

inline double relative_error(const torch::Tensor& analytic, const torch::Tensor& numeric) {
  const double num = (analytic - numeric).norm().item<double>();
  const double den = std::max(analytic.norm().item<double>(), numeric.norm().item<double>());
  return den == 0.0 ? 0.0 : num / den;
}

}  // namespace testing
