#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mitia/image.hpp"
#include "mitia/training.hpp"

namespace mitia::eval {

inline constexpr double kPsnrCap = 99.0;

// 10 log10(R^2 / MSE) with R = 2 for [-1, 1] images; MSE = 0 gives the cap.
double psnr(const torch::Tensor& pred, const torch::Tensor& ref);
double psnr(const ImageSlice& pred, const ImageSlice& ref);

// Single-scale SSIM on images rescaled to [0, 1]: 11 x 11 Gaussian window,
// sigma 1.5, K1 = 0.01, K2 = 0.03, mean over valid window positions.
double ssim(const torch::Tensor& pred, const torch::Tensor& ref);
double ssim(const ImageSlice& pred, const ImageSlice& ref);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
};

Summary summarize(const std::vector<double>& values);

struct PairMetrics {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;  // fraction; reported x100
};

struct MetricReport {
  std::vector<PairMetrics> per_pair;
  Summary psnr_db;
  Summary ssim_pct;

  size_t n() const { return per_pair.size(); }
  void write_csv(const std::filesystem::path& path) const;
};

MetricReport evaluate_pairs(const std::vector<ImageSlice>& predictions, const std::vector<ImageSlice>& references,
                            const std::vector<std::string>& names = {});

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

// Area under the ROC curve of `scores` for binary `labels` (ties count
// one half).
double roc_auc(const torch::Tensor& scores, const torch::Tensor& labels);

struct ErrorHistogram {
  std::vector<double> edges;  // bins + 1
  std::vector<double> before_values;
  std::vector<double> after_values;  // empty without registration
  std::vector<double> before;        // frequencies, sum to 1
  std::vector<double> after;

  bool has_after() const { return !after.empty(); }
  void write_csv(const std::filesystem::path& path) const;
  static ErrorHistogram read_csv(const std::filesystem::path& path);
};

// Per-pair mean detector error before and, if `warp` is given, after
// registration, binned over [0, upper]. A non-positive `upper` uses the
// largest observed value.
ErrorHistogram error_histogram(const PairedDataset& dataset, const PairMap& detector, const PairMap& warp = nullptr,
                               int bins = 20, double upper = 0.0);

std::vector<double> frequencies(const std::vector<double>& values, const std::vector<double>& edges);

}  // namespace mitia::eval
