#include "mitia/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "mitia/errors.hpp"

namespace mitia::eval {

namespace {

torch::Tensor as_double_image(const torch::Tensor& t) {
  auto out = t.detach().to(torch::kFloat64);
  while (out.dim() > 2) out = out.squeeze(0);
  if (out.dim() != 2) throw ValidationError("metrics expect a single 2-D image");
  return out;
}

torch::Tensor gaussian_window() {
  constexpr int kSize = 11;
  constexpr double kSigma = 1.5;
  auto g = torch::empty({kSize}, torch::kFloat64);
  for (int i = 0; i < kSize; ++i) {
    const double d = i - kSize / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
  }
  g /= g.sum();
  return torch::outer(g, g).view({1, 1, kSize, kSize});
}

}  // namespace

double psnr(const torch::Tensor& pred, const torch::Tensor& ref) {
  require_same_shape(pred, ref, "psnr");
  const double mse = (as_double_image(pred) - as_double_image(ref)).square().mean().item<double>();
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(4.0 / mse));
}

double psnr(const ImageSlice& pred, const ImageSlice& ref) { return psnr(pred.pixels, ref.pixels); }

double ssim(const torch::Tensor& pred, const torch::Tensor& ref) {
  require_same_shape(pred, ref, "ssim");
  auto a = ((as_double_image(pred) + 1.0) / 2.0).unsqueeze(0).unsqueeze(0);
  auto b = ((as_double_image(ref) + 1.0) / 2.0).unsqueeze(0).unsqueeze(0);
  if (a.size(2) < 11 || a.size(3) < 11) throw ValidationError("ssim: image smaller than the 11 x 11 window");
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const auto window = gaussian_window();
  auto filter = [&](const torch::Tensor& t) { return torch::conv2d(t, window); };
  auto mu_a = filter(a);
  auto mu_b = filter(b);
  auto var_a = filter(a * a) - mu_a * mu_a;
  auto var_b = filter(b * b) - mu_b * mu_b;
  auto cov = filter(a * b) - mu_a * mu_b;
  auto map = ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
             ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
  return map.mean().item<double>();
}

double ssim(const ImageSlice& pred, const ImageSlice& ref) { return ssim(pred.pixels, ref.pixels); }

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double squares = 0.0;
  for (double v : values) squares += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(squares / n);
  return s;
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  CsvLog log(path, {"name", "psnr_db", "ssim_pct"});
  for (const auto& p : per_pair) log.row({p.name, format_number(p.psnr_db), format_number(p.ssim * 100.0)});
}

MetricReport evaluate_pairs(const std::vector<ImageSlice>& predictions, const std::vector<ImageSlice>& references,
                            const std::vector<std::string>& names) {
  if (predictions.size() != references.size()) throw ValidationError("evaluate: prediction/reference count differs");
  MetricReport report;
  std::vector<double> p;
  std::vector<double> s;
  for (size_t i = 0; i < predictions.size(); ++i) {
    PairMetrics m;
    m.name = i < names.size() ? names[i] : std::to_string(i);
    m.psnr_db = psnr(predictions[i], references[i]);
    m.ssim = ssim(predictions[i], references[i]);
    p.push_back(m.psnr_db);
    s.push_back(m.ssim * 100.0);
    report.per_pair.push_back(m);
  }
  report.psnr_db = summarize(p);
  report.ssim_pct = summarize(s);
  return report;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ValidationError("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  size_t i = 0;
  size_t j = 0;
  double best = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    const double fa = static_cast<double>(i) / static_cast<double>(a.size());
    const double fb = static_cast<double>(j) / static_cast<double>(b.size());
    best = std::max(best, std::abs(fa - fb));
  }
  return best;
}

double roc_auc(const torch::Tensor& scores, const torch::Tensor& labels) {
  auto s = scores.detach().to(torch::kFloat64).reshape({-1}).contiguous();
  auto l = labels.detach().to(torch::kFloat64).reshape({-1}).contiguous();
  if (s.numel() != l.numel()) throw ValidationError("roc_auc: scores and labels differ in size");
  const auto n = static_cast<size_t>(s.numel());
  const double* sp = s.data_ptr<double>();
  const double* lp = l.data_ptr<double>();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t x, size_t y) { return sp[x] < sp[y]; });
  double positives = 0.0;
  double rank_sum = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && sp[order[j]] == sp[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i + j - 1) / 2.0) + 1.0;
    for (size_t k = i; k < j; ++k) {
      if (lp[order[k]] > 0.5) {
        positives += 1.0;
        rank_sum += mean_rank;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) throw ValidationError("roc_auc: needs both classes");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

std::vector<double> frequencies(const std::vector<double>& values, const std::vector<double>& edges) {
  const size_t bins = edges.size() - 1;
  std::vector<double> freq(bins, 0.0);
  if (values.empty()) return freq;
  for (double v : values) {
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    size_t bin = it == edges.begin() ? 0 : static_cast<size_t>(it - edges.begin()) - 1;
    freq[std::min(bin, bins - 1)] += 1.0;
  }
  for (double& f : freq) f /= static_cast<double>(values.size());
  return freq;
}

ErrorHistogram error_histogram(const PairedDataset& dataset, const PairMap& detector, const PairMap& warp, int bins,
                               double upper) {
  if (bins < 1) throw ValidationError("error_histogram: bins must be positive");
  torch::NoGradGuard no_grad;
  ErrorHistogram h;
  for (const auto& pair : dataset.pairs) {
    auto x = pair.x.batched();
    auto y = pair.y_tilde.batched();
    h.before_values.push_back(detector(x, y).mean().item<double>());
    if (warp) h.after_values.push_back(detector(warp(x, y), y).mean().item<double>());
  }
  if (upper <= 0.0) {
    for (double v : h.before_values) upper = std::max(upper, v);
    for (double v : h.after_values) upper = std::max(upper, v);
    if (upper <= 0.0) upper = 1.0;
  }
  for (int i = 0; i <= bins; ++i) h.edges.push_back(upper * i / bins);
  h.before = frequencies(h.before_values, h.edges);
  if (warp) h.after = frequencies(h.after_values, h.edges);
  return h;
}

void ErrorHistogram::write_csv(const std::filesystem::path& path) const {
  CsvLog log(path, {"bin_lo", "bin_hi", "before", "after"});
  for (size_t i = 0; i + 1 < edges.size(); ++i) {
    log.row({format_number(edges[i]), format_number(edges[i + 1]), format_number(before[i]),
             has_after() ? format_number(after[i]) : ""});
  }
}

ErrorHistogram ErrorHistogram::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read histogram '" + path.string() + "'");
  ErrorHistogram h;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string lo;
    std::string hi;
    std::string before;
    std::string after;
    std::getline(row, lo, ',');
    std::getline(row, hi, ',');
    std::getline(row, before, ',');
    std::getline(row, after, ',');
    if (h.edges.empty()) h.edges.push_back(std::stod(lo));
    h.edges.push_back(std::stod(hi));
    h.before.push_back(std::stod(before));
    if (!after.empty()) h.after.push_back(std::stod(after));
  }
  return h;
}

}  // namespace mitia::eval
