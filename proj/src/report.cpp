#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mitia/errors.hpp"
#include "mitia/eval/metrics.hpp"
#include "mitia/io.hpp"
#include "mitia/pipeline/run.hpp"

namespace mitia::pipeline {
namespace fs = std::filesystem;

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  }
};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream stream(line);
  std::string cell;
  while (std::getline(stream, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<Table> read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  Table t;
  std::string line;
  if (!std::getline(in, line)) return std::nullopt;
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (!line.empty()) t.rows.push_back(split_line(line));
  }
  return t;
}

std::vector<double> numeric_column(const Table& t, const std::string& name) {
  std::vector<double> out;
  const int c = t.column(name);
  if (c < 0) return out;
  for (const auto& row : t.rows) {
    if (static_cast<size_t>(c) < row.size() && !row[c].empty()) out.push_back(std::stod(row[c]));
  }
  return out;
}

struct Series {
  std::vector<double> values;
  cv::Scalar color;
  std::string label;
};

// Line chart of one or more series over a shared x index.
cv::Mat line_chart(const std::string& title, const std::vector<Series>& series, int width = 480, int height = 240) {
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int left = 60;
  const int right = 15;
  const int top = 30;
  const int bottom = 30;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  size_t n = 0;
  for (const auto& s : series) {
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    n = std::max(n, s.values.size());
  }
  cv::putText(canvas, title, {left, 20}, cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  cv::rectangle(canvas, {left, top}, {width - right, height - bottom}, cv::Scalar(120, 120, 120));
  if (n == 0) return canvas;
  if (hi - lo < 1e-12) {
    hi += 0.5;
    lo -= 0.5;
  }
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  auto point = [&](size_t i, double v) {
    const double fx = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5;
    return cv::Point(static_cast<int>(left + fx * plot_w), static_cast<int>(top + (hi - v) / (hi - lo) * plot_h));
  };
  for (size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    for (size_t i = 0; i + 1 < s.values.size(); ++i) {
      cv::line(canvas, point(i, s.values[i]), point(i + 1, s.values[i + 1]), s.color, 2, cv::LINE_AA);
    }
    if (s.values.size() == 1) cv::circle(canvas, point(0, s.values[0]), 3, s.color, cv::FILLED);
    cv::putText(canvas, s.label, {width - right - 120, top + 15 + 15 * static_cast<int>(k)}, cv::FONT_HERSHEY_SIMPLEX,
                0.4, s.color, 1, cv::LINE_AA);
  }
  cv::putText(canvas, fmt::format("{:.4g}", hi), {4, top + 10}, cv::FONT_HERSHEY_SIMPLEX, 0.35, cv::Scalar(0, 0, 0));
  cv::putText(canvas, fmt::format("{:.4g}", lo), {4, height - bottom}, cv::FONT_HERSHEY_SIMPLEX, 0.35,
              cv::Scalar(0, 0, 0));
  return canvas;
}

cv::Mat to_gray8(const torch::Tensor& pixels, int scale) {
  auto t = ((pixels.detach().to(torch::kFloat32).clamp(-1, 1) + 1.0) * 127.5).round().to(torch::kUInt8).contiguous();
  cv::Mat img(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC1, t.data_ptr<uint8_t>());
  cv::Mat big;
  cv::resize(img, big, {}, scale, scale, cv::INTER_NEAREST);
  cv::Mat color;
  cv::cvtColor(big, color, cv::COLOR_GRAY2BGR);
  return color;
}

std::string markdown_row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + c + " |";
  return out + "\n";
}

}  // namespace

torch::Tensor residual_map(const torch::Tensor& pred, const torch::Tensor& ref) {
  require_same_shape(pred, ref, "residual map");
  // |pred - ref| / 2 lies in [0, 1]; 2r - 1 puts it back on the display scale.
  return (pred - ref).abs() - 1.0;
}

ReportResult write_report(const fs::path& run_dir) {
  RunLayout l{run_dir};
  if (!fs::is_directory(run_dir)) throw LoadError("run directory not found: " + run_dir.string());
  ReportResult result;
  result.markdown = l.report();
  const fs::path plots = run_dir / "plots";
  fs::create_directories(plots);
  std::ostringstream md;
  md << "# Run report\n\n";

  if (fs::exists(l.config())) {
    const auto c = RunConfig::load(l.config());
    md << fmt::format("Profile `{}`, seed {}, {}x{} images, width multiplier {}, dataset mode {}.\n\n", c.profile,
                      c.seed, c.image_size, c.image_size, c.width_mult, to_string(c.data.mode));
  } else {
    result.warnings.push_back("config.json missing");
  }

  // Loss curves.
  const std::vector<std::pair<std::string, fs::path>> logs{{"detector", l.mdet_dir() / "log.csv"},
                                                           {"coarse registration", l.mreg_dir() / "coarse_log.csv"},
                                                           {"fine registration", l.mreg_dir() / "fine_log.csv"},
                                                           {"translation", l.cycle_dir() / "log.csv"}};
  std::vector<cv::Mat> panels;
  for (const auto& [name, path] : logs) {
    auto table = read_table(path);
    if (!table) {
      result.warnings.push_back(fmt::format("{} log missing ({})", name, fs::relative(path, run_dir).string()));
      continue;
    }
    std::vector<Series> series{{numeric_column(*table, "loss"), cv::Scalar(200, 80, 0), "loss"}};
    auto det = numeric_column(*table, "detector_error");
    if (name != "fine registration" && !det.empty()) series.push_back({det, cv::Scalar(0, 0, 200), "detector"});
    panels.push_back(line_chart(name, series));
  }
  if (!panels.empty()) {
    cv::Mat stacked;
    cv::vconcat(panels, stacked);
    const auto path = plots / "loss_curves.png";
    cv::imwrite(path.string(), stacked);
    result.plots.push_back(path);
  }

  // Translation metrics.
  md << "## Translation metrics\n\n";
  const auto summary_path = l.metrics_dir() / "summary.json";
  if (fs::exists(summary_path)) {
    std::ifstream in(summary_path);
    const auto s = nlohmann::json::parse(in);
    md << markdown_row({"n", "PSNR (dB)", "SSIM (%)"}) << markdown_row({"---", "---", "---"});
    md << markdown_row({std::to_string(s["n"].get<size_t>()),
                        s["psnr_db_mean"].get<std::string>() + " +- " + s["psnr_db_std"].get<std::string>(),
                        s["ssim_pct_mean"].get<std::string>() + " +- " + s["ssim_pct_std"].get<std::string>()});
    md << "\n";
  } else {
    result.warnings.push_back("translation metrics missing");
    md << "Not available.\n\n";
  }

  // Detector error before and after registration.
  md << "## Average misalignment errors (%)\n\n";
  if (auto t = read_table(l.metrics_dir() / "misalignment_errors.csv")) {
    md << markdown_row({"dataset", "original", "after R_C", "after R_C + R_F"})
       << markdown_row({"---", "---", "---", "---"});
    for (const auto& r : t->rows) {
      md << markdown_row({r[0], r[1] + " +- " + r[2], r[3] + " +- " + r[4], r[5] + " +- " + r[6]});
    }
    md << "\n";
  } else {
    result.warnings.push_back("misalignment error table missing");
    md << "Not available.\n\n";
  }

  md << "## Error distribution\n\n";
  const auto hist_path = l.metrics_dir() / "error_hist.csv";
  if (fs::exists(hist_path)) {
    const auto h = eval::ErrorHistogram::read_csv(hist_path);
    std::vector<Series> series{{h.before, cv::Scalar(0, 0, 200), "before"}};
    if (h.has_after()) series.push_back({h.after, cv::Scalar(200, 80, 0), "after"});
    const auto path = plots / "error_hist.png";
    cv::imwrite(path.string(), line_chart("per-pair detector error frequency", series));
    result.plots.push_back(path);
    md << fmt::format("{} bins over [0, {:.4f}]; see `plots/error_hist.png`.\n\n", h.before.size(), h.edges.back());
  } else {
    result.warnings.push_back("error histogram missing");
    md << "Not available.\n\n";
  }

  // Translation grid: source, prediction, reference, residual.
  if (fs::exists(l.test_manifest()) && fs::is_directory(l.metrics_dir() / "predictions")) {
    const auto test = io::load_dataset(l.test_manifest());
    std::vector<cv::Mat> rows;
    const size_t count = std::min<size_t>(4, test.size());
    for (size_t i = 0; i < count; ++i) {
      const auto pred_path = l.metrics_dir() / "predictions" / fmt::format("{:04d}.f32", i);
      if (!fs::exists(pred_path) || !test.pairs[i].reference) continue;
      const auto pred = io::load_slice(pred_path).pixels;
      const auto& ref = test.pairs[i].reference->pixels;
      const int scale = std::max(1, 128 / static_cast<int>(pred.size(0)));
      std::vector<cv::Mat> cells{to_gray8(test.pairs[i].x.pixels, scale), to_gray8(pred, scale),
                                 to_gray8(ref, scale), to_gray8(residual_map(pred, ref), scale)};
      cv::Mat row;
      cv::hconcat(cells, row);
      rows.push_back(row);
    }
    if (!rows.empty()) {
      cv::Mat grid;
      cv::vconcat(rows, grid);
      const auto path = plots / "translation_grid.png";
      cv::imwrite(path.string(), grid);
      result.plots.push_back(path);
      md << "Columns of `plots/translation_grid.png`: source, prediction, reference, |prediction - reference|.\n\n";
    }
  } else {
    result.warnings.push_back("translations missing");
  }

  if (auto t = read_table(l.ablation_dir() / "ablation_summary.csv")) {
    md << "## Ablation\n\n";
    md << markdown_row({"variant", "MReg", "MDet", "PSNR (dB)", "SSIM (%)"})
       << markdown_row({"---", "---", "---", "---", "---"});
    for (const auto& r : t->rows) {
      md << markdown_row({r[0], r[1], r[2] == "1" ? "yes" : "no", r[3] + " +- " + r[4], r[5] + " +- " + r[6]});
    }
    md << "\n";
  }

  if (!result.plots.empty()) {
    md << "## Plots\n\n";
    for (const auto& p : result.plots) {
      md << fmt::format("![{}]({})\n", p.stem().string(), fs::relative(p, run_dir).generic_string());
    }
    md << "\n";
  }
  if (!result.warnings.empty()) {
    md << "## Warnings\n\n";
    for (const auto& w : result.warnings) md << "- " << w << "\n";
  }
  std::ofstream(result.markdown) << md.str();
  return result;
}

}  // namespace mitia::pipeline
