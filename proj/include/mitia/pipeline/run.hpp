#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mitia/cycle/translation.hpp"
#include "mitia/image.hpp"

namespace mitia::pipeline {

struct DataConfig {
  DatasetMode mode = DatasetMode::kRandomAffineMisSlice;
  int train_subjects = 4;
  int test_subjects = 2;
  int slices_per_subject = 12;
  int slice_offset = 3;
  double probability = 0.5;
};

struct MDetStageConfig {
  int epochs = 80;
  double learning_rate = 1e-4;
  int num_blocks = 9;
  double aligned_fraction = 0.2;
};

struct MRegStageConfig {
  int coarse_epochs = 80;
  int fine_epochs = 80;
  double learning_rate = 1e-4;
  double lambda_smooth = 1.0;
  int bins = 32;
};

struct CycleStageConfig {
  int epochs = 60;
  double learning_rate = 1e-4;
  int num_blocks = 9;
  double lambda_cyc = 10.0;
  double lambda_prior = 30.0;
  double threshold = 0.1;
  cycle::AdversarialForm adversarial = cycle::AdversarialForm::kLog;
  int pool_size = 0;
};

struct AblationStageConfig {
  bool enabled = false;
  std::string variants = "V1,V2,V3,V4,V5,V6";
};

struct RunConfig {
  std::string profile = "paper";
  uint64_t seed = 0;
  int image_size = 256;
  double width_mult = 1.0;
  int batch_size = 1;
  double beta1 = 0.5;
  double beta2 = 0.999;
  DataConfig data;
  MDetStageConfig mdet;
  MRegStageConfig mreg;
  CycleStageConfig cycle;
  AblationStageConfig ablation;
  int histogram_bins = 20;

  // 32 x 32, width 0.25, 5/5/5 epochs.
  static RunConfig desk();
  // 256 x 256, full widths, 80/80/60 epochs.
  static RunConfig paper();
  static RunConfig preset(const std::string& name);

  void validate() const;
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static RunConfig load(const std::filesystem::path& path);
};

// Fixed layout of a run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path train_manifest() const { return root / "data" / "train" / "manifest.json"; }
  std::filesystem::path test_manifest() const { return root / "data" / "test" / "manifest.json"; }
  std::filesystem::path mdet_dir() const { return root / "mdet"; }
  std::filesystem::path detector() const { return mdet_dir() / "detector.pt"; }
  std::filesystem::path mreg_dir() const { return root / "mreg"; }
  std::filesystem::path fine_only_dir() const { return root / "mreg_fine_only"; }
  std::filesystem::path cycle_dir() const { return root / "cycle"; }
  std::filesystem::path metrics_dir() const { return root / "metrics"; }
  std::filesystem::path ablation_dir() const { return root / "ablation"; }
  std::filesystem::path manifest() const { return root / "run_manifest.json"; }
  std::filesystem::path report() const { return root / "report.md"; }
  // A stage is complete once its marker exists.
  std::filesystem::path marker(const std::string& stage) const { return root / ".stages" / (stage + ".done"); }
};

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"synth", "mdet", "mreg", "cycle", "evaluate", "ablate"};
  return names;
}

struct PipelineResult {
  std::filesystem::path run_dir;
  std::vector<std::string> stages_run;
  std::vector<std::string> stages_skipped;
};

// synth -> mdet -> mreg -> cycle -> evaluate (-> ablate when enabled).
// Completed stages are skipped. A failing stage aborts the run with an
// Error naming it. The report and run manifest are rewritten at the end.
PipelineResult run_pipeline(const RunConfig& config, const std::filesystem::path& run_dir, bool verbose = false);

void run_stage(const std::string& stage, const RunConfig& config, const RunLayout& layout, bool verbose);

// Lists every file under the run directory with its SHA-256.
void write_run_manifest(const std::filesystem::path& run_dir);
std::string sha256_file(const std::filesystem::path& path);

struct ReportResult {
  std::filesystem::path markdown;
  std::vector<std::filesystem::path> plots;
  std::vector<std::string> warnings;
};

// Markdown summary plus loss-curve, histogram and translation-grid plots.
// Missing artifacts become warnings in a partial report.
ReportResult write_report(const std::filesystem::path& run_dir);

// |pred - ref| / 2, mapped onto [-1, 1] for display.
torch::Tensor residual_map(const torch::Tensor& pred, const torch::Tensor& ref);

// Architecture parameters stored as spec.json next to a checkpoint so that
// it can be reloaded without repeating them.
struct NetSidecar {
  double width_mult = 1.0;
  int num_blocks = 9;
  int image_size = 0;
};

void write_sidecar(const std::filesystem::path& directory, const NetSidecar& sidecar);
// Falls back to `fallback` when the directory holds no spec.json.
NetSidecar read_sidecar(const std::filesystem::path& directory, const NetSidecar& fallback);

// Rejects any device other than the CPU this build supports; reads
// MITIA_DEVICE when `name` is empty.
std::string select_device(const std::string& name = "");

}  // namespace mitia::pipeline
