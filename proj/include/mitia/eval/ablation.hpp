#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mitia/cycle/translation.hpp"
#include "mitia/eval/metrics.hpp"
#include "mitia/image.hpp"

namespace mitia::eval {

enum class MRegUsage { kNone, kFineOnly, kFull };

std::string to_string(MRegUsage usage);

struct AblationVariant {
  std::string id;
  MRegUsage uses_mreg = MRegUsage::kNone;
  bool uses_mdet = false;
  cycle::PriorForm prior = cycle::PriorForm::kNone;
  double lambda_prior = 30.0;
};

// V1 (no prior), V2 plain prior, V3 fine-only registration, V4 full
// registration, V5 detector weights, V6 full model.
const std::vector<AblationVariant>& ablation_table();
const AblationVariant& find_variant(std::string_view id);
std::vector<AblationVariant> parse_variants(std::string_view list);

// Frozen modules available to the ablation.
struct AblationModules {
  PairMap full_warp;
  PairMap fine_only_warp;
  PairMap detector;
};

// Throws ConfigError naming the first variant whose modules are missing.
void check_prerequisites(const std::vector<AblationVariant>& variants, const AblationModules& modules);

struct AblationResult {
  AblationVariant variant;
  MetricReport report;
};

// Trains the translation model of each variant from the same seed and
// evaluates G on the reference pairs of `test`.
std::vector<AblationResult> run_ablation(const PairedDataset& train, const PairedDataset& test,
                                         const std::vector<AblationVariant>& variants, const AblationModules& modules,
                                         const cycle::CycleTrainConfig& base, const std::filesystem::path& output_dir);

MetricReport evaluate_translation(const PairedDataset& test, nets::ResnetGenerator& G);

void write_ablation_summary(const std::vector<AblationResult>& results, const std::filesystem::path& path);

}  // namespace mitia::eval
