#include "mitia/eval/ablation.hpp"

#include <fmt/format.h>

#include "mitia/errors.hpp"

namespace mitia::eval {

using cycle::PriorForm;

std::string to_string(MRegUsage usage) {
  switch (usage) {
    case MRegUsage::kNone:
      return "none";
    case MRegUsage::kFineOnly:
      return "fine_only";
    case MRegUsage::kFull:
      return "full";
  }
  return "none";
}

const std::vector<AblationVariant>& ablation_table() {
  static const std::vector<AblationVariant> table{
      {"V1", MRegUsage::kNone, false, PriorForm::kNone, 30.0},
      {"V2", MRegUsage::kNone, false, PriorForm::kPlain, 30.0},
      {"V3", MRegUsage::kFineOnly, false, PriorForm::kWarped, 30.0},
      {"V4", MRegUsage::kFull, false, PriorForm::kWarped, 30.0},
      {"V5", MRegUsage::kNone, true, PriorForm::kMasked, 30.0},
      {"V6", MRegUsage::kFull, true, PriorForm::kWarpedMasked, 30.0},
  };
  return table;
}

const AblationVariant& find_variant(std::string_view id) {
  for (const auto& v : ablation_table()) {
    if (v.id == id) return v;
  }
  throw ConfigError(fmt::format("unknown ablation variant '{}'", id));
}

std::vector<AblationVariant> parse_variants(std::string_view list) {
  std::vector<AblationVariant> out;
  size_t start = 0;
  while (start <= list.size()) {
    const size_t end = std::min(list.find(',', start), list.size());
    auto token = list.substr(start, end - start);
    if (!token.empty()) out.push_back(find_variant(token));
    start = end + 1;
  }
  if (out.empty()) throw ConfigError("no ablation variants selected");
  return out;
}

namespace {

PairMap warp_for(const AblationVariant& v, const AblationModules& modules) {
  switch (v.uses_mreg) {
    case MRegUsage::kFull:
      return modules.full_warp;
    case MRegUsage::kFineOnly:
      return modules.fine_only_warp;
    case MRegUsage::kNone:
      return nullptr;
  }
  return nullptr;
}

}  // namespace

void check_prerequisites(const std::vector<AblationVariant>& variants, const AblationModules& modules) {
  for (const auto& v : variants) {
    if (v.uses_mreg == MRegUsage::kFull && !modules.full_warp) {
      throw ConfigError(fmt::format("{}: requires a coarse-to-fine registration checkpoint", v.id));
    }
    if (v.uses_mreg == MRegUsage::kFineOnly && !modules.fine_only_warp) {
      throw ConfigError(fmt::format("{}: requires a fine-only registration checkpoint", v.id));
    }
    if (v.uses_mdet && !modules.detector) {
      throw ConfigError(fmt::format("{}: requires a detector checkpoint", v.id));
    }
  }
}

MetricReport evaluate_translation(const PairedDataset& test, nets::ResnetGenerator& G) {
  std::vector<ImageSlice> predictions;
  std::vector<ImageSlice> references;
  std::vector<std::string> names;
  for (size_t i = 0; i < test.size(); ++i) {
    const auto& pair = test.pairs[i];
    if (!pair.reference) throw ValidationError("evaluation pairs need a reference image");
    predictions.push_back(cycle::translate(pair.x, G));
    references.push_back(*pair.reference);
    names.push_back(fmt::format("{}_{}", pair.subject_id, pair.x.slice_index));
  }
  return evaluate_pairs(predictions, references, names);
}

std::vector<AblationResult> run_ablation(const PairedDataset& train, const PairedDataset& test,
                                         const std::vector<AblationVariant>& variants, const AblationModules& modules,
                                         const cycle::CycleTrainConfig& base, const std::filesystem::path& output_dir) {
  check_prerequisites(variants, modules);
  std::vector<AblationResult> results;
  for (const auto& v : variants) {
    auto config = base;
    config.prior = v.prior;
    config.weights.lambda_prior = v.lambda_prior;
    if (!output_dir.empty()) {
      config.log_csv = output_dir / v.id / "cycle_log.csv";
      config.checkpoint_dir = output_dir / v.id;
    }
    auto model = cycle::train_cycle(train, config, warp_for(v, modules), v.uses_mdet ? modules.detector : nullptr);
    auto report = evaluate_translation(test, model.G);
    if (!output_dir.empty()) report.write_csv(output_dir / v.id / "metrics.csv");
    results.push_back({v, report});
  }
  if (!output_dir.empty()) write_ablation_summary(results, output_dir / "ablation_summary.csv");
  return results;
}

void write_ablation_summary(const std::vector<AblationResult>& results, const std::filesystem::path& path) {
  CsvLog log(path, {"variant", "mreg", "mdet", "psnr_mean", "psnr_std", "ssim_pct_mean", "ssim_pct_std", "n"});
  for (const auto& r : results) {
    log.row({r.variant.id, to_string(r.variant.uses_mreg), r.variant.uses_mdet ? "1" : "0",
             format_number(r.report.psnr_db.mean), format_number(r.report.psnr_db.stddev),
             format_number(r.report.ssim_pct.mean), format_number(r.report.ssim_pct.stddev),
             std::to_string(r.report.n())});
  }
}

}  // namespace mitia::eval
