#include "mitia/pipeline/run.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mitia/errors.hpp"
#include "mitia/eval/ablation.hpp"
#include "mitia/eval/metrics.hpp"
#include "mitia/io.hpp"
#include "mitia/mdet/detector.hpp"
#include "mitia/mreg/registration.hpp"
#include "mitia/random.hpp"
#include "mitia/synth/phantom.hpp"
#include "mitia/synth/training_set.hpp"

namespace mitia::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

RunConfig RunConfig::desk() {
  RunConfig c;
  c.profile = "desk";
  c.image_size = 32;
  c.width_mult = 0.25;
  c.mdet.epochs = 5;
  c.mreg.coarse_epochs = 5;
  c.mreg.fine_epochs = 5;
  c.cycle.epochs = 5;
  return c;
}

RunConfig RunConfig::paper() {
  RunConfig c;
  c.profile = "paper";
  c.data.train_subjects = 40;
  c.data.test_subjects = 10;
  c.data.slices_per_subject = 60;
  return c;
}

RunConfig RunConfig::preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw ConfigError(fmt::format("unknown profile '{}'", name));
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid config: " + what); };
  if (image_size < 32) fail("image_size must be >= 32 (patch discriminator)");
  if (width_mult <= 0.0) fail("width_mult must be positive");
  if (batch_size != 1) fail("batch_size must be 1");
  if (data.train_subjects < 1 || data.test_subjects < 1) fail("subject counts must be positive");
  if (data.slices_per_subject < 1) fail("slices_per_subject must be positive");
  if (data.probability < 0.0 || data.probability > 1.0) fail("probability must lie in [0, 1]");
  if (mdet.epochs < 0 || mreg.coarse_epochs < 0 || mreg.fine_epochs < 0 || cycle.epochs < 0) {
    fail("epochs must be >= 0");
  }
  if (histogram_bins < 1) fail("histogram_bins must be positive");
  if (cycle.pool_size < 0) fail("pool_size must be >= 0");
  if (mdet.aligned_fraction < 0.0 || mdet.aligned_fraction > 1.0) fail("aligned_fraction must lie in [0, 1]");
  try {
    cycle::LossWeights{cycle.lambda_cyc, cycle.lambda_prior, mreg.lambda_smooth, cycle.threshold}.validate();
    eval::parse_variants(ablation.variants);
  } catch (const ValidationError& e) {
    fail(e.what());
  }
}

std::string RunConfig::to_json() const {
  json j;
  j["profile"] = profile;
  j["seed"] = seed;
  j["image_size"] = image_size;
  j["width_mult"] = width_mult;
  j["batch_size"] = batch_size;
  j["optimizer"] = {{"beta1", beta1}, {"beta2", beta2}};
  j["data"] = {{"mode", to_string(data.mode)},
               {"train_subjects", data.train_subjects},
               {"test_subjects", data.test_subjects},
               {"slices_per_subject", data.slices_per_subject},
               {"slice_offset", data.slice_offset},
               {"probability", data.probability}};
  j["mdet"] = {{"epochs", mdet.epochs},
               {"learning_rate", mdet.learning_rate},
               {"num_blocks", mdet.num_blocks},
               {"aligned_fraction", mdet.aligned_fraction}};
  j["mreg"] = {{"coarse_epochs", mreg.coarse_epochs},
               {"fine_epochs", mreg.fine_epochs},
               {"learning_rate", mreg.learning_rate},
               {"lambda_smooth", mreg.lambda_smooth},
               {"bins", mreg.bins}};
  j["cycle"] = {{"epochs", cycle.epochs},
                {"learning_rate", cycle.learning_rate},
                {"num_blocks", cycle.num_blocks},
                {"lambda_cyc", cycle.lambda_cyc},
                {"lambda_prior", cycle.lambda_prior},
                {"threshold", cycle.threshold},
                {"adversarial", cycle::to_string(cycle.adversarial)},
                {"pool_size", cycle.pool_size}};
  j["ablation"] = {{"enabled", ablation.enabled}, {"variants", ablation.variants}};
  j["histogram_bins"] = histogram_bins;
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = preset(j.value("profile", std::string("paper")));
  try {
    c.seed = j.value("seed", c.seed);
    c.image_size = j.value("image_size", c.image_size);
    c.width_mult = j.value("width_mult", c.width_mult);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      c.beta1 = o.value("beta1", c.beta1);
      c.beta2 = o.value("beta2", c.beta2);
    }
    if (j.contains("data")) {
      const auto& d = j["data"];
      if (d.contains("mode")) c.data.mode = parse_dataset_mode(d["mode"].get<std::string>());
      c.data.train_subjects = d.value("train_subjects", c.data.train_subjects);
      c.data.test_subjects = d.value("test_subjects", c.data.test_subjects);
      c.data.slices_per_subject = d.value("slices_per_subject", c.data.slices_per_subject);
      c.data.slice_offset = d.value("slice_offset", c.data.slice_offset);
      c.data.probability = d.value("probability", c.data.probability);
    }
    if (j.contains("mdet")) {
      const auto& m = j["mdet"];
      c.mdet.epochs = m.value("epochs", c.mdet.epochs);
      c.mdet.learning_rate = m.value("learning_rate", c.mdet.learning_rate);
      c.mdet.num_blocks = m.value("num_blocks", c.mdet.num_blocks);
      c.mdet.aligned_fraction = m.value("aligned_fraction", c.mdet.aligned_fraction);
    }
    if (j.contains("mreg")) {
      const auto& m = j["mreg"];
      c.mreg.coarse_epochs = m.value("coarse_epochs", c.mreg.coarse_epochs);
      c.mreg.fine_epochs = m.value("fine_epochs", c.mreg.fine_epochs);
      c.mreg.learning_rate = m.value("learning_rate", c.mreg.learning_rate);
      c.mreg.lambda_smooth = m.value("lambda_smooth", c.mreg.lambda_smooth);
      c.mreg.bins = m.value("bins", c.mreg.bins);
    }
    if (j.contains("cycle")) {
      const auto& m = j["cycle"];
      c.cycle.epochs = m.value("epochs", c.cycle.epochs);
      c.cycle.learning_rate = m.value("learning_rate", c.cycle.learning_rate);
      c.cycle.num_blocks = m.value("num_blocks", c.cycle.num_blocks);
      c.cycle.lambda_cyc = m.value("lambda_cyc", c.cycle.lambda_cyc);
      c.cycle.lambda_prior = m.value("lambda_prior", c.cycle.lambda_prior);
      c.cycle.threshold = m.value("threshold", c.cycle.threshold);
      c.cycle.pool_size = m.value("pool_size", c.cycle.pool_size);
      if (m.contains("adversarial")) c.cycle.adversarial = cycle::parse_adversarial_form(m["adversarial"].get<std::string>());
    }
    if (j.contains("ablation")) {
      c.ablation.enabled = j["ablation"].value("enabled", c.ablation.enabled);
      c.ablation.variants = j["ablation"].value("variants", c.ablation.variants);
    }
    c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

void RunConfig::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config '" + path.string() + "'");
  out << to_json();
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

namespace {

enum Stream : uint64_t { kTrainCorpus = 1, kTestCorpus, kTrainPairs, kMDet, kMReg, kFineOnly, kCycle, kAblation };

uint64_t stage_seed(const RunConfig& c, Stream s) { return derive_seed(c.seed, {s}); }

OptimizerConfig optimizer(const RunConfig& c, double lr) { return {lr, c.beta1, c.beta2}; }

std::string dir_name(DatasetMode mode) {
  switch (mode) {
    case DatasetMode::kPaired:
      return "paired";
    case DatasetMode::kRandomAffine:
      return "ra";
    case DatasetMode::kMisSlice:
      return "ms";
    case DatasetMode::kRandomAffineMisSlice:
      return "ra_ms";
  }
  return "paired";
}

const std::vector<DatasetMode>& all_modes() {
  static const std::vector<DatasetMode> modes{DatasetMode::kPaired, DatasetMode::kRandomAffine,
                                              DatasetMode::kMisSlice, DatasetMode::kRandomAffineMisSlice};
  return modes;
}

fs::path mode_manifest(const RunLayout& l, DatasetMode mode) {
  return l.root / "data" / "modes" / dir_name(mode) / "manifest.json";
}

mdet::DetectorNetSpec detector_spec(const RunConfig& c) {
  mdet::DetectorNetSpec spec;
  spec.width_mult = c.width_mult;
  spec.num_blocks = c.mdet.num_blocks;
  return spec;
}

cycle::CycleTrainConfig cycle_config(const RunConfig& c, bool verbose) {
  cycle::CycleTrainConfig t;
  t.epochs = c.cycle.epochs;
  t.optimizer = optimizer(c, c.cycle.learning_rate);
  t.net.width_mult = c.width_mult;
  t.net.num_blocks = c.cycle.num_blocks;
  t.weights = {c.cycle.lambda_cyc, c.cycle.lambda_prior, c.mreg.lambda_smooth, c.cycle.threshold};
  t.adversarial = c.cycle.adversarial;
  t.pool_size = c.cycle.pool_size;
  t.prior = cycle::PriorForm::kWarpedMasked;
  t.seed = stage_seed(c, kCycle);
  t.verbose = verbose;
  return t;
}

void synth_stage(const RunConfig& c, const RunLayout& l) {
  auto split = [](const std::vector<synth::PhantomSubject>& corpus) {
    std::pair<std::vector<Volume>, std::vector<Volume>> out;
    for (const auto& s : corpus) {
      out.first.push_back(s.x);
      out.second.push_back(s.y);
    }
    return out;
  };
  const auto [train_x, train_y] = split(synth::make_phantom_corpus(
      stage_seed(c, kTrainCorpus), c.data.train_subjects, c.data.slices_per_subject, c.image_size));
  const auto [test_x, test_y] = split(synth::make_phantom_corpus(stage_seed(c, kTestCorpus), c.data.test_subjects,
                                                                 c.data.slices_per_subject, c.image_size));
  synth::TrainingSetOptions options;
  options.slice_offset = c.data.slice_offset;
  options.probability = c.data.probability;
  options.seed = stage_seed(c, kTrainPairs);
  for (auto mode : all_modes()) {
    options.mode = mode;
    io::write_dataset(synth::build_training_set(train_x, train_y, options), mode_manifest(l, mode).parent_path());
  }
  options.mode = c.data.mode;
  io::write_dataset(synth::build_training_set(train_x, train_y, options), l.train_manifest().parent_path());
  io::write_dataset(synth::build_test_set(test_x, test_y), l.test_manifest().parent_path());
}

void mdet_stage(const RunConfig& c, const RunLayout& l, bool verbose) {
  const auto train = io::load_dataset(l.train_manifest());
  std::vector<ImageSlice> sources;
  for (const auto& pair : train.pairs) sources.push_back(pair.x);
  mdet::DetectorTrainConfig t;
  t.epochs = c.mdet.epochs;
  t.optimizer = optimizer(c, c.mdet.learning_rate);
  t.net = detector_spec(c);
  t.seed = stage_seed(c, kMDet);
  t.aligned_fraction = c.mdet.aligned_fraction;
  t.log_csv = l.mdet_dir() / "log.csv";
  t.checkpoint = l.detector();
  t.verbose = verbose;
  mdet::train_detector(sources, t);
  write_sidecar(l.mdet_dir(), {c.width_mult, c.mdet.num_blocks, c.image_size});
}

mreg::RegTrainConfig reg_config(const RunConfig& c, uint64_t seed, bool verbose) {
  mreg::RegTrainConfig t;
  t.optimizer = optimizer(c, c.mreg.learning_rate);
  t.width_mult = c.width_mult;
  t.lambda_smooth = c.mreg.lambda_smooth;
  t.bins = c.mreg.bins;
  t.seed = seed;
  t.verbose = verbose;
  return t;
}

void mreg_stage(const RunConfig& c, const RunLayout& l, bool verbose) {
  const auto train = io::load_dataset(l.train_manifest());
  const auto detector = mdet::as_pair_map(mdet::load_detector(l.detector(), detector_spec(c)));
  auto t = reg_config(c, stage_seed(c, kMReg), verbose);
  t.epochs = c.mreg.coarse_epochs;
  t.log_csv = l.mreg_dir() / "coarse_log.csv";
  t.checkpoint = l.mreg_dir() / "coarse.pt";
  auto coarse = mreg::train_coarse(train, t, detector);
  t.epochs = c.mreg.fine_epochs;
  t.log_csv = l.mreg_dir() / "fine_log.csv";
  t.checkpoint = l.mreg_dir() / "fine.pt";
  mreg::train_fine(train, coarse, detector, t);
  write_sidecar(l.mreg_dir(), {c.width_mult, 0, c.image_size});
}

void cycle_stage(const RunConfig& c, const RunLayout& l, bool verbose) {
  const auto train = io::load_dataset(l.train_manifest());
  const auto detector = mdet::as_pair_map(mdet::load_detector(l.detector(), detector_spec(c)));
  const auto warp = mreg::as_pair_map(mreg::load_mreg(l.mreg_dir(), c.image_size, c.width_mult));
  auto t = cycle_config(c, verbose);
  t.log_csv = l.cycle_dir() / "log.csv";
  t.checkpoint_dir = l.cycle_dir();
  cycle::train_cycle(train, t, warp, detector);
  write_sidecar(l.cycle_dir(), {c.width_mult, c.cycle.num_blocks, c.image_size});
}

void write_summary(const eval::MetricReport& report, const fs::path& path) {
  json j = {{"n", report.n()},
            {"psnr_db_mean", format_number(report.psnr_db.mean)},
            {"psnr_db_std", format_number(report.psnr_db.stddev)},
            {"ssim_pct_mean", format_number(report.ssim_pct.mean)},
            {"ssim_pct_std", format_number(report.ssim_pct.stddev)}};
  std::ofstream(path) << j.dump(2) << "\n";
}

void evaluate_stage(const RunConfig& c, const RunLayout& l) {
  const auto test = io::load_dataset(l.test_manifest());
  cycle::CycleNetSpec spec;
  spec.width_mult = c.width_mult;
  spec.num_blocks = c.cycle.num_blocks;
  auto model = cycle::CycleModel::load(l.cycle_dir(), spec);
  const auto dir = l.metrics_dir();
  fs::create_directories(dir / "predictions");
  for (size_t i = 0; i < test.size(); ++i) {
    io::save_slice(cycle::translate(test.pairs[i].x, model.G), dir / "predictions" / fmt::format("{:04d}.f32", i),
                   io::SliceFormat::kRawF32);
  }
  auto report = eval::evaluate_translation(test, model.G);
  report.write_csv(dir / "metrics.csv");
  write_summary(report, dir / "summary.json");

  auto net = mdet::load_detector(l.detector(), detector_spec(c));
  const auto detector = mdet::as_pair_map(net);
  auto full = mreg::load_mreg(l.mreg_dir(), c.image_size, c.width_mult);
  const auto warp_full = mreg::as_pair_map(full);
  const auto warp_coarse = mreg::as_pair_map(mreg::MRegModel{full.coarse, nullptr});

  const auto train = io::load_dataset(l.train_manifest());
  eval::error_histogram(train, detector, warp_full, c.histogram_bins).write_csv(dir / "error_hist.csv");

  CsvLog table(dir / "misalignment_errors.csv", {"dataset", "original_pct", "original_std", "coarse_pct",
                                                 "coarse_std", "coarse_fine_pct", "coarse_fine_std"});
  for (auto mode : all_modes()) {
    const auto ds = io::load_dataset(mode_manifest(l, mode));
    const auto before = mdet::mean_misalignment_error(ds, detector);
    const auto coarse = mdet::mean_misalignment_error(ds, detector, warp_coarse);
    const auto fine = mdet::mean_misalignment_error(ds, detector, warp_full);
    table.row({to_string(mode), before.mean_percent(), before.stddev_percent(), coarse.mean_percent(),
               coarse.stddev_percent(), fine.mean_percent(), fine.stddev_percent()});
  }
}

void ablation_stage(const RunConfig& c, const RunLayout& l, bool verbose) {
  const auto variants = eval::parse_variants(c.ablation.variants);
  const auto train = io::load_dataset(l.train_manifest());
  const auto test = io::load_dataset(l.test_manifest());
  auto detector_net = mdet::load_detector(l.detector(), detector_spec(c));
  eval::AblationModules modules;
  modules.detector = mdet::as_pair_map(detector_net);
  modules.full_warp = mreg::as_pair_map(mreg::load_mreg(l.mreg_dir(), c.image_size, c.width_mult));
  const bool needs_fine_only = std::any_of(variants.begin(), variants.end(), [](const auto& v) {
    return v.uses_mreg == eval::MRegUsage::kFineOnly;
  });
  if (needs_fine_only) {
    const auto fine_path = l.fine_only_dir() / "fine.pt";
    if (!fs::exists(fine_path)) {
      auto t = reg_config(c, stage_seed(c, kFineOnly), verbose);
      t.epochs = c.mreg.fine_epochs;
      t.log_csv = l.fine_only_dir() / "fine_log.csv";
      t.checkpoint = fine_path;
      mreg::train_fine(train, nullptr, modules.detector, t);
    }
    modules.fine_only_warp = mreg::as_pair_map(mreg::load_mreg(l.fine_only_dir(), c.image_size, c.width_mult));
  }
  auto base = cycle_config(c, verbose);
  base.seed = stage_seed(c, kAblation);
  eval::run_ablation(train, test, variants, modules, base, l.ablation_dir());
}

}  // namespace

void run_stage(const std::string& stage, const RunConfig& config, const RunLayout& layout, bool verbose) {
  if (stage == "synth") return synth_stage(config, layout);
  if (stage == "mdet") return mdet_stage(config, layout, verbose);
  if (stage == "mreg") return mreg_stage(config, layout, verbose);
  if (stage == "cycle") return cycle_stage(config, layout, verbose);
  if (stage == "evaluate") return evaluate_stage(config, layout);
  if (stage == "ablate") return ablation_stage(config, layout, verbose);
  throw ConfigError(fmt::format("unknown stage '{}'", stage));
}

PipelineResult run_pipeline(const RunConfig& config, const fs::path& run_dir, bool verbose) {
  config.validate();
  torch::set_num_threads(1);
  RunLayout layout{run_dir};
  fs::create_directories(run_dir);
  if (fs::exists(layout.config())) {
    if (RunConfig::load(layout.config()).to_json() != config.to_json()) {
      throw ConfigError("run directory '" + run_dir.string() + "' holds a different configuration");
    }
  } else {
    config.save(layout.config());
  }

  PipelineResult result{run_dir, {}, {}};
  for (const auto& stage : stage_names()) {
    if (stage == "ablate" && !config.ablation.enabled) continue;
    if (fs::exists(layout.marker(stage))) {
      result.stages_skipped.push_back(stage);
      continue;
    }
    if (verbose) std::cerr << fmt::format("[pipeline] stage {}\n", stage);
    try {
      run_stage(stage, config, layout, verbose);
    } catch (const std::exception& e) {
      throw Error(fmt::format("stage '{}' failed: {}", stage, e.what()));
    }
    fs::create_directories(layout.marker(stage).parent_path());
    std::ofstream(layout.marker(stage)) << stage << "\n";
    result.stages_run.push_back(stage);
  }
  write_report(run_dir);
  write_run_manifest(run_dir);
  return result;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buffer(1 << 16);
  while (in) {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buffer.data(), static_cast<size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

void write_run_manifest(const fs::path& run_dir) {
  RunLayout layout{run_dir};
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (entry.is_regular_file() && entry.path() != layout.manifest()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  json list = json::array();
  for (const auto& f : files) {
    list.push_back({{"path", fs::relative(f, run_dir).generic_string()},
                    {"bytes", fs::file_size(f)},
                    {"sha256", sha256_file(f)}});
  }
  std::ofstream(layout.manifest()) << json{{"files", list}}.dump(2) << "\n";
}

void write_sidecar(const fs::path& directory, const NetSidecar& sidecar) {
  fs::create_directories(directory);
  json j = {{"width_mult", sidecar.width_mult}, {"num_blocks", sidecar.num_blocks}, {"image_size", sidecar.image_size}};
  std::ofstream(directory / "spec.json") << j.dump(2) << "\n";
}

NetSidecar read_sidecar(const fs::path& directory, const NetSidecar& fallback) {
  std::ifstream in(directory / "spec.json");
  if (!in) return fallback;
  try {
    const auto j = json::parse(in);
    return {j.value("width_mult", fallback.width_mult), j.value("num_blocks", fallback.num_blocks),
            j.value("image_size", fallback.image_size)};
  } catch (const json::exception& e) {
    throw ConfigError("malformed spec.json in " + directory.string() + ": " + e.what());
  }
}

std::string select_device(const std::string& name) {
  std::string device = name;
  if (device.empty()) {
    const char* env = std::getenv("MITIA_DEVICE");
    device = env != nullptr ? env : "cpu";
  }
  if (device != "cpu") {
    throw ConfigError(fmt::format("device '{}' is not supported by this build; use MITIA_DEVICE=cpu", device));
  }
  return device;
}

}  // namespace mitia::pipeline
