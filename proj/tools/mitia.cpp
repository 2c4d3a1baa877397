#include <torch/torch.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mitia/cycle/translation.hpp"
#include "mitia/errors.hpp"
#include "mitia/eval/ablation.hpp"
#include "mitia/eval/metrics.hpp"
#include "mitia/io.hpp"
#include "mitia/mdet/detector.hpp"
#include "mitia/mreg/registration.hpp"
#include "mitia/pipeline/run.hpp"
#include "mitia/random.hpp"
#include "mitia/synth/phantom.hpp"
#include "mitia/synth/training_set.hpp"

namespace fs = std::filesystem;
using namespace mitia;
using pipeline::NetSidecar;

namespace {

struct Globals {
  uint64_t seed = 0;
  bool verbose = false;
};

std::vector<fs::path> slice_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".f32" || ext == ".png")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Slices keyed by name, from a directory or from one role of a manifest.
std::vector<std::pair<std::string, ImageSlice>> named_slices(const fs::path& path, bool reference) {
  std::vector<std::pair<std::string, ImageSlice>> out;
  if (path.extension() == ".json") {
    const auto ds = io::load_dataset(path);
    for (size_t i = 0; i < ds.pairs.size(); ++i) {
      const auto& pair = ds.pairs[i];
      const auto& slice = reference ? pair.reference.value_or(pair.y_tilde) : pair.x;
      out.emplace_back(fmt::format("{:04d}", i), slice);
    }
    return out;
  }
  for (const auto& f : slice_files(path)) out.emplace_back(f.stem().string(), io::load_slice(f));
  return out;
}

mdet::DetectorNet load_detector_dir(const fs::path& dir) {
  const auto side = pipeline::read_sidecar(dir, {});
  mdet::DetectorNetSpec spec;
  spec.width_mult = side.width_mult;
  spec.num_blocks = side.num_blocks;
  return mdet::load_detector(dir / "detector.pt", spec);
}

mreg::MRegModel load_mreg_dir(const fs::path& dir, int64_t image_size) {
  const auto side = pipeline::read_sidecar(dir, {});
  return mreg::load_mreg(dir, side.image_size > 0 ? side.image_size : image_size, side.width_mult);
}

cycle::PriorForm parse_prior(const std::string& name) {
  static const std::map<std::string, cycle::PriorForm> forms{{"none", cycle::PriorForm::kNone},
                                                             {"plain", cycle::PriorForm::kPlain},
                                                             {"warped", cycle::PriorForm::kWarped},
                                                             {"masked", cycle::PriorForm::kMasked},
                                                             {"full", cycle::PriorForm::kWarpedMasked}};
  auto it = forms.find(name);
  if (it == forms.end()) throw ConfigError("unknown prior form '" + name + "'");
  return it->second;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Misalignment-robust multi-modal image translation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Base random seed")->capture_default_str();
  app.add_flag("-v,--verbose", g.verbose, "Print per-epoch progress");

  // synth-data
  auto* synth_cmd = app.add_subcommand("synth-data", "Generate a phantom dataset");
  std::string mode = "RA+MS";
  int size = 64;
  int n_subjects = 4;
  int slices = 12;
  int offset = 3;
  double prob = 0.5;
  bool test_set = false;
  fs::path output;
  synth_cmd->add_option("--mode", mode, "Paired, RA, MS or RA+MS")->capture_default_str();
  synth_cmd->add_option("--size", size, "Image size")->capture_default_str();
  synth_cmd->add_option("--n-subjects", n_subjects)->capture_default_str();
  synth_cmd->add_option("--slices-per-subject", slices)->capture_default_str();
  synth_cmd->add_option("--offset", offset, "Mis-slice offset")->capture_default_str();
  synth_cmd->add_option("--prob", prob, "Mis-slice probability")->capture_default_str();
  synth_cmd->add_flag("--test", test_set, "Emit aligned evaluation pairs with references");
  synth_cmd->add_option("--output", output, "Output directory")->required();

  // train-mdet
  auto* mdet_cmd = app.add_subcommand("train-mdet", "Train the misalignment-error detector");
  fs::path phantom_config;
  fs::path dataset;
  int epochs = -1;
  double width_mult = 1.0;
  double lr = 1e-4;
  int blocks = 9;
  double aligned_fraction = 0.2;
  auto* source_opt = mdet_cmd->add_option("--phantom-config", phantom_config,
                                          "JSON {size, n_subjects, slices_per_subject}");
  mdet_cmd->add_option("--dataset", dataset, "Manifest whose x slices are the sources")->excludes(source_opt);
  mdet_cmd->add_option("--epochs", epochs, "Epochs (default 80)");
  mdet_cmd->add_option("--width-mult", width_mult)->capture_default_str();
  mdet_cmd->add_option("--lr", lr)->capture_default_str();
  mdet_cmd->add_option("--blocks", blocks, "Residual blocks")->capture_default_str();
  mdet_cmd->add_option("--aligned-fraction", aligned_fraction)->capture_default_str();
  mdet_cmd->add_option("--output", output, "Checkpoint directory")->required();

  // train-mreg
  auto* mreg_cmd = app.add_subcommand("train-mreg", "Train coarse and fine registration");
  fs::path mdet_ckpt;
  double lambda_smooth = 1.0;
  bool fine_only = false;
  mreg_cmd->add_option("--dataset", dataset)->required();
  mreg_cmd->add_option("--mdet-checkpoint", mdet_ckpt, "Detector directory")->required();
  mreg_cmd->add_option("--epochs", epochs, "Epochs per network (default 80)");
  mreg_cmd->add_option("--lr", lr)->capture_default_str();
  mreg_cmd->add_option("--lambda-smooth", lambda_smooth)->capture_default_str();
  mreg_cmd->add_option("--width-mult", width_mult)->capture_default_str();
  mreg_cmd->add_flag("--fine-only", fine_only, "Train R_F alone, without R_C");
  mreg_cmd->add_option("--output", output, "Checkpoint directory")->required();

  // train-cycle
  auto* cycle_cmd = app.add_subcommand("train-cycle", "Train the translation model");
  fs::path mreg_ckpt;
  double lambda_cyc = 10.0;
  double lambda_prior = 30.0;
  std::string adv = "log";
  std::string prior = "full";
  int pool_size = 0;
  cycle_cmd->add_option("--dataset", dataset)->required();
  cycle_cmd->add_option("--mreg-checkpoint", mreg_ckpt, "Registration directory");
  cycle_cmd->add_option("--mdet-checkpoint", mdet_ckpt, "Detector directory");
  cycle_cmd->add_option("--epochs", epochs, "Epochs (default 60)");
  cycle_cmd->add_option("--lambda-cyc", lambda_cyc)->capture_default_str();
  cycle_cmd->add_option("--lambda-prior", lambda_prior)->capture_default_str();
  cycle_cmd->add_option("--adv", adv, "log or lsgan")->capture_default_str();
  cycle_cmd->add_option("--prior", prior, "none, plain, warped, masked or full")->capture_default_str();
  cycle_cmd->add_option("--pool-size", pool_size, "Discriminator history buffer (0 = off)")->capture_default_str();
  cycle_cmd->add_option("--width-mult", width_mult)->capture_default_str();
  cycle_cmd->add_option("--blocks", blocks)->capture_default_str();
  cycle_cmd->add_option("--lr", lr)->capture_default_str();
  cycle_cmd->add_option("--output", output, "Checkpoint directory")->required();

  // translate
  auto* translate_cmd = app.add_subcommand("translate", "Translate a directory of slices with G");
  fs::path input;
  fs::path checkpoint;
  std::string format = "rawf32";
  translate_cmd->add_option("--input", input, "Directory of .f32 / .png slices, or a dataset manifest")->required();
  translate_cmd->add_option("--checkpoint", checkpoint, "Translation checkpoint directory")->required();
  translate_cmd->add_option("--output", output, "Output directory")->required();
  translate_cmd->add_option("--format", format, "rawf32 or png16")->capture_default_str();

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "PSNR / SSIM of predictions against references");
  fs::path pred_dir;
  fs::path ref_dir;
  evaluate_cmd->add_option("--pred", pred_dir)->required();
  evaluate_cmd->add_option("--ref", ref_dir, "Reference directory, or a test manifest")->required();
  evaluate_cmd->add_option("--output", output, "CSV path (default: stdout summary only)");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate ablation variants");
  std::string variants = "V1,V2,V3,V4,V5,V6";
  fs::path test_dataset;
  fs::path fine_only_ckpt;
  ablate_cmd->add_option("--variants", variants)->capture_default_str();
  ablate_cmd->add_option("--dataset", dataset, "Training manifest")->required();
  ablate_cmd->add_option("--test-dataset", test_dataset, "Evaluation manifest with references")->required();
  ablate_cmd->add_option("--mdet-checkpoint", mdet_ckpt);
  ablate_cmd->add_option("--mreg-checkpoint", mreg_ckpt);
  ablate_cmd->add_option("--fine-only-checkpoint", fine_only_ckpt);
  ablate_cmd->add_option("--epochs", epochs, "Epochs (default 60)");
  ablate_cmd->add_option("--width-mult", width_mult)->capture_default_str();
  ablate_cmd->add_option("--blocks", blocks)->capture_default_str();
  ablate_cmd->add_option("--lr", lr)->capture_default_str();
  ablate_cmd->add_option("--output", output, "Output directory")->required();

  // error-hist
  auto* hist_cmd = app.add_subcommand("error-hist", "Per-pair detector error distribution");
  int bins = 20;
  hist_cmd->add_option("--dataset", dataset)->required();
  hist_cmd->add_option("--mdet-checkpoint", mdet_ckpt)->required();
  hist_cmd->add_option("--mreg-checkpoint", mreg_ckpt);
  hist_cmd->add_option("--bins", bins)->capture_default_str();
  hist_cmd->add_option("--output", output, "CSV path")->required();

  // detect
  auto* detect_cmd = app.add_subcommand("detect", "Detector error maps for a dataset");
  detect_cmd->add_option("--dataset", dataset)->required();
  detect_cmd->add_option("--mdet-checkpoint", mdet_ckpt)->required();
  detect_cmd->add_option("--output", output, "Output directory")->required();

  // pipeline
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run synth, mdet, mreg, cycle and evaluate");
  fs::path config_path;
  std::string profile = "desk";
  fs::path run_dir;
  bool ablate = false;
  pipeline_cmd->add_option("--config", config_path, "RunConfig JSON");
  pipeline_cmd->add_option("--profile", profile, "desk or paper (without --config)")->capture_default_str();
  pipeline_cmd->add_option("--run-dir", run_dir)->required();
  pipeline_cmd->add_flag("--ablate", ablate, "Also run the V1-V6 ablation");
  pipeline_cmd->add_flag("--print-config", "Print the materialized config and exit");

  // report
  auto* report_cmd = app.add_subcommand("report", "Markdown summary and plots of a run");
  report_cmd->add_option("--run-dir", run_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    pipeline::select_device();
    torch::set_num_threads(1);
    torch::manual_seed(g.seed);

    if (*synth_cmd) {
      std::vector<Volume> vx;
      std::vector<Volume> vy;
      for (auto& s : synth::make_phantom_corpus(g.seed, n_subjects, slices, size)) {
        vx.push_back(std::move(s.x));
        vy.push_back(std::move(s.y));
      }
      PairedDataset ds;
      if (test_set) {
        ds = synth::build_test_set(vx, vy);
      } else {
        synth::TrainingSetOptions o;
        o.mode = parse_dataset_mode(mode);
        o.slice_offset = offset;
        o.probability = prob;
        o.seed = derive_seed(g.seed, {3});
        ds = synth::build_training_set(vx, vy, o);
      }
      std::cout << io::write_dataset(ds, output).string() << "\n";
    } else if (*mdet_cmd) {
      std::vector<ImageSlice> sources;
      if (!dataset.empty()) {
        for (const auto& p : io::load_dataset(dataset).pairs) sources.push_back(p.x);
      } else {
        nlohmann::json pc = nlohmann::json::object();
        if (!phantom_config.empty()) {
          std::ifstream in(phantom_config);
          if (!in) throw LoadError("cannot read " + phantom_config.string());
          pc = nlohmann::json::parse(in);
        }
        for (const auto& s : synth::make_phantom_corpus(g.seed, pc.value("n_subjects", 4),
                                                        pc.value("slices_per_subject", 12), pc.value("size", 64))) {
          for (const auto& slice : s.x.slices) sources.push_back(slice);
        }
      }
      mdet::DetectorTrainConfig t;
      t.epochs = epochs >= 0 ? epochs : 80;
      t.optimizer.learning_rate = lr;
      t.net.width_mult = width_mult;
      t.net.num_blocks = blocks;
      t.aligned_fraction = aligned_fraction;
      t.seed = g.seed;
      t.log_csv = output / "log.csv";
      t.checkpoint = output / "detector.pt";
      t.verbose = g.verbose;
      mdet::train_detector(sources, t);
      pipeline::write_sidecar(output, {width_mult, blocks, static_cast<int>(sources.front().height())});
    } else if (*mreg_cmd) {
      const auto ds = io::load_dataset(dataset);
      const auto detector = mdet::as_pair_map(load_detector_dir(mdet_ckpt));
      mreg::RegTrainConfig t;
      t.epochs = epochs >= 0 ? epochs : 80;
      t.optimizer.learning_rate = lr;
      t.width_mult = width_mult;
      t.lambda_smooth = lambda_smooth;
      t.seed = g.seed;
      t.verbose = g.verbose;
      mreg::CoarseRegNet coarse{nullptr};
      if (!fine_only) {
        t.log_csv = output / "coarse_log.csv";
        t.checkpoint = output / "coarse.pt";
        coarse = mreg::train_coarse(ds, t, detector);
      }
      t.log_csv = output / "fine_log.csv";
      t.checkpoint = output / "fine.pt";
      mreg::train_fine(ds, coarse, detector, t);
      pipeline::write_sidecar(output, {width_mult, 0, static_cast<int>(ds.pairs.front().x.height())});
    } else if (*cycle_cmd) {
      const auto ds = io::load_dataset(dataset);
      cycle::CycleTrainConfig t;
      t.epochs = epochs >= 0 ? epochs : 60;
      t.optimizer.learning_rate = lr;
      t.net.width_mult = width_mult;
      t.net.num_blocks = blocks;
      t.weights.lambda_cyc = lambda_cyc;
      t.weights.lambda_prior = lambda_prior;
      t.adversarial = cycle::parse_adversarial_form(adv);
      t.pool_size = pool_size;
      t.prior = parse_prior(prior);
      t.seed = g.seed;
      t.log_csv = output / "log.csv";
      t.checkpoint_dir = output;
      t.verbose = g.verbose;
      PairMap warp;
      PairMap detector;
      if (t.weights.lambda_prior > 0 && cycle::uses_warp(t.prior)) {
        if (mreg_ckpt.empty()) throw ConfigError("--mreg-checkpoint is required for this prior form");
        warp = mreg::as_pair_map(load_mreg_dir(mreg_ckpt, ds.pairs.front().x.height()));
      }
      if (t.weights.lambda_prior > 0 && cycle::uses_detector(t.prior)) {
        if (mdet_ckpt.empty()) throw ConfigError("--mdet-checkpoint is required for this prior form");
        detector = mdet::as_pair_map(load_detector_dir(mdet_ckpt));
      }
      cycle::train_cycle(ds, t, warp, detector);
      pipeline::write_sidecar(output, {width_mult, blocks, static_cast<int>(ds.pairs.front().x.height())});
    } else if (*translate_cmd) {
      const auto side = pipeline::read_sidecar(checkpoint, {});
      cycle::CycleNetSpec spec;
      spec.width_mult = side.width_mult;
      spec.num_blocks = side.num_blocks;
      auto model = cycle::CycleModel::load(checkpoint, spec);
      const auto fmt_out = io::parse_slice_format(format);
      fs::create_directories(output);
      for (const auto& [name, slice] : named_slices(input, false)) {
        auto out = cycle::translate(slice, model.G);
        io::save_slice(out, output / (name + (fmt_out == io::SliceFormat::kRawF32 ? ".f32" : ".png")), fmt_out);
      }
    } else if (*evaluate_cmd) {
      std::vector<ImageSlice> preds;
      std::vector<ImageSlice> refs;
      std::vector<std::string> names;
      std::map<std::string, ImageSlice> by_name;
      for (auto& [name, slice] : named_slices(ref_dir, true)) by_name.emplace(name, slice);
      for (auto& [name, slice] : named_slices(pred_dir, false)) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw LoadError("no reference for " + name);
        preds.push_back(slice);
        refs.push_back(it->second);
        names.push_back(name);
      }
      const auto report = eval::evaluate_pairs(preds, refs, names);
      if (!output.empty()) report.write_csv(output);
      std::cout << fmt::format("n={} psnr_db={:.4f}+-{:.4f} ssim_pct={:.4f}+-{:.4f}\n", report.n(),
                               report.psnr_db.mean, report.psnr_db.stddev, report.ssim_pct.mean,
                               report.ssim_pct.stddev);
    } else if (*ablate_cmd) {
      const auto train = io::load_dataset(dataset);
      const auto test = io::load_dataset(test_dataset);
      const auto size0 = train.pairs.front().x.height();
      eval::AblationModules modules;
      if (!mdet_ckpt.empty()) modules.detector = mdet::as_pair_map(load_detector_dir(mdet_ckpt));
      if (!mreg_ckpt.empty()) modules.full_warp = mreg::as_pair_map(load_mreg_dir(mreg_ckpt, size0));
      if (!fine_only_ckpt.empty()) modules.fine_only_warp = mreg::as_pair_map(load_mreg_dir(fine_only_ckpt, size0));
      cycle::CycleTrainConfig base;
      base.epochs = epochs >= 0 ? epochs : 60;
      base.optimizer.learning_rate = lr;
      base.net.width_mult = width_mult;
      base.net.num_blocks = blocks;
      base.seed = g.seed;
      base.verbose = g.verbose;
      const auto results = eval::run_ablation(train, test, eval::parse_variants(variants), modules, base, output);
      for (const auto& r : results) {
        std::cout << fmt::format("{} psnr_db={:.4f} ssim_pct={:.4f}\n", r.variant.id, r.report.psnr_db.mean,
                                 r.report.ssim_pct.mean);
      }
    } else if (*hist_cmd) {
      const auto ds = io::load_dataset(dataset);
      const auto detector = mdet::as_pair_map(load_detector_dir(mdet_ckpt));
      PairMap warp;
      if (!mreg_ckpt.empty()) warp = mreg::as_pair_map(load_mreg_dir(mreg_ckpt, ds.pairs.front().x.height()));
      eval::error_histogram(ds, detector, warp, bins).write_csv(output);
    } else if (*detect_cmd) {
      const auto ds = io::load_dataset(dataset);
      auto net = load_detector_dir(mdet_ckpt);
      fs::create_directories(output / "maps");
      CsvLog log(output / "detect.csv", {"pair", "subject", "mean_error_pct"});
      for (size_t i = 0; i < ds.size(); ++i) {
        const auto map = mdet::detect(ds.pairs[i].x, ds.pairs[i].y_tilde, net);
        // Error maps live on [0, 1]; store them on the [-1, 1] slice scale.
        io::save_slice(ImageSlice(map.values * 2.0 - 1.0, "error"), output / "maps" / fmt::format("{:04d}.png", i),
                       io::SliceFormat::kPng16);
        log.row({std::to_string(i), ds.pairs[i].subject_id, mdet::format_percent(map.values.mean().item<double>())});
      }
    } else if (*pipeline_cmd) {
      auto config = config_path.empty() ? pipeline::RunConfig::preset(profile) : pipeline::RunConfig::load(config_path);
      if (app.count("--seed") > 0) config.seed = g.seed;
      if (ablate) config.ablation.enabled = true;
      if (pipeline_cmd->count("--print-config") > 0) {
        std::cout << config.to_json();
        return 0;
      }
      const auto result = pipeline::run_pipeline(config, run_dir, g.verbose);
      for (const auto& s : result.stages_run) std::cout << "ran " << s << "\n";
      for (const auto& s : result.stages_skipped) std::cout << "skipped " << s << "\n";
    } else if (*report_cmd) {
      const auto result = pipeline::write_report(run_dir);
      std::cout << result.markdown.string() << "\n";
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
