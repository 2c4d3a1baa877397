#include "mitia/cycle/translation.hpp"

#include <iostream>

#include <fmt/format.h>

#include "mitia/errors.hpp"
#include "mitia/mdet/detector.hpp"
#include "mitia/random.hpp"

namespace mitia::cycle {

void LossWeights::validate() const {
  if (lambda_cyc < 0 || lambda_prior < 0 || lambda_smooth < 0) throw ValidationError("loss weights must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must lie in (0, 1)");
}

std::string to_string(AdversarialForm form) { return form == AdversarialForm::kLog ? "log" : "lsgan"; }

AdversarialForm parse_adversarial_form(std::string_view text) {
  if (text == "log") return AdversarialForm::kLog;
  if (text == "lsgan") return AdversarialForm::kLeastSquares;
  throw ValidationError(fmt::format("unknown adversarial form '{}'", text));
}

bool uses_warp(PriorForm form) { return form == PriorForm::kWarped || form == PriorForm::kWarpedMasked; }
bool uses_detector(PriorForm form) { return form == PriorForm::kMasked || form == PriorForm::kWarpedMasked; }

CycleModel CycleModel::create(const CycleNetSpec& spec) {
  nets::ResnetGeneratorOptions g;
  g.base_width = spec.generator_width;
  g.num_blocks = spec.num_blocks;
  g.width_mult = spec.width_mult;
  nets::PatchDiscriminatorOptions d;
  d.base_width = spec.discriminator_width;
  d.width_mult = spec.width_mult;
  return {nets::ResnetGenerator(g), nets::ResnetGenerator(g), nets::PatchDiscriminator(d),
          nets::PatchDiscriminator(d)};
}

CycleModel CycleModel::load(const std::filesystem::path& directory, const CycleNetSpec& spec) {
  auto model = create(spec);
  for (const char* name : {"G.pt", "F.pt", "D_X.pt", "D_Y.pt"}) {
    if (!std::filesystem::exists(directory / name)) {
      throw ConfigError("translation checkpoint not found: " + (directory / name).string());
    }
  }
  nets::load_module(model.G, directory / "G.pt");
  nets::load_module(model.F, directory / "F.pt");
  nets::load_module(model.D_X, directory / "D_X.pt");
  nets::load_module(model.D_Y, directory / "D_Y.pt");
  return model;
}

void CycleModel::save(const std::filesystem::path& directory) const {
  nets::save_module(G, directory / "G.pt");
  nets::save_module(F, directory / "F.pt");
  nets::save_module(D_X, directory / "D_X.pt");
  nets::save_module(D_Y, directory / "D_Y.pt");
}

std::vector<torch::Tensor> CycleModel::generator_parameters() const {
  auto params = G->parameters();
  auto more = F->parameters();
  params.insert(params.end(), more.begin(), more.end());
  return params;
}

std::vector<torch::Tensor> CycleModel::discriminator_parameters() const {
  auto params = D_X->parameters();
  auto more = D_Y->parameters();
  params.insert(params.end(), more.begin(), more.end());
  return params;
}

torch::Tensor bce_with_logits(const torch::Tensor& logits, double target) {
  return (logits.clamp_min(0.0) - logits * target + torch::log1p(torch::exp(-logits.abs()))).mean();
}

torch::Tensor generator_adversarial(const torch::Tensor& fake_logits, AdversarialForm form) {
  if (form == AdversarialForm::kLeastSquares) return (fake_logits - 1.0).square().mean();
  return bce_with_logits(fake_logits, 1.0);
}

torch::Tensor discriminator_adversarial(const torch::Tensor& real_logits, const torch::Tensor& fake_logits,
                                        AdversarialForm form) {
  if (form == AdversarialForm::kLeastSquares) {
    return (real_logits - 1.0).square().mean() + fake_logits.square().mean();
  }
  return bce_with_logits(real_logits, 1.0) + bce_with_logits(fake_logits, 0.0);
}

torch::Tensor cycle_loss(const torch::Tensor& x_f, const torch::Tensor& y_tilde, const ImageMap& G,
                         const ImageMap& F) {
  require_same_shape(x_f, y_tilde, "cycle_loss");
  return (F(G(x_f)) - x_f).abs().mean() + (G(F(y_tilde)) - y_tilde).abs().mean();
}

AdversarialTerms adversarial_loss(const torch::Tensor& x_f, const torch::Tensor& y_tilde, const ImageMap& G,
                                  const ImageMap& F, const ImageMap& D_X, const ImageMap& D_Y,
                                  AdversarialForm form) {
  require_same_shape(x_f, y_tilde, "adversarial_loss");
  auto fake_y = G(x_f);
  auto fake_x = F(y_tilde);
  auto gen = generator_adversarial(D_Y(fake_y), form) + generator_adversarial(D_X(fake_x), form);
  auto disc = discriminator_adversarial(D_Y(y_tilde), D_Y(fake_y.detach()), form) +
              discriminator_adversarial(D_X(x_f), D_X(fake_x.detach()), form);
  return {gen, disc};
}

torch::Tensor weighted_l1(const torch::Tensor& prediction, const torch::Tensor& target, const torch::Tensor& weights) {
  require_same_shape(prediction, target, "prior loss");
  return ((prediction - target) * weights).abs().mean();
}

torch::Tensor prior_loss(const torch::Tensor& x, const torch::Tensor& y_tilde, const ImageMap& G, const PairMap& warp,
                         const PairMap& detector, double threshold) {
  torch::Tensor x_f;
  torch::Tensor weights;
  {
    torch::NoGradGuard no_grad;
    x_f = warp ? warp(x, y_tilde) : x;
    weights = detector ? mdet::activate(detector(x_f, y_tilde), threshold) : torch::ones_like(y_tilde);
  }
  return weighted_l1(G(x_f), y_tilde, weights);
}

PriorCache PriorCache::build(const PairedDataset& dataset, PriorForm form, const PairMap& warp,
                             const PairMap& detector, double threshold) {
  if (uses_warp(form) && !warp) throw ConfigError("prior form requires a registration model");
  if (uses_detector(form) && !detector) throw ConfigError("prior form requires a detector");
  torch::NoGradGuard no_grad;
  PriorCache cache;
  for (const auto& pair : dataset.pairs) {
    auto x = pair.x.batched();
    auto y = pair.y_tilde.batched();
    auto source = uses_warp(form) ? warp(x, y) : x;
    torch::Tensor weights;
    if (form == PriorForm::kNone) {
      weights = torch::zeros_like(y);
    } else if (uses_detector(form)) {
      weights = mdet::activate(detector(source, y), threshold);
    } else {
      weights = torch::ones_like(y);
    }
    cache.sources.push_back(source.contiguous());
    cache.weights.push_back(weights.contiguous());
  }
  return cache;
}

ImagePool::ImagePool(int capacity, uint64_t seed) : capacity_(capacity), rng_(seed) {
  if (capacity < 0) throw ValidationError("image pool capacity must be >= 0");
}

torch::Tensor ImagePool::query(const torch::Tensor& image) {
  if (capacity_ == 0) return image;
  if (static_cast<int>(images_.size()) < capacity_) {
    images_.push_back(image.clone());
    return image;
  }
  if (!bernoulli(rng_, 0.5)) return image;
  const auto index = static_cast<size_t>(uniform_int(rng_, 0, capacity_ - 1));
  auto stored = images_[index];
  images_[index] = image.clone();
  return stored;
}

CycleTrainer::CycleTrainer(CycleModel model, const CycleTrainConfig& config)
    : model_(std::move(model)),
      config_(config),
      generator_optimizer_(make_adam(model_.generator_parameters(), config.optimizer)),
      discriminator_optimizer_(make_adam(model_.discriminator_parameters(), config.optimizer)),
      pool_x_(config.pool_size, derive_seed(config.seed, {0x9001})),
      pool_y_(config.pool_size, derive_seed(config.seed, {0x9002})) {}

namespace {

void set_requires_grad(const std::vector<torch::Tensor>& params, bool flag) {
  for (auto p : params) p.set_requires_grad(flag);
}

}  // namespace

CycleStepLosses CycleTrainer::step(const torch::Tensor& source, const torch::Tensor& y_tilde,
                                   const torch::Tensor& prior_weights) {
  auto& m = model_;
  const auto& w = config_.weights;
  const double lambda_prior = config_.prior == PriorForm::kNone ? 0.0 : w.lambda_prior;
  m.G->train();
  m.F->train();
  m.D_X->train();
  m.D_Y->train();

  set_requires_grad(m.discriminator_parameters(), false);
  generator_optimizer_.zero_grad();
  auto fake_y = m.G->forward(source);
  auto fake_x = m.F->forward(y_tilde);
  auto adv = generator_adversarial(m.D_Y->forward(fake_y), config_.adversarial) +
             generator_adversarial(m.D_X->forward(fake_x), config_.adversarial);
  auto cyc = (m.F->forward(fake_y) - source).abs().mean() + (m.G->forward(fake_x) - y_tilde).abs().mean();
  auto total = adv + w.lambda_cyc * cyc;
  torch::Tensor prior;
  if (lambda_prior > 0.0) {
    prior = weighted_l1(fake_y, y_tilde, prior_weights);
    total = total + lambda_prior * prior;
  }
  require_finite(total, "train-cycle generator");
  total.backward();
  generator_optimizer_.step();
  set_requires_grad(m.discriminator_parameters(), true);

  discriminator_optimizer_.zero_grad();
  auto pooled_y = pool_y_.query(fake_y.detach());
  auto pooled_x = pool_x_.query(fake_x.detach());
  auto disc = 0.5 * (discriminator_adversarial(m.D_Y->forward(y_tilde), m.D_Y->forward(pooled_y), config_.adversarial) +
                     discriminator_adversarial(m.D_X->forward(source), m.D_X->forward(pooled_x), config_.adversarial));
  require_finite(disc, "train-cycle discriminator");
  disc.backward();
  discriminator_optimizer_.step();

  CycleStepLosses out;
  out.total = total.item<double>();
  out.adversarial = adv.item<double>();
  out.cycle = cyc.item<double>();
  out.prior = prior.defined() ? prior.item<double>() : 0.0;
  out.discriminator = disc.item<double>();
  return out;
}

CycleModel train_cycle(const PairedDataset& dataset, const CycleTrainConfig& config, const PairMap& warp,
                       const PairMap& detector) {
  if (dataset.empty()) throw ValidationError("train-cycle: empty dataset");
  config.weights.validate();
  const int64_t size = dataset.pairs.front().x.height();
  if (size < 32) throw ConfigError("train-cycle: the patch discriminator needs images of at least 32 x 32");

  const bool prior_active = config.prior != PriorForm::kNone && config.weights.lambda_prior > 0.0;
  const PriorForm form = prior_active ? config.prior : PriorForm::kNone;
  const auto cache = PriorCache::build(dataset, form, warp, detector, config.weights.threshold);

  torch::manual_seed(derive_seed(config.seed, {0xc1c}));
  auto model = CycleModel::create(config.net);
  CycleTrainer trainer(model, config);
  CsvLog log(config.log_csv, {"stage", "epoch", "loss", "adversarial", "cycle", "prior", "discriminator"});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    CycleStepLosses sum;
    for (size_t index : epoch_order(dataset.size(), config.seed, epoch)) {
      const auto losses = trainer.step(cache.sources[index], dataset.pairs[index].y_tilde.batched(),
                                       cache.weights[index]);
      sum.total += losses.total;
      sum.adversarial += losses.adversarial;
      sum.cycle += losses.cycle;
      sum.prior += losses.prior;
      sum.discriminator += losses.discriminator;
    }
    const double n = static_cast<double>(dataset.size());
    log.row({"cycle", std::to_string(epoch), format_number(sum.total / n), format_number(sum.adversarial / n),
             format_number(sum.cycle / n), format_number(sum.prior / n), format_number(sum.discriminator / n)});
    if (config.verbose) {
      std::cerr << fmt::format("[cycle] epoch {} loss {:.5f} adv {:.5f} cyc {:.5f} prior {:.5f} disc {:.5f}\n", epoch,
                               sum.total / n, sum.adversarial / n, sum.cycle / n, sum.prior / n,
                               sum.discriminator / n);
    }
    if (!config.checkpoint_dir.empty()) model.save(config.checkpoint_dir);
  }
  model.G->eval();
  model.F->eval();
  return model;
}

ImageSlice translate(const ImageSlice& x, nets::ResnetGenerator& G) {
  torch::NoGradGuard no_grad;
  G->eval();
  return ImageSlice(G->forward(x.batched())[0][0].contiguous(), "translated", x.slice_index);
}

}  // namespace mitia::cycle
