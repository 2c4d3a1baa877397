#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mitia/image.hpp"
#include "mitia/nets.hpp"
#include "mitia/random.hpp"
#include "mitia/training.hpp"

namespace mitia::cycle {

struct LossWeights {
  double lambda_cyc = 10.0;
  double lambda_prior = 30.0;
  double lambda_smooth = 1.0;
  double threshold = 0.1;

  void validate() const;
};

enum class AdversarialForm { kLog, kLeastSquares };

std::string to_string(AdversarialForm form);
AdversarialForm parse_adversarial_form(std::string_view text);

// Which pixel-wise prior term is added to the adversarial and cycle terms.
//   kNone          no prior
//   kPlain         |G(x) - y|
//   kWarped        |G(x o phi) - y|
//   kMasked        |(G(x) - y) W|,    W = Act(D(x, y))
//   kWarpedMasked  |(G(x_f) - y) W|,  W = Act(D(x_f, y))
enum class PriorForm { kNone, kPlain, kWarped, kMasked, kWarpedMasked };

bool uses_warp(PriorForm form);
bool uses_detector(PriorForm form);

struct CycleNetSpec {
  int64_t generator_width = 64;
  int64_t discriminator_width = 64;
  int num_blocks = 9;
  double width_mult = 1.0;
};

struct CycleModel {
  nets::ResnetGenerator G{nullptr};
  nets::ResnetGenerator F{nullptr};
  nets::PatchDiscriminator D_X{nullptr};
  nets::PatchDiscriminator D_Y{nullptr};

  static CycleModel create(const CycleNetSpec& spec);
  static CycleModel load(const std::filesystem::path& directory, const CycleNetSpec& spec);
  void save(const std::filesystem::path& directory) const;
  std::vector<torch::Tensor> generator_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const;
};

// Numerically stable binary cross-entropy on logits, averaged over all
// elements: max(z, 0) - z t + log(1 + exp(-|z|)).
torch::Tensor bce_with_logits(const torch::Tensor& logits, double target);

// Generator side: the fake logits should read as real.
torch::Tensor generator_adversarial(const torch::Tensor& fake_logits, AdversarialForm form);
// Discriminator side: real logits toward real, fake logits toward fake.
torch::Tensor discriminator_adversarial(const torch::Tensor& real_logits, const torch::Tensor& fake_logits,
                                        AdversarialForm form);

// mean |F(G(x_f)) - x_f| + mean |G(F(y)) - y|.
torch::Tensor cycle_loss(const torch::Tensor& x_f, const torch::Tensor& y_tilde, const ImageMap& G,
                         const ImageMap& F);

struct AdversarialTerms {
  torch::Tensor generator;
  torch::Tensor discriminator;
};

// Both directions. The discriminator term sees detached fakes.
AdversarialTerms adversarial_loss(const torch::Tensor& x_f, const torch::Tensor& y_tilde, const ImageMap& G,
                                  const ImageMap& F, const ImageMap& D_X, const ImageMap& D_Y,
                                  AdversarialForm form = AdversarialForm::kLog);

// mean |(prediction - target) W|.
torch::Tensor weighted_l1(const torch::Tensor& prediction, const torch::Tensor& target, const torch::Tensor& weights);

// x_f = warp(x, y), W = Act(detector(x_f, y)), mean |(G(x_f) - y) W|.
// Either module may be null (no warp, W = 1). Gradients reach G only.
torch::Tensor prior_loss(const torch::Tensor& x, const torch::Tensor& y_tilde, const ImageMap& G, const PairMap& warp,
                         const PairMap& detector, double threshold = 0.1);

// Per-pair source image and prior weights computed once from the frozen
// registration and detector.
struct PriorCache {
  std::vector<torch::Tensor> sources;
  std::vector<torch::Tensor> weights;

  static PriorCache build(const PairedDataset& dataset, PriorForm form, const PairMap& warp, const PairMap& detector,
                          double threshold);
};

struct CycleTrainConfig {
  int epochs = 60;
  OptimizerConfig optimizer;
  CycleNetSpec net;
  LossWeights weights;
  AdversarialForm adversarial = AdversarialForm::kLog;
  PriorForm prior = PriorForm::kWarpedMasked;
  // History buffer of generated images shown to the discriminators; 0 = off.
  int pool_size = 0;
  uint64_t seed = 0;
  std::filesystem::path log_csv;
  std::filesystem::path checkpoint_dir;
  bool verbose = false;
};

// Alternating generator / discriminator updates at batch size 1. The warp
// and detector must be frozen; they are consulted once to build the prior
// cache. With lambda_prior = 0 neither is consulted and the source side is
// the raw x.
CycleModel train_cycle(const PairedDataset& dataset, const CycleTrainConfig& config, const PairMap& warp = nullptr,
                       const PairMap& detector = nullptr);

// One generator update followed by one discriminator update on a single
// pair; returns the generator objective.
struct CycleStepLosses {
  double total = 0.0;
  double adversarial = 0.0;
  double cycle = 0.0;
  double prior = 0.0;
  double discriminator = 0.0;
};

// Returns the incoming image until full; afterwards, with probability 1/2,
// swaps it for a stored one. Capacity 0 passes every image through.
class ImagePool {
 public:
  ImagePool(int capacity, uint64_t seed);
  torch::Tensor query(const torch::Tensor& image);
  size_t size() const { return images_.size(); }

 private:
  int capacity_;
  Rng rng_;
  std::vector<torch::Tensor> images_;
};

class CycleTrainer {
 public:
  CycleTrainer(CycleModel model, const CycleTrainConfig& config);
  CycleStepLosses step(const torch::Tensor& source, const torch::Tensor& y_tilde, const torch::Tensor& prior_weights);
  const CycleModel& model() const { return model_; }

 private:
  CycleModel model_;
  CycleTrainConfig config_;
  torch::optim::Adam generator_optimizer_;
  torch::optim::Adam discriminator_optimizer_;
  ImagePool pool_x_;
  ImagePool pool_y_;
};

ImageSlice translate(const ImageSlice& x, nets::ResnetGenerator& G);

}  // namespace mitia::cycle
