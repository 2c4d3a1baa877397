#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mitia/cycle/translation.hpp"
#include "mitia/errors.hpp"
#include "mitia/mdet/detector.hpp"
#include "mitia/synth/phantom.hpp"
#include "mitia/synth/training_set.hpp"

using namespace mitia;
using namespace mitia::cycle;

namespace {

CycleNetSpec tiny_spec() {
  CycleNetSpec spec;
  spec.width_mult = 0.125;
  spec.num_blocks = 1;
  return spec;
}

PairedDataset tiny_dataset(int slices = 2) {
  std::vector<Volume> vx;
  std::vector<Volume> vy;
  for (auto& s : synth::make_phantom_corpus(3, 1, slices, 32)) {
    vx.push_back(s.x);
    vy.push_back(s.y);
  }
  return synth::build_training_set(vx, vy, synth::TrainingSetOptions{});
}

double naive_bce(double z, double t) { return -(t * std::log(1.0 / (1.0 + std::exp(-z))) + (1 - t) * std::log(1.0 / (1.0 + std::exp(z)))); }

}  // namespace

TEST_SUITE("cycle") {
  TEST_CASE("cycle loss vanishes for exact inverses") {
    auto x = testing::random_image(8, 8, 1).view({1, 1, 8, 8});
    auto y = testing::random_image(8, 8, 2).view({1, 1, 8, 8});
    ImageMap neg = [](const torch::Tensor& t) { return -t; };
    CHECK(cycle_loss(x, y, neg, neg).item<double>() == 0.0);
  }

  TEST_CASE("cycle loss of constant maps") {
    auto x = torch::zeros({1, 1, 4, 4});
    auto y = torch::zeros({1, 1, 4, 4});
    ImageMap half = [](const torch::Tensor& t) { return torch::full_like(t, 0.5); };
    ImageMap minus_half = [](const torch::Tensor& t) { return torch::full_like(t, -1.5); };
    // |F(G(x)) - x| = 1.5 and |G(F(y)) - y| = 0.5.
    CHECK(cycle_loss(x, y, half, minus_half).item<double>() == doctest::Approx(2.0));
  }

  TEST_CASE("logistic adversarial terms at zero logits equal log 2") {
    auto z = torch::zeros({1, 1, 3, 3});
    CHECK(generator_adversarial(z, AdversarialForm::kLog).item<double>() == doctest::Approx(std::log(2.0)));
    CHECK(discriminator_adversarial(z, z, AdversarialForm::kLog).item<double>() ==
          doctest::Approx(2.0 * std::log(2.0)));
    CHECK(generator_adversarial(z, AdversarialForm::kLeastSquares).item<double>() == doctest::Approx(1.0));
    CHECK(discriminator_adversarial(z, z, AdversarialForm::kLeastSquares).item<double>() == doctest::Approx(1.0));
  }

  TEST_CASE("stable BCE agrees with the naive formula and is finite at extremes") {
    for (double z : {-8.0, -1.3, 0.0, 0.4, 6.0}) {
      for (double t : {0.0, 1.0}) {
        auto logits = torch::full({1}, z, torch::kFloat64);
        CHECK(bce_with_logits(logits, t).item<double>() == doctest::Approx(naive_bce(z, t)).epsilon(1e-12));
      }
    }
    auto big = torch::tensor({-1000.0, 1000.0}, torch::kFloat64);
    CHECK(std::isfinite(bce_with_logits(big, 1.0).item<double>()));
    CHECK(bce_with_logits(big, 1.0).item<double>() == doctest::Approx(500.0));
  }

  TEST_CASE("BCE gradient matches finite differences") {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
    auto z = (torch::randn({6}, gen, torch::kFloat64) * 3.0).requires_grad_(true);
    bce_with_logits(z, 1.0).backward();
    auto numeric = testing::numeric_gradient(
        [](const torch::Tensor& t) { return bce_with_logits(t, 1.0).item<double>(); }, z.detach().clone());
    CHECK(testing::relative_error(z.grad(), numeric) <= 1e-6);
  }

  TEST_CASE("adversarial loss sums both directions") {
    auto x = testing::random_image(4, 4, 5).view({1, 1, 4, 4});
    auto y = testing::random_image(4, 4, 6).view({1, 1, 4, 4});
    ImageMap id = [](const torch::Tensor& t) { return t; };
    ImageMap zero = [](const torch::Tensor& t) { return torch::zeros_like(t); };
    const auto terms = adversarial_loss(x, y, id, id, zero, zero);
    CHECK(terms.generator.item<double>() == doctest::Approx(2.0 * std::log(2.0)));
    CHECK(terms.discriminator.item<double>() == doctest::Approx(4.0 * std::log(2.0)));
  }

  TEST_CASE("prior loss oracles") {
    auto x = testing::random_image(6, 6, 7).view({1, 1, 6, 6});
    auto y = testing::random_image(6, 6, 8).view({1, 1, 6, 6});
    ImageMap id = [](const torch::Tensor& t) { return t; };
    const double plain = (x - y).abs().mean().item<double>();
    CHECK(prior_loss(x, y, id, nullptr, nullptr).item<double>() == doctest::Approx(plain));

    PairMap warp = [](const torch::Tensor& a, const torch::Tensor& b) { return b; };
    CHECK(prior_loss(x, y, id, warp, nullptr).item<double>() == 0.0);

    // A detector that flags every pixel silences the prior.
    PairMap all_bad = [](const torch::Tensor&, const torch::Tensor& b) { return torch::ones_like(b); };
    CHECK(prior_loss(x, y, id, nullptr, all_bad).item<double>() == 0.0);

    PairMap constant = [](const torch::Tensor&, const torch::Tensor& b) { return torch::full_like(b, 0.05); };
    CHECK(prior_loss(x, y, id, nullptr, constant).item<double>() == doctest::Approx(0.95 * plain).epsilon(1e-6));
  }

  TEST_CASE("masked prior decomposes over pixels") {
    auto x = testing::random_image(6, 6, 9).view({1, 1, 6, 6});
    auto y = testing::random_image(6, 6, 10).view({1, 1, 6, 6});
    auto w = torch::rand({1, 1, 6, 6}, at::make_generator<at::CPUGeneratorImpl>(11));
    auto xa = x.to(torch::kFloat64);
    auto ya = y.to(torch::kFloat64);
    auto wa = w.to(torch::kFloat64);
    double expected = 0.0;
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) {
        expected += std::abs((xa[0][0][r][c].item<double>() - ya[0][0][r][c].item<double>()) * wa[0][0][r][c].item<double>());
      }
    }
    CHECK(weighted_l1(x, y, w).item<double>() == doctest::Approx(expected / 36.0).epsilon(1e-6));
  }

  TEST_CASE("prior gradients reach only the generator") {
    auto spec = tiny_spec();
    auto model = CycleModel::create(spec);
    auto x = testing::random_image(32, 32, 12).view({1, 1, 32, 32});
    auto y = testing::random_image(32, 32, 13).view({1, 1, 32, 32});
    auto warp_param = torch::zeros({1}, torch::requires_grad());
    PairMap warp = [&](const torch::Tensor& a, const torch::Tensor&) { return a + warp_param; };
    ImageMap G = [&](const torch::Tensor& t) { return model.G->forward(t); };
    prior_loss(x, y, G, warp, nullptr).backward();
    CHECK_FALSE(warp_param.grad().defined());
    double total = 0.0;
    for (const auto& p : model.G->parameters()) total += p.grad().defined() ? p.grad().abs().sum().item<double>() : 0.0;
    CHECK(total > 0.0);
  }

  TEST_CASE("training leaves frozen modules untouched") {
    const auto ds = tiny_dataset();
    mdet::DetectorNetSpec dspec;
    dspec.width_mult = 0.125;
    dspec.num_blocks = 1;
    mdet::DetectorNet detector(dspec);
    const auto before = nets::snapshot(*detector);
    CycleTrainConfig config;
    config.epochs = 1;
    config.net = tiny_spec();
    config.prior = PriorForm::kMasked;
    train_cycle(ds, config, nullptr, mdet::as_pair_map(detector));
    CHECK(testing::bit_equal(nets::snapshot(*detector), before));
  }

  TEST_CASE("zero prior weight reproduces the unregularized run and never consults the modules") {
    const auto ds = tiny_dataset();
    CycleTrainConfig base;
    base.epochs = 1;
    base.net = tiny_spec();
    base.prior = PriorForm::kNone;
    const auto reference = train_cycle(ds, base);

    CycleTrainConfig zero = base;
    zero.prior = PriorForm::kWarpedMasked;
    zero.weights.lambda_prior = 0.0;
    PairMap trap = [](const torch::Tensor&, const torch::Tensor&) -> torch::Tensor {
      throw std::logic_error("consulted");
    };
    const auto other = train_cycle(ds, zero, trap, trap);
    CHECK(testing::bit_equal(nets::snapshot(*other.G), nets::snapshot(*reference.G)));
    CHECK(testing::bit_equal(nets::snapshot(*other.D_Y), nets::snapshot(*reference.D_Y)));
  }

  TEST_CASE("image pool") {
    ImagePool off(0, 1);
    auto a = torch::ones({1, 1, 2, 2});
    CHECK(off.query(a).data_ptr() == a.data_ptr());
    CHECK(off.size() == 0);

    ImagePool pool(3, 2);
    std::vector<torch::Tensor> seen;
    for (int i = 0; i < 3; ++i) {
      auto t = torch::full({1, 1, 2, 2}, static_cast<float>(i));
      CHECK(testing::bit_equal(pool.query(t), t));
    }
    CHECK(pool.size() == 3);
    int swapped = 0;
    for (int i = 3; i < 40; ++i) {
      auto t = torch::full({1, 1, 2, 2}, static_cast<float>(i));
      auto out = pool.query(t);
      swapped += testing::bit_equal(out, t) ? 0 : 1;
      CHECK(out[0][0][0][0].item<float>() <= static_cast<float>(i));
    }
    CHECK(swapped > 5);
    CHECK(swapped < 32);
    CHECK(pool.size() == 3);
    CHECK_THROWS_AS(ImagePool(-1, 0), ValidationError);
  }

  TEST_CASE("translation output range and determinism") {
    auto model = CycleModel::create(tiny_spec());
    {
      torch::NoGradGuard no_grad;
      for (auto& p : model.G->parameters()) p.normal_(0.0, 1.0);
    }
    const ImageSlice x(testing::random_image(32, 32, 14));
    const auto a = translate(x, model.G);
    const auto b = translate(x, model.G);
    CHECK(a.in_range());
    CHECK(testing::bit_equal(a.pixels, b.pixels));
    CHECK(a.pixels.sizes() == x.pixels.sizes());
  }

  TEST_CASE("configuration errors") {
    const auto ds = tiny_dataset();
    CycleTrainConfig config;
    config.epochs = 1;
    config.net = tiny_spec();
    config.prior = PriorForm::kWarped;
    CHECK_THROWS_AS(train_cycle(ds, config), ConfigError);
    config.prior = PriorForm::kMasked;
    CHECK_THROWS_AS(train_cycle(ds, config), ConfigError);

    std::vector<Volume> vx;
    std::vector<Volume> vy;
    for (auto& s : synth::make_phantom_corpus(3, 1, 2, 16)) {
      vx.push_back(s.x);
      vy.push_back(s.y);
    }
    config.prior = PriorForm::kNone;
    CHECK_THROWS_AS(train_cycle(synth::build_training_set(vx, vy, {}), config), ConfigError);

    LossWeights w;
    w.threshold = 1.5;
    CHECK_THROWS(w.validate());
    CHECK(parse_adversarial_form("lsgan") == AdversarialForm::kLeastSquares);
    CHECK(to_string(parse_adversarial_form("log")) == "log");
  }

  TEST_CASE("model checkpoints round trip") {
    testing::TempDir dir("cycle_io");
    auto model = CycleModel::create(tiny_spec());
    model.save(dir.path());
    const auto loaded = CycleModel::load(dir.path(), tiny_spec());
    CHECK(testing::bit_equal(nets::snapshot(*loaded.G), nets::snapshot(*model.G)));
    CHECK(testing::bit_equal(nets::snapshot(*loaded.D_X), nets::snapshot(*model.D_X)));
    CHECK_THROWS_AS(CycleModel::load(dir.path() / "nope", tiny_spec()), ConfigError);
  }
}
