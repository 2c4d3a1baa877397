#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mitia/errors.hpp"
#include "mitia/mdet/detector.hpp"
#include "mitia/synth/mdet_sample.hpp"
#include "mitia/synth/phantom.hpp"
#include "mitia/synth/training_set.hpp"

using namespace mitia;
using namespace mitia::mdet;

namespace {

DetectorNet small_net() {
  DetectorNetSpec spec;
  spec.width_mult = 0.125;
  spec.num_blocks = 2;
  return DetectorNet(spec);
}

}  // namespace

TEST_SUITE("mdet") {
  TEST_CASE("activation cases at the default threshold") {
    auto e = torch::tensor({0.0, 0.05, 0.0999, 0.1, 0.5, 1.0}, torch::kFloat64);
    auto w = activate(e, 0.1);
    CHECK(w[0].item<double>() == 1.0);
    CHECK(w[1].item<double>() == doctest::Approx(0.95));
    CHECK(w[2].item<double>() == doctest::Approx(0.9001));
    CHECK(w[3].item<double>() == 0.0);
    CHECK(w[4].item<double>() == 0.0);
    CHECK(w[5].item<double>() == 0.0);
    const auto cm = activate(ErrorMap{e}, 0.3);
    CHECK(cm.threshold_used == 0.3);
    CHECK(cm.weights[3].item<double>() == doctest::Approx(0.9));
  }

  TEST_CASE("activation weights are bounded and non-increasing in the error") {
    auto e = torch::linspace(0.0, 1.0, 1001, torch::kFloat64);
    for (double th : {0.01, 0.1, 0.5, 0.99}) {
      auto w = activate(e, th);
      CHECK(w.min().item<double>() >= 0.0);
      CHECK(w.max().item<double>() <= 1.0);
      CHECK((w.narrow(0, 1, 1000) - w.narrow(0, 0, 1000)).max().item<double>() <= 0.0);
    }
  }

  TEST_CASE("activation rejects thresholds outside (0, 1)") {
    auto e = torch::zeros({2});
    CHECK_THROWS_AS(activate(e, 0.0), ValidationError);
    CHECK_THROWS_AS(activate(e, 1.0), ValidationError);
    CHECK_THROWS_AS(activate(e, -0.2), ValidationError);
  }

  TEST_CASE("detector output lies in [0, 1] and is deterministic") {
    auto net = small_net();
    {
      torch::NoGradGuard no_grad;
      for (auto& p : net->parameters()) p.normal_(0.0, 0.5);
    }
    const ImageSlice a(testing::random_image(32, 32, 1));
    const ImageSlice b(testing::random_image(32, 32, 2));
    const auto e1 = detect(a, b, net);
    const auto e2 = detect(a, b, net);
    CHECK(e1.values.dim() == 2);
    CHECK(e1.values.min().item<float>() >= 0.0F);
    CHECK(e1.values.max().item<float>() <= 1.0F);
    CHECK(testing::bit_equal(e1.values, e2.values));
  }

  TEST_CASE("detector input keeps (x, y_dg) channel order") {
    Rng rng(3);
    const auto x = synth::make_phantom_pair(1, 32).a;
    const auto s = synth::make_mdet_sample(x, synth::sample_affine(rng), synth::ElasticParams::for_size(32),
                                           synth::random_shuffle_spec(rng), 5);
    const auto input = detector_input(s);
    CHECK(input.size(1) == 2);
    CHECK(testing::bit_equal(input[0][0], s.x.pixels));
    CHECK(testing::bit_equal(input[0][1], s.y_dg.pixels));
  }

  TEST_CASE("frozen pair map has no gradients and matches detect") {
    auto net = small_net();
    auto map = as_pair_map(net);
    const ImageSlice a(testing::random_image(32, 32, 4));
    const ImageSlice b(testing::random_image(32, 32, 5));
    auto out = map(a.batched(), b.batched());
    CHECK_FALSE(out.requires_grad());
    CHECK(testing::bit_equal(out[0][0], detect(a, b, net).values));
    for (const auto& p : net->parameters()) CHECK_FALSE(p.requires_grad());
  }

  TEST_CASE("training steps reduce the L1 loss") {
    auto net = small_net();
    OptimizerConfig opt;
    opt.learning_rate = 1e-3;
    DetectorTrainer trainer(net, opt);
    synth::MDetSampler sampler(7, synth::AffineRanges{}, synth::ElasticParams::for_size(32), 0.0);
    std::vector<ImageSlice> sources;
    for (uint64_t s = 0; s < 4; ++s) sources.push_back(synth::make_phantom_pair(s, 32).a);
    double first = 0.0;
    double last = 0.0;
    for (int i = 0; i < 200; ++i) {
      const double loss = trainer.step(sampler.next(sources[static_cast<size_t>(i) % sources.size()]));
      if (i < 20) first += loss;
      if (i >= 180) last += loss;
    }
    CHECK(last < first);
  }

  TEST_CASE("a perfect detector reports zero error on aligned pairs") {
    std::vector<Volume> vx;
    std::vector<Volume> vy;
    for (auto& s : synth::make_phantom_corpus(2, 1, 5, 32)) {
      vx.push_back(s.x);
      vy.push_back(s.x);
    }
    const auto ds = synth::build_training_set(vx, vy, synth::TrainingSetOptions{});
    PairMap oracle = [](const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs() / 2.0; };
    const auto summary = mean_misalignment_error(ds, oracle);
    CHECK(summary.per_pair.size() == 5);
    CHECK(summary.mean == 0.0);
    CHECK(summary.mean_percent() == "0.00");

    PairMap shift = [](const torch::Tensor& a, const torch::Tensor&) { return torch::roll(a, 1, 3); };
    CHECK(mean_misalignment_error(ds, oracle, shift).mean > 0.0);
  }

  TEST_CASE("percent formatting and summaries") {
    CHECK(format_percent(0.0278) == "2.78");
    CHECK(format_percent(0.0093) == "0.93");
    CHECK(format_percent(1.0) == "100.00");
    const auto s = summarize({0.01, 0.03});
    CHECK(s.mean == doctest::Approx(0.02));
    CHECK(s.stddev == doctest::Approx(0.01));
    CHECK(s.mean_percent() == "2.00");
    CHECK(s.stddev_percent() == "1.00");
  }

  TEST_CASE("checkpoints round trip and missing ones are a config error") {
    testing::TempDir dir("mdet_io");
    auto net = small_net();
    nets::save_module(net, dir.path() / "detector.pt");
    DetectorNetSpec spec;
    spec.width_mult = 0.125;
    spec.num_blocks = 2;
    auto loaded = load_detector(dir.path() / "detector.pt", spec);
    CHECK(testing::bit_equal(nets::snapshot(*loaded), nets::snapshot(*net)));
    CHECK_THROWS_AS(load_detector(dir.path() / "missing.pt", spec), ConfigError);
  }
}
