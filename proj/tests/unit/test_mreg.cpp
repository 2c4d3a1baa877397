#include <doctest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "mitia/errors.hpp"
#include "mitia/nets.hpp"
#include "mitia/mreg/losses.hpp"
#include "mitia/mreg/networks.hpp"
#include "mitia/mreg/registration.hpp"
#include "mitia/mreg/warp.hpp"
#include "mitia/synth/phantom.hpp"
#include "mitia/synth/training_set.hpp"

using namespace mitia;
using namespace mitia::mreg;

namespace {

// Entropies from raw bin counts, no library histogram involved.
double oracle_mi(const torch::Tensor& a, const torch::Tensor& b, int bins) {
  auto va = a.to(torch::kFloat64).reshape({-1});
  auto vb = b.to(torch::kFloat64).reshape({-1});
  const int64_t n = va.numel();
  std::map<int, double> ca;
  std::map<int, double> cb;
  std::map<std::pair<int, int>, double> cab;
  auto bin = [bins](double v) {
    int i = static_cast<int>(std::floor((v + 1.0) * bins / 2.0));
    return i < 0 ? 0 : (i >= bins ? bins - 1 : i);
  };
  for (int64_t i = 0; i < n; ++i) {
    const int p = bin(va[i].item<double>());
    const int q = bin(vb[i].item<double>());
    ca[p] += 1;
    cb[q] += 1;
    cab[{p, q}] += 1;
  }
  auto entropy = [n](const auto& counts) {
    double h = 0;
    for (const auto& kv : counts) {
      const double p = kv.second / static_cast<double>(n);
      h -= p * std::log(p);
    }
    return h;
  };
  return entropy(ca) + entropy(cb) - entropy(cab);
}

torch::Tensor ramp(int64_t h, int64_t w) {
  auto rows = torch::arange(h, torch::kFloat64).view({h, 1});
  auto cols = torch::arange(w, torch::kFloat64).view({1, w});
  return (0.1 * rows + 0.03 * cols - 0.5).expand({h, w}).contiguous();
}

}  // namespace

TEST_SUITE("mreg") {
  TEST_CASE("resampling with a zero field is exact") {
    auto img = testing::random_image(9, 11, 1).view({1, 1, 9, 11});
    CHECK(testing::bit_equal(resample(img, torch::zeros({1, 2, 9, 11})), img));
  }

  TEST_CASE("integer shifts move pixels and fill with background") {
    auto img = testing::random_image(6, 7, 2).view({1, 1, 6, 7});
    auto field = torch::zeros({1, 2, 6, 7});
    field.select(1, 0).fill_(2.0);
    auto out = resample(img, field);
    CHECK(testing::max_abs_diff(out.narrow(2, 0, 4), img.narrow(2, 2, 4)) == 0.0);
    CHECK(out.narrow(2, 4, 2).eq(kBackground).all().item<bool>());
  }

  TEST_CASE("bilinear interpolation of an affine ramp is exact") {
    auto img = ramp(8, 8);
    auto field = torch::full({1, 2, 8, 8}, 0.0, torch::kFloat64);
    field.select(1, 0).fill_(0.37);
    field.select(1, 1).fill_(-0.61);
    auto out = resample(img.view({1, 1, 8, 8}), field, 0.0).view({8, 8});
    for (int r = 0; r < 7; ++r) {
      for (int c = 1; c < 8; ++c) {
        const double expected = 0.1 * (r + 0.37) + 0.03 * (c - 0.61) - 0.5;
        CHECK(out[r][c].item<double>() == doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("resample gradients match finite differences") {
    auto img = testing::random_image(6, 6, 3).to(torch::kFloat64).view({1, 1, 6, 6});
    auto gen = at::make_generator<at::CPUGeneratorImpl>(4);
    // Keep samples away from integer offsets, where bilinear is not smooth.
    auto field = (torch::rand({1, 2, 6, 6}, gen, torch::kFloat64) * 0.6 + 0.2).requires_grad_(true);
    auto image = img.clone().requires_grad_(true);
    auto weights = torch::rand({1, 1, 6, 6}, gen, torch::kFloat64);
    (resample(image, field) * weights).sum().backward();

    auto f_of_field = [&](const torch::Tensor& f) { return (resample(img, f) * weights).sum().item<double>(); };
    auto f_of_image = [&](const torch::Tensor& i) {
      return (resample(i, field.detach()) * weights).sum().item<double>();
    };
    torch::NoGradGuard no_grad;
    CHECK(testing::relative_error(field.grad(), testing::numeric_gradient(f_of_field, field.detach().clone())) <= 1e-3);
    CHECK(testing::relative_error(image.grad(), testing::numeric_gradient(f_of_image, img.clone())) <= 1e-3);
  }

  TEST_CASE("label resampling is nearest-neighbour") {
    auto labels = torch::tensor({{0, 1}, {2, 3}}, torch::kInt32);
    auto field = torch::zeros({2, 2, 2});
    field.select(0, 1).fill_(0.6);
    auto out = resample_labels(labels, field);
    CHECK(out[0][0].item<int>() == 1);
    CHECK(out[1][0].item<int>() == 3);
    CHECK(out[0][1].item<int>() == -1);
  }

  TEST_CASE("hard mutual information equals the entropy identity") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      auto a = testing::random_levels(16, 16, 6, seed);
      auto b = (a * a + 0.3 * testing::random_image(16, 16, seed + 50)).clamp(-1, 1);
      const int bins = 8 + static_cast<int>(seed);
      CHECK(mutual_information(hard_histogram(a, b, bins)) == doctest::Approx(oracle_mi(a, b, bins)).epsilon(1e-9));
    }
  }

  TEST_CASE("mutual information of a constant image is zero") {
    auto a = torch::full({8, 8}, 0.25F);
    auto b = testing::random_image(8, 8, 5);
    CHECK(std::abs(mutual_information(hard_histogram(a, b))) <= 1e-12);
    CHECK(std::abs(mutual_information(hard_histogram(b, a))) <= 1e-12);
  }

  TEST_CASE("a balanced binary image shares log 2 nats with itself") {
    auto a = torch::ones({4, 4});
    a.narrow(0, 0, 2).fill_(-1.0);
    CHECK(mutual_information(hard_histogram(a, a)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(mutual_information(hard_histogram(a, -a)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  TEST_CASE("shuffling pixels never raises self information") {
    auto a = synth::make_phantom_pair(3, 32).a.pixels;
    auto b = synth::make_phantom_pair(3, 32).b.pixels;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(7);
    auto shuffled = b.reshape({-1}).index_select(0, torch::randperm(b.numel(), gen, torch::kLong)).view_as(b);
    CHECK(mutual_information(hard_histogram(a, a)) >= mutual_information(hard_histogram(a, b)));
    CHECK(mutual_information(hard_histogram(a, b)) > mutual_information(hard_histogram(a, shuffled)));
    auto sa = a.view({1, 1, 32, 32});
    CHECK(mutual_information_loss(sa, b.view_as(sa)).item<double>() <
          mutual_information_loss(sa, shuffled.view_as(sa)).item<double>());
  }

  TEST_CASE("parzen histograms are normalized and differentiable") {
    auto a = testing::random_image(8, 8, 8).to(torch::kFloat64).requires_grad_(true);
    auto b = testing::random_image(8, 8, 9).to(torch::kFloat64);
    auto h = parzen_histogram(a, b, 16);
    CHECK(h.joint.sum().item<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(testing::max_abs_diff(h.marginal_a, h.joint.sum(1)) <= 1e-15);
    CHECK(mutual_information(h) >= -1e-12);
    auto loss = mutual_information_loss(a.view({1, 1, 8, 8}), b.view({1, 1, 8, 8}), 16);
    loss.backward();
    CHECK(a.grad().defined());
    CHECK(a.grad().abs().sum().item<double>() > 0.0);
    CHECK_THROWS_AS(hard_histogram(a, b, 1), ValidationError);
    CHECK_THROWS_AS(hard_histogram(a, b.narrow(0, 0, 4), 8), ValidationError);
  }

  TEST_CASE("smoothness of a single unit step") {
    auto field = torch::zeros({2, 1, 2});
    field[0][0][1] = 1.0F;
    CHECK(smoothness_loss(field).item<double>() == doctest::Approx(0.5));
    CHECK(smoothness_loss(torch::full({1, 2, 5, 5}, 3.0F)).item<double>() == 0.0);
  }

  TEST_CASE("smoothness gradient matches finite differences") {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(21);
    auto field = torch::randn({1, 2, 6, 6}, gen, torch::kFloat64).requires_grad_(true);
    smoothness_loss(field).backward();
    auto numeric = testing::numeric_gradient([](const torch::Tensor& f) { return smoothness_loss(f).item<double>(); },
                                             field.detach().clone());
    CHECK(testing::relative_error(field.grad(), numeric) <= 1e-3);
  }

  TEST_CASE("smoothness is 2-homogeneous") {
    auto field = testing::random_image(10, 10, 11).repeat({2, 1, 1}).to(torch::kFloat64);
    const double base = smoothness_loss(field).item<double>();
    for (double s : {-2.0, 0.5, 3.0}) {
      CHECK(smoothness_loss(field * s).item<double>() == doctest::Approx(s * s * base).epsilon(1e-12));
    }
  }

  TEST_CASE("identity theta yields a zero field") {
    CHECK(theta_to_field(AffineTheta::identity(), 7, 9).displacement.abs().max().item<float>() <= 1e-6F);
  }

  TEST_CASE("translation by one pixel") {
    AffineTheta t;
    t.translate_x = 1.0 / 8.0;
    auto f = theta_to_field(t, 5, 8).displacement;
    CHECK(f.select(0, 1).sub(1.0).abs().max().item<float>() <= 1e-6F);
    CHECK(f.select(0, 0).abs().max().item<float>() <= 1e-6F);
  }

  TEST_CASE("quarter turn maps corners onto corners") {
    AffineTheta t;
    t.rotation = M_PI / 2.0;
    auto f = theta_to_field(t, 3, 3).displacement.to(torch::kFloat64);
    // p = (0, 0) samples q = c + R (p - c) with c = (1, 1).
    const double qy = 1.0 + std::sin(M_PI / 2) * (0 - 1.0) + std::cos(M_PI / 2) * (0 - 1.0);
    const double qx = 1.0 + std::cos(M_PI / 2) * (0 - 1.0) - std::sin(M_PI / 2) * (0 - 1.0);
    CHECK(f[0][0][0].item<double>() == doctest::Approx(qy).epsilon(1e-6));
    CHECK(f[1][0][0].item<double>() == doctest::Approx(qx).epsilon(1e-6));
    CHECK(f[0][1][1].item<double>() == doctest::Approx(0.0).epsilon(1e-6));
    auto img = torch::arange(9, torch::kFloat32).view({3, 3}) / 8.0 - 0.5;
    auto rotated = resample(ImageSlice(img), theta_to_field(t, 3, 3)).pixels;
    CHECK(testing::max_abs_diff(rotated, torch::rot90(img, 1, {0, 1})) <= 1e-5);
  }

  TEST_CASE("batched theta fields are differentiable and match the scalar path") {
    auto theta = torch::tensor({{0.1, 0.02, 0.05, -0.03}}, torch::kFloat64).requires_grad_(true);
    auto f = theta_to_field(theta, 6, 6);
    f.sum().backward();
    CHECK(theta.grad().abs().sum().item<double>() > 0.0);
    auto single = theta_to_field(theta_from_tensor(theta[0]), 6, 6).displacement;
    CHECK(testing::max_abs_diff(f.squeeze(0), single) <= 1e-5);
    CHECK_THROWS_AS(theta_to_field(torch::zeros({1, 3}), 4, 4), ValidationError);
  }

  TEST_CASE("fresh registration networks are the identity") {
    CoarseRegNetSpec cs;
    cs.image_size = 32;
    cs.width_mult = 0.25;
    FineRegNetSpec fs;
    fs.width_mult = 0.25;
    MRegModel model{CoarseRegNet(cs), FineRegNet(fs)};
    model.eval();
    auto x = testing::random_image(32, 32, 12).view({1, 1, 32, 32});
    auto y = testing::random_image(32, 32, 13).view({1, 1, 32, 32});
    torch::NoGradGuard no_grad;
    CHECK(model.full_field(x, y).abs().max().item<float>() == 0.0F);
    CHECK(testing::bit_equal(model.warp(x, y), x));
  }

  TEST_CASE("the full field is the literal sum of coarse and fine fields") {
    CoarseRegNetSpec cs;
    cs.image_size = 32;
    cs.width_mult = 0.25;
    FineRegNetSpec fs;
    fs.width_mult = 0.25;
    MRegModel model{CoarseRegNet(cs), FineRegNet(fs)};
    {
      torch::NoGradGuard no_grad;
      for (auto& p : model.coarse->parameters()) p.normal_(0.0, 0.05);
      for (auto& p : model.fine->parameters()) p.normal_(0.0, 0.05);
    }
    model.eval();
    auto x = testing::random_image(32, 32, 14).view({1, 1, 32, 32});
    auto y = testing::random_image(32, 32, 15).view({1, 1, 32, 32});
    torch::NoGradGuard no_grad;
    auto phi_c = model.coarse_field(x, y);
    auto x_c = resample(x, phi_c);
    auto phi_f = model.fine->forward(stack_pair(x_c, y));
    CHECK(phi_c.abs().max().item<float>() > 0.0F);
    CHECK(phi_f.abs().max().item<float>() > 0.0F);
    CHECK(testing::max_abs_diff(model.full_field(x, y), phi_c + phi_f) == 0.0);

    MRegModel fine_only{nullptr, model.fine};
    CHECK(testing::max_abs_diff(fine_only.full_field(x, y), model.fine->forward(stack_pair(x, y))) == 0.0);
  }

  TEST_CASE("fine training on aligned pairs keeps the field small") {
    std::vector<Volume> vx;
    std::vector<Volume> vy;
    for (auto& s : synth::make_phantom_corpus(1, 1, 4, 32)) {
      vx.push_back(s.x);
      vy.push_back(s.x);  // same modality, perfectly aligned
    }
    const auto ds = synth::build_training_set(vx, vy, synth::TrainingSetOptions{});
    PairMap detector = [](const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs() / 2.0; };
    RegTrainConfig config;
    config.epochs = 3;
    config.width_mult = 0.25;
    config.optimizer.learning_rate = 1e-4;
    auto fine = train_fine(ds, nullptr, detector, config);
    MRegModel model{nullptr, fine};
    torch::NoGradGuard no_grad;
    for (const auto& p : ds.pairs) {
      CHECK(model.full_field(p.x.batched(), p.y_tilde.batched()).abs().max().item<float>() < 0.5F);
    }
  }

  TEST_CASE("save and load round trip") {
    testing::TempDir dir("mreg_io");
    CoarseRegNetSpec cs;
    cs.image_size = 32;
    cs.width_mult = 0.25;
    FineRegNetSpec fs;
    fs.width_mult = 0.25;
    MRegModel model{CoarseRegNet(cs), FineRegNet(fs)};
    {
      torch::NoGradGuard no_grad;
      for (auto& p : model.fine->parameters()) p.normal_(0.0, 0.05);
    }
    model.save(dir.path());
    auto loaded = load_mreg(dir.path(), 32, 0.25);
    CHECK(testing::bit_equal(nets::snapshot(*loaded.fine), nets::snapshot(*model.fine)));
    CHECK(testing::bit_equal(nets::snapshot(*loaded.coarse), nets::snapshot(*model.coarse)));
  }
}
