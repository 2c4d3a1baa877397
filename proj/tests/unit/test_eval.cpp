#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mitia/errors.hpp"
#include "mitia/eval/ablation.hpp"
#include "mitia/eval/metrics.hpp"

using namespace mitia;
using namespace mitia::eval;

namespace {

// Direct loop over every valid 11 x 11 window.
double naive_ssim(const torch::Tensor& a_in, const torch::Tensor& b_in) {
  auto a = ((a_in.to(torch::kFloat64) + 1.0) / 2.0).contiguous();
  auto b = ((b_in.to(torch::kFloat64) + 1.0) / 2.0).contiguous();
  const int64_t h = a.size(0);
  const int64_t w = a.size(1);
  double g[11];
  double gsum = 0;
  for (int i = 0; i < 11; ++i) {
    g[i] = std::exp(-((i - 5.0) * (i - 5.0)) / (2.0 * 1.5 * 1.5));
    gsum += g[i];
  }
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const double* pa = a.data_ptr<double>();
  const double* pb = b.data_ptr<double>();
  double total = 0;
  int count = 0;
  for (int64_t r = 0; r + 11 <= h; ++r) {
    for (int64_t c = 0; c + 11 <= w; ++c) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const double k = g[i] * g[j] / (gsum * gsum);
          const double va = pa[(r + i) * w + c + j];
          const double vb = pb[(r + i) * w + c + j];
          ma += k * va;
          mb += k * vb;
          saa += k * va * va;
          sbb += k * vb * vb;
          sab += k * va * vb;
        }
      }
      const double var_a = saa - ma * ma;
      const double var_b = sbb - mb * mb;
      const double cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  return total / count;
}

// Pairwise definition: P(score_pos > score_neg) + 0.5 P(tie).
double naive_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0;
  for (double p : pos) {
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  }
  return wins / static_cast<double>(pos.size() * neg.size());
}

PairedDataset constant_pairs(const std::vector<double>& offsets) {
  PairedDataset ds;
  for (double o : offsets) {
    SlicePair p;
    p.x = ImageSlice(torch::full({4, 4}, static_cast<float>(o)));
    p.y_tilde = ImageSlice(torch::zeros({4, 4}));
    ds.pairs.push_back(p);
  }
  return ds;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("psnr reference values") {
    auto ref = torch::zeros({8, 8});
    CHECK(psnr(ref + 0.2, ref) == doctest::Approx(20.0).epsilon(1e-6));
    CHECK(psnr(ref + 2.0, ref) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(psnr(ref, ref) == kPsnrCap);
  }

  TEST_CASE("psnr is symmetric and decreases with the error") {
    auto a = testing::random_image(16, 16, 1);
    auto b = testing::random_image(16, 16, 2);
    CHECK(psnr(a, b) == psnr(b, a));
    double prev = kPsnrCap;
    for (double s : {0.01, 0.05, 0.1, 0.4}) {
      const double v = psnr(a + s, a);
      CHECK(v < prev);
      prev = v;
    }
  }

  TEST_CASE("ssim matches a direct window loop") {
    for (uint64_t seed = 0; seed < 4; ++seed) {
      auto a = testing::random_image(20, 17, seed);
      auto b = (a * 0.7 + 0.3 * testing::random_image(20, 17, seed + 10)).clamp(-1, 1);
      CHECK(std::abs(ssim(a, b) - naive_ssim(a, b)) <= 1e-9);
    }
    auto a = testing::random_image(16, 16, 7);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ssim(a, -a) < 0.5);
    CHECK_THROWS_AS(ssim(torch::zeros({10, 10}), torch::zeros({10, 10})), ValidationError);
  }

  TEST_CASE("metric reports aggregate per pair values") {
    std::vector<ImageSlice> pred;
    std::vector<ImageSlice> ref;
    for (uint64_t s = 0; s < 3; ++s) {
      ref.emplace_back(testing::random_image(16, 16, s));
      pred.emplace_back(ref.back().pixels + 0.1F * static_cast<float>(s + 1));
    }
    const auto report = evaluate_pairs(pred, ref);
    REQUIRE(report.n() == 3);
    double sum = 0;
    for (const auto& m : report.per_pair) sum += m.psnr_db;
    CHECK(report.psnr_db.mean == doctest::Approx(sum / 3.0));
    CHECK(report.ssim_pct.mean == doctest::Approx(100.0 * (report.per_pair[0].ssim + report.per_pair[1].ssim +
                                                          report.per_pair[2].ssim) /
                                                  3.0));
    testing::TempDir dir("eval_csv");
    report.write_csv(dir.path() / "m.csv");
    CHECK(std::filesystem::exists(dir.path() / "m.csv"));
    CHECK_THROWS_AS(evaluate_pairs(pred, {ref[0]}), ValidationError);
  }

  TEST_CASE("ks statistic") {
    CHECK(ks_statistic({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(ks_statistic({0, 0.1}, {5, 6}) == 1.0);
    CHECK(ks_statistic({1, 2, 3, 4}, {3, 4, 5, 6}) == doctest::Approx(0.5));
  }

  TEST_CASE("roc auc agrees with the pairwise definition") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> level(0, 5);
    std::vector<double> pos;
    std::vector<double> neg;
    std::vector<double> scores;
    std::vector<double> labels;
    for (int i = 0; i < 60; ++i) {
      const bool positive = i % 3 == 0;
      const double s = level(rng) + (positive ? 1.0 : 0.0);
      (positive ? pos : neg).push_back(s);
      scores.push_back(s);
      labels.push_back(positive ? 1.0 : 0.0);
    }
    const double auc = roc_auc(torch::tensor(scores), torch::tensor(labels));
    CHECK(auc == doctest::Approx(naive_auc(pos, neg)).epsilon(1e-12));
    CHECK(roc_auc(torch::tensor({0.1, 0.9}), torch::tensor({0.0, 1.0})) == 1.0);
    CHECK(roc_auc(torch::tensor({0.5, 0.5}), torch::tensor({0.0, 1.0})) == 0.5);
  }

  TEST_CASE("error histogram with a stub detector") {
    const auto ds = constant_pairs({0.0, 0.2, 0.4, 0.4});
    PairMap detector = [](const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs() / 2.0; };
    const auto hist = error_histogram(ds, detector, nullptr, 4, 0.4);
    CHECK_FALSE(hist.has_after());
    REQUIRE(hist.before_values.size() == 4);
    CHECK(hist.before_values[1] == doctest::Approx(0.1));
    REQUIRE(hist.edges.size() == 5);
    double sum = 0;
    for (double f : hist.before) sum += f;
    CHECK(sum == doctest::Approx(1.0));
    CHECK(hist.before[0] == doctest::Approx(0.25));
    CHECK(hist.before[2] == doctest::Approx(0.5));

    PairMap perfect = [](const torch::Tensor&, const torch::Tensor& b) { return b; };
    const auto both = error_histogram(ds, detector, perfect, 4, 0.4);
    REQUIRE(both.has_after());
    CHECK(both.after[0] == doctest::Approx(1.0));

    testing::TempDir dir("hist");
    both.write_csv(dir.path() / "h.csv");
    const auto back = ErrorHistogram::read_csv(dir.path() / "h.csv");
    CHECK(back.before.size() == both.before.size());
    CHECK(back.after[0] == doctest::Approx(1.0));
  }

  TEST_CASE("frequencies sum to one and include the upper edge") {
    const auto f = frequencies({0.0, 0.5, 1.0, 1.0}, {0.0, 0.5, 1.0});
    REQUIRE(f.size() == 2);
    CHECK(f[0] == doctest::Approx(0.25));
    CHECK(f[1] == doctest::Approx(0.75));
  }

  TEST_CASE("ablation table shape") {
    const auto& table = ablation_table();
    REQUIRE(table.size() == 6);
    CHECK(table[0].id == "V1");
    CHECK(table[0].prior == cycle::PriorForm::kNone);
    CHECK(table[1].prior == cycle::PriorForm::kPlain);
    CHECK(table[2].uses_mreg == MRegUsage::kFineOnly);
    CHECK(table[3].uses_mreg == MRegUsage::kFull);
    CHECK(table[4].uses_mdet);
    CHECK(table[4].uses_mreg == MRegUsage::kNone);
    CHECK(table[5].uses_mdet);
    CHECK(table[5].uses_mreg == MRegUsage::kFull);
    for (const auto& v : table) {
      CHECK(cycle::uses_detector(v.prior) == v.uses_mdet);
      CHECK(cycle::uses_warp(v.prior) == (v.uses_mreg != MRegUsage::kNone));
    }
    CHECK(find_variant("V4").uses_mreg == MRegUsage::kFull);
    CHECK(parse_variants("V1,V6").size() == 2);
    CHECK_THROWS(find_variant("V9"));
  }

  TEST_CASE("missing modules are reported per variant") {
    AblationModules none;
    CHECK_NOTHROW(check_prerequisites(parse_variants("V1,V2"), none));
    try {
      check_prerequisites(parse_variants("V1,V5"), none);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("V5") != std::string::npos);
    }
    AblationModules warps;
    warps.full_warp = [](const torch::Tensor& a, const torch::Tensor&) { return a; };
    CHECK_NOTHROW(check_prerequisites(parse_variants("V4"), warps));
    CHECK_THROWS_AS(check_prerequisites(parse_variants("V3"), warps), ConfigError);
    CHECK_THROWS_AS(check_prerequisites(parse_variants("V6"), warps), ConfigError);
  }
}
