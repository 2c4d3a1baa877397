#include "mitia/synth/phantom.hpp"

#include <algorithm>
#include <array>
#include <iterator>
#include <cmath>
#include <numbers>
#include <set>

#include "mitia/errors.hpp"
#include "mitia/random.hpp"

namespace mitia::synth {
namespace {

constexpr int kSupersample = 3;
constexpr std::array<double, 4> kPaletteA{-0.1, 0.25, 0.55, 0.85};
constexpr double kHeadIntensityA = -0.45;
constexpr double kFlipProbability = 0.35;

bool contains(const PhantomStructure& s, double u, double v, double z) {
  const double dz = (z - s.center_z) / s.radius_z;
  const double f2 = 1.0 - dz * dz;
  if (f2 <= 0.0) return false;
  const double f = std::sqrt(f2);
  const double du = u - s.center_x;
  const double dv = v - s.center_y;
  const double ca = std::cos(s.angle);
  const double sa = std::sin(s.angle);
  const double pu = (ca * du + sa * dv) / (s.radius_x * f);
  const double pv = (-sa * du + ca * dv) / (s.radius_y * f);
  const double d = pu * pu + pv * pv;
  if (d > 1.0) return false;
  if (s.shell <= 0.0) return true;
  const double inner = 1.0 - s.shell;
  return d >= inner * inner;
}

// Index of the topmost structure containing the point, or -1.
int topmost(const std::vector<PhantomStructure>& structures, double u, double v, double z) {
  for (auto it = structures.rbegin(); it != structures.rend(); ++it) {
    if (contains(*it, u, v, z)) return static_cast<int>(std::distance(structures.begin(), it.base()) - 1);
  }
  return -1;
}

double to_normalized(double pixel, int size) { return pixel / size * 2.0 - 1.0; }

}  // namespace

double intensity_transfer(double a) { return 2.0 * std::pow((a + 1.0) / 2.0, 0.6) - 1.0; }

torch::Tensor PhantomModel::labels(int slice) const {
  auto out = torch::empty({size, size}, torch::kInt32);
  auto acc = out.accessor<int32_t, 2>();
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const int index = topmost(structures, to_normalized(c + 0.5, size), to_normalized(r + 0.5, size), slice);
      acc[r][c] = index < 0 ? -1 : structures[index].id;
    }
  }
  return out;
}

std::vector<int> PhantomModel::present(int slice) const {
  auto map = labels(slice);
  std::set<int> ids;
  const int32_t* data = map.data_ptr<int32_t>();
  for (int64_t i = 0; i < map.numel(); ++i) {
    if (data[i] >= 0) ids.insert(data[i]);
  }
  return {ids.begin(), ids.end()};
}

ImageSlice PhantomModel::render(int slice, Modality modality) const {
  auto out = torch::empty({size, size}, torch::kFloat32);
  auto acc = out.accessor<float, 2>();
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      double sum = 0.0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double u = to_normalized(c + (sx + 0.5) / kSupersample, size);
          const double v = to_normalized(r + (sy + 0.5) / kSupersample, size);
          const int index = topmost(structures, u, v, slice);
          if (index < 0) {
            sum += kBackground;
          } else {
            sum += modality == Modality::kA ? structures[index].intensity_a : structures[index].intensity_b;
          }
        }
      }
      acc[r][c] = static_cast<float>(sum / (kSupersample * kSupersample));
    }
  }
  return ImageSlice(out, modality == Modality::kA ? "A" : "B", slice);
}

PhantomModel make_phantom_model(uint64_t seed, int size, int num_slices) {
  if (size < 16) throw ValidationError("phantom size must be at least 16");
  if (num_slices < 1) throw ValidationError("phantom needs at least one slice");
  Rng rng(derive_seed(seed, {0x9da7}));
  PhantomModel model;
  model.size = size;
  model.num_slices = num_slices;
  const bool single = num_slices == 1;
  const double mid_z = (num_slices - 1) / 2.0;

  PhantomStructure head;
  head.id = 0;
  head.center_x = uniform(rng, -0.05, 0.05);
  head.center_y = uniform(rng, -0.05, 0.05);
  head.center_z = mid_z;
  head.radius_x = uniform(rng, 0.70, 0.85);
  head.radius_y = uniform(rng, 0.78, 0.92);
  head.radius_z = 1e9;
  head.angle = uniform(rng, -0.3, 0.3);
  head.intensity_a = kHeadIntensityA;
  head.intensity_b = intensity_transfer(kHeadIntensityA);
  model.structures.push_back(head);

  const int inner = single ? uniform_int(rng, 2, 7) : uniform_int(rng, 5, 9);
  for (int i = 0; i < inner; ++i) {
    PhantomStructure s;
    s.id = i + 1;
    const double rho = uniform(rng, 0.0, 0.5);
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    s.center_x = head.center_x + rho * head.radius_x * std::cos(phi);
    s.center_y = head.center_y + rho * head.radius_y * std::sin(phi);
    s.radius_x = uniform(rng, 0.10, 0.30);
    s.radius_y = uniform(rng, 0.10, 0.30);
    s.angle = uniform(rng, 0.0, std::numbers::pi);
    s.shell = bernoulli(rng, 0.3) ? uniform(rng, 0.35, 0.6) : 0.0;
    if (single) {
      s.center_z = 0.0;
      s.radius_z = 1e9;
    } else {
      s.center_z = uniform(rng, 0.0, num_slices - 1.0);
      s.radius_z = uniform(rng, 3.0, std::max(4.0, 0.45 * num_slices));
    }
    s.intensity_a = kPaletteA[uniform_int(rng, 0, static_cast<int>(kPaletteA.size()) - 1)];
    const double transferred = intensity_transfer(s.intensity_a);
    s.intensity_b = bernoulli(rng, kFlipProbability) ? -transferred : transferred;
    model.structures.push_back(s);
  }
  return model;
}

PhantomPair make_phantom_pair(uint64_t seed, int size) {
  const auto model = make_phantom_model(seed, size, 1);
  return {model.render(0, Modality::kA), model.render(0, Modality::kB), GroundTruthMasks::all_aligned(size, size)};
}

PhantomSubject make_phantom_subject(uint64_t seed, int size, int num_slices, const std::string& subject_id) {
  const auto model = make_phantom_model(seed, size, num_slices);
  PhantomSubject subject;
  subject.x.subject_id = subject.y.subject_id = subject_id;
  subject.x.modality_tag = "A";
  subject.y.modality_tag = "B";
  std::vector<torch::Tensor> labels;
  for (int z = 0; z < num_slices; ++z) {
    subject.x.slices.push_back(model.render(z, Modality::kA));
    subject.y.slices.push_back(model.render(z, Modality::kB));
    labels.push_back(model.labels(z));
  }
  subject.x.structure_labels = labels;
  subject.y.structure_labels = std::move(labels);
  return subject;
}

std::vector<PhantomSubject> make_phantom_corpus(uint64_t seed, int num_subjects, int slices_per_subject, int size) {
  std::vector<PhantomSubject> corpus;
  corpus.reserve(num_subjects);
  for (int s = 0; s < num_subjects; ++s) {
    corpus.push_back(make_phantom_subject(derive_seed(seed, {static_cast<uint64_t>(s)}), size, slices_per_subject,
                                          "subject" + std::to_string(s)));
  }
  return corpus;
}

}  // namespace mitia::synth
