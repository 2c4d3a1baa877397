#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace mitia {

// Maps a pair of [N, 1, H, W] images to a [N, 1, H, W] result. Used for
// detectors (pair -> error map) and registration (pair -> warped source).
using PairMap = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

// Maps one [N, C, H, W] batch to another (generators, discriminators).
using ImageMap = std::function<torch::Tensor(const torch::Tensor&)>;

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
};

torch::optim::Adam make_adam(const std::vector<torch::Tensor>& parameters, const OptimizerConfig& config);

// Throws DivergenceError naming `stage` if the loss is not finite.
void require_finite(const torch::Tensor& loss, std::string_view stage);

// Append-only CSV with a fixed header; a no-op when constructed with an
// empty path.
class CsvLog {
 public:
  CsvLog() = default;
  CsvLog(const std::filesystem::path& path, const std::vector<std::string>& header);

  void row(const std::vector<std::string>& values);
  bool enabled() const { return out_.is_open(); }

 private:
  std::ofstream out_;
};

// Fixed-precision decimal rendering used in every CSV so that reruns are
// byte-identical.
std::string format_number(double value, int precision = 6);

// Deterministic permutation of [0, n) for epoch ordering.
std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch);

}  // namespace mitia
