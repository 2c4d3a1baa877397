#include "mitia/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "mitia/errors.hpp"
#include "mitia/random.hpp"

namespace mitia {

torch::optim::Adam make_adam(const std::vector<torch::Tensor>& parameters, const OptimizerConfig& config) {
  return torch::optim::Adam(parameters, torch::optim::AdamOptions(config.learning_rate)
                                            .betas(std::make_tuple(config.beta1, config.beta2)));
}

void require_finite(const torch::Tensor& loss, std::string_view stage) {
  const double value = loss.item<double>();
  if (!std::isfinite(value)) {
    throw DivergenceError(fmt::format("{}: non-finite loss ({})", stage, value));
  }
}

CsvLog::CsvLog(const std::filesystem::path& path, const std::vector<std::string>& header) {
  if (path.empty()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot open log '" + path.string() + "'");
  row(header);
}

void CsvLog::row(const std::vector<std::string>& values) {
  if (!out_.is_open()) return;
  for (size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
  out_ << "\n";
  out_.flush();
}

std::string format_number(double value, int precision) { return fmt::format("{:.{}f}", value, precision); }

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0xe90c, static_cast<uint64_t>(epoch)}));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace mitia
