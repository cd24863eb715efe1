#pragma once

#include <cstdint>
#include <string_view>

#include "sdgm/params.hpp"

namespace sdgm::optim {

enum class DecayMode { Decoupled, L2 };
DecayMode parse_decay_mode(std::string_view s);
std::string_view to_string(DecayMode m);

struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  DecayMode decay_mode = DecayMode::Decoupled;
  double clip_norm = 1.0;
  std::size_t epochs = 10;
  std::size_t patience = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t step = 0;

  static AdamState for_params(const ModelParams& params);
};

double global_norm(const ModelParams& grads);

// Rescales every gradient by max_norm / g when the global L2 norm g exceeds
// max_norm. Returns g. Throws NonFinite naming the first offending tensor.
double clip_global_norm(ModelParams& grads, double max_norm);

// Bias-corrected Adam. Decoupled decay subtracts lr * wd * theta after the
// Adam move; L2 mode adds wd * theta to the gradient instead. Bumps
// params.version.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const OptimConfig& cfg);

}  // namespace sdgm::optim
