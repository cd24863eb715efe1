#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "sdgm/corpus.hpp"
#include "sdgm/gmm.hpp"
#include "sdgm/loss.hpp"
#include "sdgm/params.hpp"

namespace sdgm::ckpt {

inline constexpr std::uint32_t kVersion = 1;

// Everything needed to evaluate or generate from a trained model.
//
// Layout (all little-endian):
//   "SDGMCKPT"  u32 version
//   u32 V D K L w M
//   f64 alpha beta gamma delta
//   u32 activation head precision token_mode n_fft hop window center
//   f32 tensors, row-major: embedding, conv kernel, conv bias, A, F, Phi,
//       gate, vocab proj, vocab bias, copy proj
//   f32 GMM weights (M), means (M x K), variances (M x K)
struct Checkpoint {
  ModelConfig model;
  loss::LossWeights weights;
  loss::StftConfig stft;
  corpus::TokenMode token_mode = corpus::TokenMode::Char;
  ModelParams params;
  gmm::GmmModel gmm;  // M = 0 when no prior has been fitted
};

std::string serialize(const Checkpoint& c);
Checkpoint deserialize(std::string_view bytes);

void save(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

// Standalone prior: "SDGMGMM\0", u32 version, u32 M, u32 K, then f32 weights,
// means, variances.
std::string serialize_gmm(const gmm::GmmModel& g);
gmm::GmmModel deserialize_gmm(std::string_view bytes);
void save_gmm(const gmm::GmmModel& g, const std::filesystem::path& path);
gmm::GmmModel load_gmm(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace sdgm::ckpt
