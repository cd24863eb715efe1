#pragma once

#include <span>
#include <vector>

#include "sdgm/corpus.hpp"
#include "sdgm/params.hpp"

namespace sdgm::model {

using corpus::TokenId;

// Synthesized dictionary S[k, t, d] on the time grid (t+1)/L, t = 0..L-1.
struct AtomTensor {
  Tensor S;  // K x L x D
  std::size_t length = 0;
};

// X[b, t, :] = embedding row tokens[b, t].
Tensor embed(std::span<const TokenId> tokens, std::size_t rows, std::size_t len,
             const Tensor& embedding);

AtomTensor synthesize_atoms(const DictionaryParams& dict, std::size_t length);

// Causal Conv1D over time (zero left padding) mapping D channels to K.
Tensor causal_conv(const Tensor& X, const MixingEncoderParams& enc);
Tensor activate(const Tensor& pre, Activation act);
Tensor mix_coefficients(const Tensor& X, const MixingEncoderParams& enc,
                        Activation act);

// X_hat[b, t, d] = sum_k C[b, t, k] * S[k, t, d].
Tensor decode(const Tensor& C, const AtomTensor& atoms);

// Reconstruction at a single 1-based position t of a length-L grid.
std::vector<double> decode_at(std::span<const double> c,
                              const DictionaryParams& dict, std::size_t t,
                              std::size_t length);

struct ForwardCache {
  std::size_t rows = 0;
  std::size_t len = 0;
  std::vector<TokenId> tokens;
  Tensor X;     // B x L x D
  Tensor pre;   // B x L x K, before activation
  Tensor C;     // B x L x K
  AtomTensor atoms;
  Tensor Xhat;  // B x L x D
  std::uint64_t params_version = 0;
};

ForwardCache forward(std::span<const TokenId> tokens, std::size_t rows,
                     std::size_t len, const ModelParams& params,
                     const ModelConfig& cfg);
ForwardCache forward(const corpus::Batch& batch, const ModelParams& params,
                     const ModelConfig& cfg);

// Upstream gradients reaching the core pipeline. Empty tensors mean zero.
struct Upstream {
  Tensor dXhat;
  Tensor dC;
  Tensor dX;
};

// Accumulates gradients of the embedding, encoder and dictionary into
// `grads` (head tensors untouched). Throws StaleCache if params changed
// after the forward pass.
void backward(const ForwardCache& cache, const ModelParams& params,
              const ModelConfig& cfg, const Upstream& up, ModelParams& grads);

// Bytes held by the forward intermediates; the quantity the scaling bench
// reports as memory.
std::size_t cache_bytes(const ForwardCache& cache);

}  // namespace sdgm::model
