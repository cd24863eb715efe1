#pragma once

#include <cstdint>
#include <span>

#include "sdgm/corpus.hpp"
#include "sdgm/gmm.hpp"
#include "sdgm/stft.hpp"
#include "sdgm/tensor.hpp"

namespace sdgm::loss {

// B x L validity flags (1 = counts); an empty span marks every position valid.
using Mask = std::span<const std::uint8_t>;

// ||X_hat - X||^2 over valid positions / (valid positions * D).
double time_mse(const Tensor& Xhat, const Tensor& X, Mask mask,
                Tensor* dXhat = nullptr, Tensor* dX = nullptr);

// Squared difference of per-channel STFT magnitudes / (B * F * T * D), where
// B counts rows with at least one valid position. Invalid positions are
// zeroed in both signals before the transform.
double freq_loss(const Tensor& Xhat, const Tensor& X, Mask mask,
                 const StftConfig& cfg, Tensor* dXhat = nullptr,
                 Tensor* dX = nullptr);

// Mean over valid positions of -log softmax(logits)[target].
double nll_loss(const Tensor& logits, std::span<const corpus::TokenId> targets,
                Mask mask, Tensor* dlogits = nullptr);

// Mean over valid positions of -log p_gmm(C[b, t, :]).
double prior_loss(const Tensor& C, const gmm::GmmModel& gmm, Mask mask,
                  Tensor* dC = nullptr);

struct LossWeights {
  double alpha = 1.0;
  double beta = 0.5;
  double gamma = 0.1;
  double delta = 0.01;

  void validate() const;
};

struct LossReport {
  double total = 0.0;
  double time = 0.0;  // components are unweighted
  double freq = 0.0;
  double nll = 0.0;
  double prior = 0.0;
  std::size_t token_count = 0;
};

struct LossInputs {
  const Tensor* Xhat = nullptr;
  const Tensor* X = nullptr;
  const Tensor* logits = nullptr;  // B x L x V
  std::span<const corpus::TokenId> targets;
  const Tensor* C = nullptr;
  const gmm::GmmModel* gmm = nullptr;  // null or empty: prior term skipped
  Mask mask;
};

// Weighted gradients of the total w.r.t. each input tensor.
struct LossGrads {
  Tensor dXhat;
  Tensor dX;
  Tensor dlogits;
  Tensor dC;
};

// A zero weight skips its term entirely (value reported as 0).
LossReport composite_loss(const LossInputs& in, const LossWeights& w,
                          const StftConfig& stft_cfg, LossGrads* grads = nullptr);

}  // namespace sdgm::loss
