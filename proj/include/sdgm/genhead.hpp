#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string_view>
#include <vector>

#include "sdgm/corpus.hpp"
#include "sdgm/gmm.hpp"
#include "sdgm/model.hpp"
#include "sdgm/params.hpp"

namespace sdgm::head {

using corpus::TokenId;

// p_gen is clamped to [kGateClamp, 1 - kGateClamp].
inline constexpr double kGateClamp = 1e-9;

// sigma(w_gen^T [x_hat; c]), clamped.
double gen_gate(std::span<const double> xhat, std::span<const double> c,
                const PointerGenParams& p);

// softmax((W [x_hat; c] + b) / temperature) over the vocabulary.
std::vector<double> vocab_dist(std::span<const double> xhat, std::span<const double> c,
                               const PointerGenParams& p, double temperature);

struct CopyDist {
  std::vector<double> probs;  // V
  // Set when the context was empty; all mass then sits on unk.
  bool degenerate = false;
};

// Bilinear scores x_hat^T W_copy e_j over the context embeddings (n x D),
// softmaxed and scattered onto the context token ids.
CopyDist copy_dist(std::span<const double> xhat, const Tensor& context_embeddings,
                   std::span<const TokenId> context_ids, const PointerGenParams& p,
                   std::size_t vocab_size);

// p_gen * P_vocab + (1 - p_gen) * P_copy.
std::vector<double> mix_dist(double p_gen, std::span<const double> p_vocab,
                             std::span<const double> p_copy);

// Mean of the embeddings of positions max(0, t - w + 1) .. t of row b, the
// receptive field of the causal encoder.
std::vector<double> context_vector(const Tensor& X, std::size_t b, std::size_t t,
                                   std::size_t width);

// Training-time head outputs for every position.
struct HeadCache {
  std::size_t rows = 0;
  std::size_t len = 0;
  std::size_t vocab = 0;
  Tensor ctx;        // B x L x D
  Tensor gate;       // B x L (p_gen; 1 for the plain softmax head)
  std::vector<std::uint8_t> gate_clamped;
  Tensor vocab_probs;  // B x L x V
  Tensor copy_weights;  // B x L x L, softmax over context positions 0..t
  Tensor copy_query;    // B x L x D, W_copy^T x_hat
  Tensor probs;      // B x L x V mixture
  Tensor log_probs;  // B x L x V, fed to nll_loss as logits
};

HeadCache predict(const model::ForwardCache& fwd, const ModelParams& params,
                  const ModelConfig& cfg);

// Given dL/dlog_probs, accumulates head parameter gradients into `grads` and
// the gradients reaching X_hat and X (through context and copy scores).
void backward(const model::ForwardCache& fwd, const HeadCache& hc,
              const ModelParams& params, const ModelConfig& cfg,
              const Tensor& dlog_probs, ModelParams& grads, Tensor& dXhat, Tensor& dX);

// Sliding context for generation: the last `width` token embeddings and
// their mean.
class ContextState {
 public:
  ContextState(std::size_t width, std::size_t dim);
  void push(std::span<const double> embedding);
  std::span<const double> vector() const { return c_; }
  std::size_t step() const { return step_; }
  std::size_t history_size() const { return ring_.size(); }

 private:
  std::size_t width_;
  std::vector<double> c_;
  std::deque<std::vector<double>> ring_;
  std::size_t step_ = 0;
};

enum class DecodeMode { Sample, Argmax };
DecodeMode parse_decode_mode(std::string_view s);

struct GenRequest {
  std::size_t length = 16;
  DecodeMode mode = DecodeMode::Sample;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::vector<TokenId> prompt;  // empty: start from bos

  void validate() const;
};

struct StepDiagnostics {
  std::size_t step = 0;
  double p_gen = 0.0;
  TokenId id = 0;
  bool copy_degenerate = false;
  std::vector<std::pair<TokenId, double>> top;  // best five, descending
};

struct GenResult {
  std::vector<TokenId> tokens;  // generated ids only (prompt excluded)
  std::vector<StepDiagnostics> steps;
};

// For step i the atoms are evaluated at 1-based position P + i, P being the
// prompt length (1 for the implicit bos); throws PositionOutOfRange when that
// exceeds the model length.
GenResult generate(const ModelParams& params, const ModelConfig& cfg,
                   const gmm::GmmModel& gmm, const GenRequest& req);

}  // namespace sdgm::head
