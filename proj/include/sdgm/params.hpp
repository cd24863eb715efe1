#pragma once

#include <cstdint>
#include <string_view>

#include "sdgm/tensor.hpp"

namespace sdgm {

enum class Activation { Identity, Relu, Softmax };
enum class HeadKind { PointerGenerator, Softmax };
enum class Precision { F32, F64 };

Activation parse_activation(std::string_view s);
HeadKind parse_head_kind(std::string_view s);
Precision parse_precision(std::string_view s);
std::string_view to_string(Activation a);
std::string_view to_string(HeadKind h);
std::string_view to_string(Precision p);

struct ModelConfig {
  static constexpr std::size_t kMaxDictSize = 4096;

  std::size_t vocab_size = 0;  // V
  std::size_t d_model = 32;    // D
  std::size_t dict_size = 16;  // K
  std::size_t seq_len = 32;    // L
  std::size_t conv_width = 3;  // w
  Activation activation = Activation::Identity;
  HeadKind head = HeadKind::PointerGenerator;
  // F32 rounds every parameter to single precision after init and after each
  // optimizer step, so a checkpoint holds the trained model exactly.
  Precision precision = Precision::F32;

  void validate() const;
};

// Per-dimension amplitude, frequency (cycles per sequence) and phase of the
// K sinusoidal atoms, each K x D.
struct DictionaryParams {
  Tensor amplitude;
  Tensor frequency;
  Tensor phase;
};

struct MixingEncoderParams {
  Tensor kernel;  // K x D x w; tap w-1 sees the current position
  Tensor bias;    // K
};

struct PointerGenParams {
  Tensor gate;        // 2D, applied to [x_hat; c]
  Tensor vocab_proj;  // V x 2D
  Tensor vocab_bias;  // V
  Tensor copy_proj;   // D x D, score = x_hat^T W e_j
};

enum class ParamGroup { Embedding, Conv, Amplitude, Frequency, Phase, Head };
inline constexpr std::size_t kNumParamGroups = 6;
std::string_view to_string(ParamGroup g);

struct ModelParams {
  Tensor embedding;  // V x D
  MixingEncoderParams encoder;
  DictionaryParams dictionary;
  PointerGenParams head;
  // Bumped by every in-place update; forward caches remember it.
  std::uint64_t version = 0;

  static ModelParams zeros(const ModelConfig& cfg);
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  // Visits tensors in checkpoint order.
  template <class F>
  void for_each(F&& f) {
    f("embedding", ParamGroup::Embedding, embedding);
    f("conv_kernel", ParamGroup::Conv, encoder.kernel);
    f("conv_bias", ParamGroup::Conv, encoder.bias);
    f("amplitude", ParamGroup::Amplitude, dictionary.amplitude);
    f("frequency", ParamGroup::Frequency, dictionary.frequency);
    f("phase", ParamGroup::Phase, dictionary.phase);
    f("gen_gate", ParamGroup::Head, head.gate);
    f("vocab_proj", ParamGroup::Head, head.vocab_proj);
    f("vocab_bias", ParamGroup::Head, head.vocab_bias);
    f("copy_proj", ParamGroup::Head, head.copy_proj);
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each(
        [&](std::string_view n, ParamGroup g, Tensor& t) {
          f(n, g, static_cast<const Tensor&>(t));
        });
  }

  std::size_t parameter_count() const;
  bool all_finite() const;
  void round_to_f32();
  // Throws ShapeMismatch unless every tensor matches cfg.
  void check_shapes(const ModelConfig& cfg) const;
};

}  // namespace sdgm
