#include "sdgm/params.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "sdgm/error.hpp"

namespace sdgm {

Activation parse_activation(std::string_view s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  if (s == "softmax") return Activation::Softmax;
  throw Error(ErrorKind::InvalidArgument,
              "unknown activation '" + std::string(s) + "' (identity|relu|softmax)");
}

HeadKind parse_head_kind(std::string_view s) {
  if (s == "pointer") return HeadKind::PointerGenerator;
  if (s == "softmax") return HeadKind::Softmax;
  throw Error(ErrorKind::InvalidArgument,
              "unknown head '" + std::string(s) + "' (pointer|softmax)");
}

Precision parse_precision(std::string_view s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw Error(ErrorKind::InvalidArgument,
              "unknown precision '" + std::string(s) + "' (f32|f64)");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

std::string_view to_string(HeadKind h) {
  return h == HeadKind::PointerGenerator ? "pointer" : "softmax";
}

std::string_view to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::Embedding: return "embedding";
    case ParamGroup::Conv: return "conv";
    case ParamGroup::Amplitude: return "A";
    case ParamGroup::Frequency: return "F";
    case ParamGroup::Phase: return "Phi";
    case ParamGroup::Head: return "head";
  }
  return "?";
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw Error(ErrorKind::InvalidArgument, msg);
  };
  require(vocab_size >= 1, "vocab_size must be >= 1");
  require(d_model >= 1, "d_model must be >= 1");
  require(dict_size >= 1, "dict_size must be >= 1");
  require(dict_size <= kMaxDictSize, "dict_size exceeds the supported maximum");
  require(seq_len >= 1, "seq_len must be >= 1");
  require(conv_width >= 1, "conv_width must be >= 1");
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  const std::size_t V = cfg.vocab_size, D = cfg.d_model, K = cfg.dict_size,
                    w = cfg.conv_width;
  ModelParams p;
  p.embedding = Tensor({V, D});
  p.encoder.kernel = Tensor({K, D, w});
  p.encoder.bias = Tensor({K});
  p.dictionary.amplitude = Tensor({K, D});
  p.dictionary.frequency = Tensor({K, D});
  p.dictionary.phase = Tensor({K, D});
  p.head.gate = Tensor({2 * D});
  p.head.vocab_proj = Tensor({V, 2 * D});
  p.head.vocab_bias = Tensor({V});
  p.head.copy_proj = Tensor({D, D});
  return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p = zeros(cfg);
  std::mt19937_64 rng(seed);
  const double D = static_cast<double>(cfg.d_model);
  const double K = static_cast<double>(cfg.dict_size);
  const double w = static_cast<double>(cfg.conv_width);

  auto normal = [&](Tensor& t, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data) v = dist(rng);
  };
  auto uniform = [&](Tensor& t, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.data) v = dist(rng);
  };

  normal(p.embedding, 1.0);
  normal(p.encoder.kernel, 1.0 / std::sqrt(D * w));
  normal(p.dictionary.amplitude, 1.0 / std::sqrt(K));
  uniform(p.dictionary.frequency, 0.0, K / 2.0);
  uniform(p.dictionary.phase, 0.0, 2.0 * std::numbers::pi);
  normal(p.head.gate, 0.01);
  normal(p.head.vocab_proj, 1.0 / std::sqrt(2.0 * D));
  normal(p.head.copy_proj, 1.0 / D);

  if (cfg.precision == Precision::F32) p.round_to_f32();
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, ParamGroup, const Tensor& t) { n += t.size(); });
  return n;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each([&](std::string_view, ParamGroup, const Tensor& t) {
    for (double v : t.data) ok = ok && std::isfinite(v);
  });
  return ok;
}

void ModelParams::round_to_f32() {
  for_each([](std::string_view, ParamGroup, Tensor& t) {
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
  });
}

void ModelParams::check_shapes(const ModelConfig& cfg) const {
  const ModelParams ref = zeros(cfg);
  std::vector<const Tensor*> mine;
  for_each([&](std::string_view, ParamGroup, const Tensor& t) { mine.push_back(&t); });
  std::size_t i = 0;
  ref.for_each([&](std::string_view name, ParamGroup, const Tensor& t) {
    if (!mine[i++]->same_shape(t)) {
      throw Error(ErrorKind::ShapeMismatch,
                  "parameter '" + std::string(name) + "' does not match the model config");
    }
  });
}

}  // namespace sdgm
