#include "sdgm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sdgm/error.hpp"
#include "sdgm/parallel.hpp"

namespace sdgm::model {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_shape(const Tensor& t, const std::vector<std::size_t>& shape,
                   const char* what) {
  if (t.shape != shape) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + " has the wrong shape");
  }
}

}  // namespace

Tensor embed(std::span<const TokenId> tokens, std::size_t rows, std::size_t len,
             const Tensor& embedding) {
  if (tokens.size() != rows * len) {
    throw Error(ErrorKind::ShapeMismatch, "token grid size disagrees with rows x len");
  }
  const std::size_t V = embedding.dim(0), D = embedding.dim(1);
  Tensor X({rows, len, D});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenId id = tokens[i];
    if (id < 0 || static_cast<std::size_t>(id) >= V) {
      throw Error(ErrorKind::IdOutOfRange, "token id " + std::to_string(id) +
                                               " outside embedding table of " +
                                               std::to_string(V));
    }
    auto src = embedding.vec(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), X.data.begin() + static_cast<std::ptrdiff_t>(i * D));
  }
  return X;
}

AtomTensor synthesize_atoms(const DictionaryParams& dict, std::size_t length) {
  if (length < 1) throw Error(ErrorKind::InvalidArgument, "atom length must be >= 1");
  const std::size_t K = dict.amplitude.dim(0), D = dict.amplitude.dim(1);
  if (!dict.frequency.same_shape(dict.amplitude) || !dict.phase.same_shape(dict.amplitude)) {
    throw Error(ErrorKind::ShapeMismatch, "dictionary tensors disagree in shape");
  }
  AtomTensor atoms{Tensor({K, length, D}), length};
  const double inv_len = 1.0 / static_cast<double>(length);
  // Along t the phase advances by a fixed step, so each block of kAnchor
  // samples is rotated forward from one exactly evaluated anchor. This keeps
  // the cost per sample flat (no libm range reduction in the inner loop) with
  // an error of a few ulps.
  constexpr std::size_t kAnchor = 16;
  parallel_for(K, [&](std::size_t k) {
    const double* a = dict.amplitude.data.data() + k * D;
    const double* f = dict.frequency.data.data() + k * D;
    const double* phi = dict.phase.data.data() + k * D;
    std::vector<double> cs(D), ss(D), s(D), c(D);
    for (std::size_t d = 0; d < D; ++d) {
      cs[d] = std::cos(kTwoPi * f[d] * inv_len);
      ss[d] = std::sin(kTwoPi * f[d] * inv_len);
    }
    for (std::size_t t = 0; t < length; ++t) {
      if (t % kAnchor == 0) {
        const double tau = kTwoPi * static_cast<double>(t + 1) * inv_len;
        for (std::size_t d = 0; d < D; ++d) {
          s[d] = std::sin(tau * f[d] + phi[d]);
          c[d] = std::cos(tau * f[d] + phi[d]);
        }
      }
      double* out = atoms.S.data.data() + (k * length + t) * D;
      for (std::size_t d = 0; d < D; ++d) {
        out[d] = a[d] * s[d];
        const double s_next = s[d] * cs[d] + c[d] * ss[d];
        c[d] = c[d] * cs[d] - s[d] * ss[d];
        s[d] = s_next;
      }
    }
  });
  return atoms;
}

Tensor causal_conv(const Tensor& X, const MixingEncoderParams& enc) {
  const std::size_t B = X.dim(0), L = X.dim(1), D = X.dim(2);
  const std::size_t K = enc.kernel.dim(0), w = enc.kernel.dim(2);
  if (enc.kernel.dim(1) != D || enc.bias.size() != K) {
    throw Error(ErrorKind::ShapeMismatch, "encoder weights disagree with the input width");
  }
  Tensor pre({B, L, K});
  parallel_for(B, [&](std::size_t b) {
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        double acc = enc.bias[k];
        const double* wk = enc.kernel.data.data() + k * D * w;
        for (std::size_t j = 0; j < w; ++j) {
          if (t + j < w - 1) continue;  // zero left padding
          auto x = X.vec(b, t + j - (w - 1));
          for (std::size_t d = 0; d < D; ++d) acc += wk[d * w + j] * x[d];
        }
        pre.at(b, t, k) = acc;
      }
    }
  });
  return pre;
}

Tensor activate(const Tensor& pre, Activation act) {
  Tensor C = pre;
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::Relu:
      for (double& v : C.data) v = std::max(v, 0.0);
      break;
    case Activation::Softmax: {
      const std::size_t K = pre.shape.back();
      for (std::size_t r = 0; r < pre.size() / K; ++r) {
        double* row = C.data.data() + r * K;
        const double m = *std::max_element(row, row + K);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += (row[k] = std::exp(row[k] - m));
        for (std::size_t k = 0; k < K; ++k) row[k] /= z;
      }
      break;
    }
  }
  return C;
}

Tensor mix_coefficients(const Tensor& X, const MixingEncoderParams& enc,
                        Activation act) {
  return activate(causal_conv(X, enc), act);
}

Tensor decode(const Tensor& C, const AtomTensor& atoms) {
  const Tensor& S = atoms.S;
  if (C.rank() != 3 || S.rank() != 3 || C.dim(2) != S.dim(0) || C.dim(1) != S.dim(1)) {
    throw Error(ErrorKind::ShapeMismatch,
                "coefficients (B x L x K) and atoms (K x L x D) disagree on K or L");
  }
  const std::size_t B = C.dim(0), L = C.dim(1), K = C.dim(2), D = S.dim(2);
  Tensor Xhat({B, L, D});
  parallel_for(B, [&](std::size_t b) {
    for (std::size_t t = 0; t < L; ++t) {
      auto out = Xhat.vec(b, t);
      for (std::size_t k = 0; k < K; ++k) {
        const double c = C.at(b, t, k);
        auto s = S.vec(k, t);
        for (std::size_t d = 0; d < D; ++d) out[d] += c * s[d];
      }
    }
  });
  return Xhat;
}

std::vector<double> decode_at(std::span<const double> c,
                              const DictionaryParams& dict, std::size_t t,
                              std::size_t length) {
  const std::size_t K = dict.amplitude.dim(0), D = dict.amplitude.dim(1);
  if (c.size() != K) {
    throw Error(ErrorKind::DimensionMismatch, "coefficient vector length must equal K");
  }
  if (t < 1 || t > length) {
    throw Error(ErrorKind::PositionOutOfRange,
                "position " + std::to_string(t) + " outside [1, " +
                    std::to_string(length) + "]");
  }
  const double tau = kTwoPi * static_cast<double>(t) / static_cast<double>(length);
  std::vector<double> x(D, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t d = 0; d < D; ++d) {
      x[d] += c[k] * dict.amplitude.at(k, d) *
              std::sin(tau * dict.frequency.at(k, d) + dict.phase.at(k, d));
    }
  }
  return x;
}

ForwardCache forward(std::span<const TokenId> tokens, std::size_t rows,
                     std::size_t len, const ModelParams& params,
                     const ModelConfig& cfg) {
  if (len != cfg.seq_len) {
    throw Error(ErrorKind::ShapeMismatch, "batch length " + std::to_string(len) +
                                              " differs from model seq_len " +
                                              std::to_string(cfg.seq_len));
  }
  ForwardCache cache;
  cache.rows = rows;
  cache.len = len;
  cache.tokens.assign(tokens.begin(), tokens.end());
  cache.X = embed(tokens, rows, len, params.embedding);
  cache.pre = causal_conv(cache.X, params.encoder);
  cache.C = activate(cache.pre, cfg.activation);
  cache.atoms = synthesize_atoms(params.dictionary, len);
  cache.Xhat = decode(cache.C, cache.atoms);
  cache.params_version = params.version;
  return cache;
}

ForwardCache forward(const corpus::Batch& batch, const ModelParams& params,
                     const ModelConfig& cfg) {
  return forward(batch.inputs, batch.rows, batch.len, params, cfg);
}

void backward(const ForwardCache& cache, const ModelParams& params,
              const ModelConfig& cfg, const Upstream& up, ModelParams& grads) {
  if (cache.params_version != params.version) {
    throw Error(ErrorKind::StaleCache, "forward cache was computed for other parameters");
  }
  const std::size_t B = cache.rows, L = cache.len, D = cfg.d_model, K = cfg.dict_size,
                    w = cfg.conv_width;
  if (!up.dXhat.data.empty()) require_shape(up.dXhat, {B, L, D}, "dXhat");
  if (!up.dC.data.empty()) require_shape(up.dC, {B, L, K}, "dC");
  if (!up.dX.data.empty()) require_shape(up.dX, {B, L, D}, "dX");

  // Decoder: dC += dXhat . S, dS = sum_b dXhat (x) C.
  Tensor dC = up.dC.data.empty() ? Tensor({B, L, K}) : up.dC;
  if (!up.dXhat.data.empty()) {
    const Tensor& S = cache.atoms.S;
    const double inv_len = 1.0 / static_cast<double>(L);
    const auto& dict = params.dictionary;
    auto& gdict = grads.dictionary;
    std::vector<double> dS(D);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t t = 0; t < L; ++t) {
        std::fill(dS.begin(), dS.end(), 0.0);
        auto s = S.vec(k, t);
        for (std::size_t b = 0; b < B; ++b) {
          auto g = up.dXhat.vec(b, t);
          const double c = cache.C.at(b, t, k);
          double acc = 0.0;
          for (std::size_t d = 0; d < D; ++d) {
            acc += g[d] * s[d];
            dS[d] += g[d] * c;
          }
          dC.at(b, t, k) += acc;
        }
        const double tau = kTwoPi * static_cast<double>(t + 1) * inv_len;
        for (std::size_t d = 0; d < D; ++d) {
          if (dS[d] == 0.0) continue;
          const double a = dict.amplitude.at(k, d);
          const double arg = tau * dict.frequency.at(k, d) + dict.phase.at(k, d);
          const double acos = a * std::cos(arg) * dS[d];
          gdict.amplitude.at(k, d) += std::sin(arg) * dS[d];
          gdict.frequency.at(k, d) += acos * tau;
          gdict.phase.at(k, d) += acos;
        }
      }
    }
  }

  // Activation.
  Tensor dpre = std::move(dC);
  switch (cfg.activation) {
    case Activation::Identity:
      break;
    case Activation::Relu:
      for (std::size_t i = 0; i < dpre.size(); ++i) {
        if (cache.pre[i] <= 0.0) dpre[i] = 0.0;
      }
      break;
    case Activation::Softmax:
      for (std::size_t r = 0; r < B * L; ++r) {
        const double* c = cache.C.data.data() + r * K;
        double* g = dpre.data.data() + r * K;
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += c[k] * g[k];
        for (std::size_t k = 0; k < K; ++k) g[k] = c[k] * (g[k] - s);
      }
      break;
  }

  // Causal conv.
  Tensor dX = up.dX.data.empty() ? Tensor({B, L, D}) : up.dX;
  auto& gk = grads.encoder.kernel.data;
  auto& gb = grads.encoder.bias.data;
  const auto& wk = params.encoder.kernel.data;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        const double g = dpre.at(b, t, k);
        if (g == 0.0) continue;
        gb[k] += g;
        for (std::size_t j = 0; j < w; ++j) {
          if (t + j < w - 1) continue;
          const std::size_t src = t + j - (w - 1);
          auto x = cache.X.vec(b, src);
          auto dx = dX.vec(b, src);
          for (std::size_t d = 0; d < D; ++d) {
            const std::size_t idx = (k * D + d) * w + j;
            gk[idx] += g * x[d];
            dx[d] += g * wk[idx];
          }
        }
      }
    }
  }

  // Embedding scatter-add.
  for (std::size_t i = 0; i < B * L; ++i) {
    auto row = grads.embedding.vec(static_cast<std::size_t>(cache.tokens[i]));
    const double* g = dX.data.data() + i * D;
    for (std::size_t d = 0; d < D; ++d) row[d] += g[d];
  }
}

std::size_t cache_bytes(const ForwardCache& cache) {
  const std::size_t doubles = cache.X.size() + cache.pre.size() + cache.C.size() +
                              cache.atoms.S.size() + cache.Xhat.size();
  return doubles * sizeof(double) + cache.tokens.size() * sizeof(TokenId);
}

}  // namespace sdgm::model
