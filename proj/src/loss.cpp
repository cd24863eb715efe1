#include "sdgm/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sdgm/error.hpp"

namespace sdgm::loss {

namespace {

bool valid(Mask mask, std::size_t i) { return mask.empty() || mask[i] != 0; }

std::size_t count_valid(Mask mask, std::size_t positions) {
  if (mask.empty()) return positions;
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(),
                                                [](std::uint8_t m) { return m != 0; }));
}

void check_mask(Mask mask, std::size_t positions) {
  if (!mask.empty() && mask.size() != positions) {
    throw Error(ErrorKind::ShapeMismatch, "mask size disagrees with B x L");
  }
}

void prepare(Tensor* g, const Tensor& like) {
  if (g != nullptr) *g = Tensor::zeros_like(like);
}

void axpy(Tensor& dst, double a, const Tensor& src) {
  if (dst.data.empty()) dst = Tensor::zeros_like(src);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += a * src[i];
}

}  // namespace

double time_mse(const Tensor& Xhat, const Tensor& X, Mask mask, Tensor* dXhat,
                Tensor* dX) {
  if (!Xhat.same_shape(X) || X.rank() != 3) {
    throw Error(ErrorKind::ShapeMismatch, "time_mse needs two B x L x D tensors of equal shape");
  }
  const std::size_t BL = X.dim(0) * X.dim(1), D = X.dim(2);
  check_mask(mask, BL);
  prepare(dXhat, X);
  prepare(dX, X);
  const std::size_t n = count_valid(mask, BL);
  if (n == 0) return 0.0;
  const double norm = 1.0 / static_cast<double>(n * D);
  double sum = 0.0;
  for (std::size_t i = 0; i < BL; ++i) {
    if (!valid(mask, i)) continue;
    for (std::size_t d = 0; d < D; ++d) {
      const double diff = Xhat[i * D + d] - X[i * D + d];
      sum += diff * diff;
      if (dXhat != nullptr) (*dXhat)[i * D + d] = 2.0 * diff * norm;
      if (dX != nullptr) (*dX)[i * D + d] = -2.0 * diff * norm;
    }
  }
  return sum * norm;
}

double freq_loss(const Tensor& Xhat, const Tensor& X, Mask mask,
                 const StftConfig& cfg, Tensor* dXhat, Tensor* dX) {
  if (!Xhat.same_shape(X) || X.rank() != 3) {
    throw Error(ErrorKind::ShapeMismatch, "freq_loss needs two B x L x D tensors of equal shape");
  }
  cfg.validate();
  const std::size_t B = X.dim(0), L = X.dim(1), D = X.dim(2);
  check_mask(mask, B * L);
  prepare(dXhat, X);
  prepare(dX, X);
  const std::size_t F = cfg.bins(), T = cfg.frames(L);

  std::vector<std::size_t> rows;
  for (std::size_t b = 0; b < B; ++b) {
    bool any = false;
    for (std::size_t t = 0; t < L; ++t) any = any || valid(mask, b * L + t);
    if (any) rows.push_back(b);
  }
  if (rows.empty()) return 0.0;
  const double norm = 1.0 / static_cast<double>(rows.size() * F * T * D);

  std::vector<double> a(L), r(L), dmag(F * T), ga(L), gr(L);
  double sum = 0.0;
  for (std::size_t b : rows) {
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t t = 0; t < L; ++t) {
        const bool v = valid(mask, b * L + t);
        a[t] = v ? Xhat.at(b, t, d) : 0.0;
        r[t] = v ? X.at(b, t, d) : 0.0;
      }
      const Spectrogram sa = stft(a, cfg);
      const Spectrogram sr = stft(r, cfg);
      for (std::size_t i = 0; i < F * T; ++i) {
        const double diff = std::abs(sa.values[i]) - std::abs(sr.values[i]);
        sum += diff * diff;
        dmag[i] = 2.0 * diff * norm;
      }
      if (dXhat == nullptr && dX == nullptr) continue;
      std::fill(ga.begin(), ga.end(), 0.0);
      stft_magnitude_backward(sa, dmag, cfg, ga);
      std::fill(gr.begin(), gr.end(), 0.0);
      for (double& g : dmag) g = -g;
      stft_magnitude_backward(sr, dmag, cfg, gr);
      for (std::size_t t = 0; t < L; ++t) {
        if (!valid(mask, b * L + t)) continue;
        if (dXhat != nullptr) dXhat->at(b, t, d) = ga[t];
        if (dX != nullptr) dX->at(b, t, d) = gr[t];
      }
    }
  }
  return sum * norm;
}

double nll_loss(const Tensor& logits, std::span<const corpus::TokenId> targets,
                Mask mask, Tensor* dlogits) {
  if (logits.rank() != 3 || targets.size() != logits.dim(0) * logits.dim(1)) {
    throw Error(ErrorKind::ShapeMismatch, "nll_loss needs B x L x V logits and B x L targets");
  }
  const std::size_t BL = targets.size(), V = logits.dim(2);
  check_mask(mask, BL);
  prepare(dlogits, logits);
  const std::size_t n = count_valid(mask, BL);
  if (n == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < BL; ++i) {
    if (!valid(mask, i)) continue;
    const auto tgt = targets[i];
    if (tgt < 0 || static_cast<std::size_t>(tgt) >= V) {
      throw Error(ErrorKind::IdOutOfRange, "target id " + std::to_string(tgt) + " >= V");
    }
    const double* z = logits.data.data() + i * V;
    const double m = *std::max_element(z, z + V);
    double s = 0.0;
    for (std::size_t v = 0; v < V; ++v) s += std::exp(z[v] - m);
    const double lse = m + std::log(s);
    sum += lse - z[tgt];
    if (dlogits != nullptr) {
      double* g = dlogits->data.data() + i * V;
      for (std::size_t v = 0; v < V; ++v) g[v] = std::exp(z[v] - lse) * inv_n;
      g[tgt] -= inv_n;
    }
  }
  return sum * inv_n;
}

double prior_loss(const Tensor& C, const gmm::GmmModel& gmm, Mask mask, Tensor* dC) {
  if (C.rank() != 3) throw Error(ErrorKind::ShapeMismatch, "prior_loss needs B x L x K coefficients");
  const std::size_t BL = C.dim(0) * C.dim(1), K = C.dim(2);
  if (gmm.dim() != K) {
    throw Error(ErrorKind::DimensionMismatch, "GMM dimension " + std::to_string(gmm.dim()) +
                                                  " differs from K=" + std::to_string(K));
  }
  check_mask(mask, BL);
  prepare(dC, C);
  const std::size_t n = count_valid(mask, BL);
  if (n == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> grad(K);
  double sum = 0.0;
  for (std::size_t i = 0; i < BL; ++i) {
    if (!valid(mask, i)) continue;
    std::span<const double> z(C.data.data() + i * K, K);
    sum -= gmm::log_density(z, gmm, grad);
    if (dC != nullptr) {
      for (std::size_t k = 0; k < K; ++k) (*dC)[i * K + k] = -grad[k] * inv_n;
    }
  }
  return sum * inv_n;
}

void LossWeights::validate() const {
  if (!(alpha >= 0 && beta >= 0 && gamma >= 0 && delta >= 0)) {
    throw Error(ErrorKind::InvalidArgument, "loss weights must be nonnegative");
  }
}

LossReport composite_loss(const LossInputs& in, const LossWeights& w,
                          const StftConfig& stft_cfg, LossGrads* grads) {
  w.validate();
  LossReport rep;
  if (grads != nullptr) *grads = LossGrads{};
  if (in.X != nullptr) {
    rep.token_count = count_valid(in.mask, in.X->dim(0) * in.X->dim(1));
  } else if (in.logits != nullptr) {
    rep.token_count = count_valid(in.mask, in.logits->dim(0) * in.logits->dim(1));
  }

  Tensor g1, g2;
  if (w.alpha > 0.0) {
    rep.time = time_mse(*in.Xhat, *in.X, in.mask, grads ? &g1 : nullptr, grads ? &g2 : nullptr);
    if (grads != nullptr) {
      axpy(grads->dXhat, w.alpha, g1);
      axpy(grads->dX, w.alpha, g2);
    }
  }
  if (w.beta > 0.0) {
    rep.freq = freq_loss(*in.Xhat, *in.X, in.mask, stft_cfg, grads ? &g1 : nullptr,
                         grads ? &g2 : nullptr);
    if (grads != nullptr) {
      axpy(grads->dXhat, w.beta, g1);
      axpy(grads->dX, w.beta, g2);
    }
  }
  if (w.gamma > 0.0) {
    rep.nll = nll_loss(*in.logits, in.targets, in.mask, grads ? &g1 : nullptr);
    if (grads != nullptr) axpy(grads->dlogits, w.gamma, g1);
  }
  if (w.delta > 0.0 && in.gmm != nullptr && !in.gmm->empty()) {
    rep.prior = prior_loss(*in.C, *in.gmm, in.mask, grads ? &g1 : nullptr);
    if (grads != nullptr) axpy(grads->dC, w.delta, g1);
  }
  rep.total = w.alpha * rep.time + w.beta * rep.freq + w.gamma * rep.nll + w.delta * rep.prior;
  return rep;
}

}  // namespace sdgm::loss
