#include "sdgm/genhead.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "sdgm/error.hpp"
#include "sdgm/parallel.hpp"

namespace sdgm::head {

namespace {

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double clamp_gate(double g) { return std::clamp(g, kGateClamp, 1.0 - kGateClamp); }

void softmax_inplace(std::span<double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double& x : v) z += (x = std::exp(x - m));
  for (double& x : v) x /= z;
}

// Dot of a 2D row with the concatenation [a; b].
double dot_concat(const double* row, std::span<const double> a, std::span<const double> b) {
  const std::size_t D = a.size();
  double s = 0.0;
  for (std::size_t d = 0; d < D; ++d) s += row[d] * a[d];
  for (std::size_t d = 0; d < D; ++d) s += row[D + d] * b[d];
  return s;
}

}  // namespace

double gen_gate(std::span<const double> xhat, std::span<const double> c,
                const PointerGenParams& p) {
  return clamp_gate(sigmoid(dot_concat(p.gate.data.data(), xhat, c)));
}

std::vector<double> vocab_dist(std::span<const double> xhat, std::span<const double> c,
                               const PointerGenParams& p, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be > 0");
  const std::size_t V = p.vocab_bias.size(), D2 = p.vocab_proj.dim(1);
  std::vector<double> logits(V);
  for (std::size_t v = 0; v < V; ++v) {
    logits[v] = (dot_concat(p.vocab_proj.data.data() + v * D2, xhat, c) + p.vocab_bias[v]) /
                temperature;
  }
  softmax_inplace(logits);
  return logits;
}

CopyDist copy_dist(std::span<const double> xhat, const Tensor& context_embeddings,
                   std::span<const TokenId> context_ids, const PointerGenParams& p,
                   std::size_t vocab_size) {
  CopyDist out{std::vector<double>(vocab_size, 0.0), false};
  const std::size_t n = context_ids.size();
  if (n == 0) {
    out.probs[corpus::kUnk] = 1.0;
    out.degenerate = true;
    return out;
  }
  const std::size_t D = xhat.size();
  std::vector<double> q(D, 0.0);
  for (std::size_t a = 0; a < D; ++a) {
    for (std::size_t j = 0; j < D; ++j) q[j] += xhat[a] * p.copy_proj.at(a, j);
  }
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = dot(q, context_embeddings.vec(i));
  softmax_inplace(scores);
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = context_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw Error(ErrorKind::IdOutOfRange, "context token id out of range");
    }
    out.probs[static_cast<std::size_t>(id)] += scores[i];
  }
  return out;
}

std::vector<double> mix_dist(double p_gen, std::span<const double> p_vocab,
                             std::span<const double> p_copy) {
  if (p_vocab.size() != p_copy.size()) {
    throw Error(ErrorKind::ShapeMismatch, "vocabulary and copy distributions differ in size");
  }
  std::vector<double> out(p_vocab.size());
  for (std::size_t v = 0; v < out.size(); ++v) {
    out[v] = p_gen * p_vocab[v] + (1.0 - p_gen) * p_copy[v];
  }
  return out;
}

std::vector<double> context_vector(const Tensor& X, std::size_t b, std::size_t t,
                                   std::size_t width) {
  const std::size_t D = X.dim(2);
  const std::size_t first = t + 1 >= width ? t + 1 - width : 0;
  std::vector<double> c(D, 0.0);
  for (std::size_t j = first; j <= t; ++j) {
    auto x = X.vec(b, j);
    for (std::size_t d = 0; d < D; ++d) c[d] += x[d];
  }
  const double inv = 1.0 / static_cast<double>(t + 1 - first);
  for (double& v : c) v *= inv;
  return c;
}

HeadCache predict(const model::ForwardCache& fwd, const ModelParams& params,
                  const ModelConfig& cfg) {
  const std::size_t B = fwd.rows, L = fwd.len, D = cfg.d_model, V = cfg.vocab_size;
  const bool pointer = cfg.head == HeadKind::PointerGenerator;
  const auto& hp = params.head;
  HeadCache hc;
  hc.rows = B;
  hc.len = L;
  hc.vocab = V;
  hc.ctx = Tensor({B, L, D});
  hc.gate = Tensor({B, L}, 1.0);
  hc.gate_clamped.assign(B * L, 0);
  hc.vocab_probs = Tensor({B, L, V});
  hc.copy_weights = Tensor({B, L, L});
  hc.copy_query = Tensor({B, L, D});
  hc.probs = Tensor({B, L, V});
  hc.log_probs = Tensor({B, L, V});

  parallel_for(B, [&](std::size_t b) {
    std::vector<double> scores;
    for (std::size_t t = 0; t < L; ++t) {
      auto xhat = fwd.Xhat.vec(b, t);
      const auto c = context_vector(fwd.X, b, t, cfg.conv_width);
      std::copy(c.begin(), c.end(), hc.ctx.vec(b, t).begin());

      double g = 1.0;
      if (pointer) {
        const double raw = sigmoid(dot_concat(hp.gate.data.data(), xhat, c));
        g = clamp_gate(raw);
        hc.gate_clamped[b * L + t] = g != raw ? 1 : 0;
      }
      hc.gate.at(b, t) = g;

      auto pv = hc.vocab_probs.vec(b, t);
      for (std::size_t v = 0; v < V; ++v) {
        pv[v] = dot_concat(hp.vocab_proj.data.data() + v * 2 * D, xhat, c) + hp.vocab_bias[v];
      }
      softmax_inplace(pv);

      auto P = hc.probs.vec(b, t);
      for (std::size_t v = 0; v < V; ++v) P[v] = g * pv[v];
      if (pointer) {
        auto q = hc.copy_query.vec(b, t);
        for (std::size_t a = 0; a < D; ++a) {
          for (std::size_t j = 0; j < D; ++j) q[j] += xhat[a] * hp.copy_proj.at(a, j);
        }
        scores.assign(t + 1, 0.0);
        for (std::size_t i = 0; i <= t; ++i) scores[i] = dot(q, fwd.X.vec(b, i));
        softmax_inplace(scores);
        auto wrow = hc.copy_weights.vec(b, t);
        for (std::size_t i = 0; i <= t; ++i) {
          wrow[i] = scores[i];
          P[static_cast<std::size_t>(fwd.tokens[b * L + i])] += (1.0 - g) * scores[i];
        }
      }
      auto lp = hc.log_probs.vec(b, t);
      for (std::size_t v = 0; v < V; ++v) lp[v] = std::log(std::max(P[v], 1e-300));
    }
  });
  return hc;
}

void backward(const model::ForwardCache& fwd, const HeadCache& hc,
              const ModelParams& params, const ModelConfig& cfg,
              const Tensor& dlog_probs, ModelParams& grads, Tensor& dXhat, Tensor& dX) {
  if (fwd.params_version != params.version) {
    throw Error(ErrorKind::StaleCache, "forward cache was computed for other parameters");
  }
  const std::size_t B = hc.rows, L = hc.len, D = cfg.d_model, V = hc.vocab,
                    w = cfg.conv_width;
  const bool pointer = cfg.head == HeadKind::PointerGenerator;
  const auto& hp = params.head;
  auto& gh = grads.head;
  if (dXhat.data.empty()) dXhat = Tensor({B, L, D});
  if (dX.data.empty()) dX = Tensor({B, L, D});

  std::vector<double> dP(V), dz(V), dh(2 * D), pc(V), dq(D), da;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      auto glp = dlog_probs.vec(b, t);
      if (std::all_of(glp.begin(), glp.end(), [](double x) { return x == 0.0; })) continue;
      auto P = hc.probs.vec(b, t);
      auto pv = hc.vocab_probs.vec(b, t);
      auto xhat = fwd.Xhat.vec(b, t);
      auto c = hc.ctx.vec(b, t);
      const double g = hc.gate.at(b, t);
      for (std::size_t v = 0; v < V; ++v) dP[v] = P[v] > 1e-300 ? glp[v] / P[v] : 0.0;
      std::fill(dh.begin(), dh.end(), 0.0);

      if (pointer) {
        std::fill(pc.begin(), pc.end(), 0.0);
        auto wrow = hc.copy_weights.vec(b, t);
        for (std::size_t i = 0; i <= t; ++i) {
          pc[static_cast<std::size_t>(fwd.tokens[b * L + i])] += wrow[i];
        }
        if (hc.gate_clamped[b * L + t] == 0) {
          double dg = 0.0;
          for (std::size_t v = 0; v < V; ++v) dg += dP[v] * (pv[v] - pc[v]);
          const double du = dg * g * (1.0 - g);
          for (std::size_t d = 0; d < D; ++d) {
            gh.gate[d] += du * xhat[d];
            gh.gate[D + d] += du * c[d];
            dh[d] += du * hp.gate[d];
            dh[D + d] += du * hp.gate[D + d];
          }
        }

        // Copy branch: dL/da_i = (1 - g) dP[id_i], then softmax backward.
        da.assign(t + 1, 0.0);
        double sa = 0.0;
        for (std::size_t i = 0; i <= t; ++i) {
          da[i] = (1.0 - g) * dP[static_cast<std::size_t>(fwd.tokens[b * L + i])];
          sa += wrow[i] * da[i];
        }
        auto q = hc.copy_query.vec(b, t);
        std::fill(dq.begin(), dq.end(), 0.0);
        for (std::size_t i = 0; i <= t; ++i) {
          const double ds = wrow[i] * (da[i] - sa);
          if (ds == 0.0) continue;
          auto e = fwd.X.vec(b, i);
          auto de = dX.vec(b, i);
          for (std::size_t d = 0; d < D; ++d) {
            dq[d] += ds * e[d];
            de[d] += ds * q[d];
          }
        }
        auto dxh = dXhat.vec(b, t);
        for (std::size_t a = 0; a < D; ++a) {
          double acc = 0.0;
          for (std::size_t j = 0; j < D; ++j) {
            gh.copy_proj.at(a, j) += xhat[a] * dq[j];
            acc += hp.copy_proj.at(a, j) * dq[j];
          }
          dxh[a] += acc;
        }
      }

      // Vocabulary branch.
      double s = 0.0;
      for (std::size_t v = 0; v < V; ++v) s += pv[v] * g * dP[v];
      for (std::size_t v = 0; v < V; ++v) dz[v] = pv[v] * (g * dP[v] - s);
      for (std::size_t v = 0; v < V; ++v) {
        if (dz[v] == 0.0) continue;
        gh.vocab_bias[v] += dz[v];
        double* gw = gh.vocab_proj.data.data() + v * 2 * D;
        const double* wv = hp.vocab_proj.data.data() + v * 2 * D;
        for (std::size_t d = 0; d < D; ++d) {
          gw[d] += dz[v] * xhat[d];
          gw[D + d] += dz[v] * c[d];
          dh[d] += dz[v] * wv[d];
          dh[D + d] += dz[v] * wv[D + d];
        }
      }

      auto dxh = dXhat.vec(b, t);
      for (std::size_t d = 0; d < D; ++d) dxh[d] += dh[d];
      const std::size_t first = t + 1 >= w ? t + 1 - w : 0;
      const double inv = 1.0 / static_cast<double>(t + 1 - first);
      for (std::size_t j = first; j <= t; ++j) {
        auto dx = dX.vec(b, j);
        for (std::size_t d = 0; d < D; ++d) dx[d] += dh[D + d] * inv;
      }
    }
  }
}

ContextState::ContextState(std::size_t width, std::size_t dim)
    : width_(std::max<std::size_t>(1, width)), c_(dim, 0.0) {}

void ContextState::push(std::span<const double> embedding) {
  ring_.emplace_back(embedding.begin(), embedding.end());
  if (ring_.size() > width_) ring_.pop_front();
  std::fill(c_.begin(), c_.end(), 0.0);
  for (const auto& e : ring_) {
    for (std::size_t d = 0; d < c_.size(); ++d) c_[d] += e[d];
  }
  const double inv = 1.0 / static_cast<double>(ring_.size());
  for (double& v : c_) v *= inv;
  ++step_;
}

DecodeMode parse_decode_mode(std::string_view s) {
  if (s == "sample") return DecodeMode::Sample;
  if (s == "argmax") return DecodeMode::Argmax;
  throw Error(ErrorKind::InvalidArgument, "unknown decode mode '" + std::string(s) + "' (sample|argmax)");
}

void GenRequest::validate() const {
  if (length < 1) throw Error(ErrorKind::InvalidArgument, "generation length must be >= 1");
  if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be > 0");
}

GenResult generate(const ModelParams& params, const ModelConfig& cfg,
                   const gmm::GmmModel& gmm, const GenRequest& req) {
  req.validate();
  if (gmm.empty()) throw Error(ErrorKind::InvalidArgument, "generation needs a fitted GMM");
  if (gmm.dim() != cfg.dict_size) {
    throw Error(ErrorKind::DimensionMismatch, "GMM dimension differs from the dictionary size");
  }
  const std::size_t D = cfg.d_model, V = cfg.vocab_size, L = cfg.seq_len;
  std::vector<TokenId> history = req.prompt;
  if (history.empty()) history.push_back(corpus::kBos);
  for (TokenId id : history) {
    if (id < 0 || static_cast<std::size_t>(id) >= V) {
      throw Error(ErrorKind::IdOutOfRange, "prompt token id out of range");
    }
  }
  const std::size_t first_pos = history.size();  // 1-based position of step 0
  if (first_pos + req.length - 1 > L) {
    throw Error(ErrorKind::PositionOutOfRange,
                "generating " + std::to_string(req.length) + " tokens after a prefix of " +
                    std::to_string(history.size()) + " needs " +
                    std::to_string(first_pos + req.length - 1) + " positions; the dictionary has " +
                    std::to_string(L));
  }

  ContextState ctx(cfg.conv_width, D);
  Tensor context_emb({L + 1, D});
  std::vector<TokenId> context_ids;
  auto append = [&](TokenId id) {
    auto e = params.embedding.vec(static_cast<std::size_t>(id));
    ctx.push(e);
    std::copy(e.begin(), e.end(), context_emb.vec(context_ids.size()).begin());
    context_ids.push_back(id);
  };
  for (TokenId id : history) append(id);

  std::mt19937_64 rng(req.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const bool pointer = cfg.head == HeadKind::PointerGenerator;
  GenResult res;
  for (std::size_t i = 0; i < req.length; ++i) {
    const Tensor z = gmm::sample(gmm, rng, 1);
    const auto xhat = model::decode_at(z.vec(0), params.dictionary, first_pos + i, L);
    const auto c = ctx.vector();
    const auto pv = vocab_dist(xhat, c, params.head, req.temperature);
    std::vector<double> P = pv;
    double g = 1.0;
    bool degenerate = false;
    if (pointer) {
      g = gen_gate(xhat, c, params.head);
      Tensor emb({context_ids.size(), D});
      std::copy_n(context_emb.data.begin(), emb.size(), emb.data.begin());
      const CopyDist pc = copy_dist(xhat, emb, context_ids, params.head, V);
      degenerate = pc.degenerate;
      P = mix_dist(g, pv, pc.probs);
    }

    TokenId chosen = 0;
    if (req.mode == DecodeMode::Argmax) {
      chosen = static_cast<TokenId>(std::max_element(P.begin(), P.end()) - P.begin());
    } else {
      double u = unif(rng);
      chosen = static_cast<TokenId>(V - 1);
      for (std::size_t v = 0; v < V; ++v) {
        if (u < P[v]) {
          chosen = static_cast<TokenId>(v);
          break;
        }
        u -= P[v];
      }
    }

    StepDiagnostics diag{i + 1, g, chosen, degenerate, {}};
    std::vector<std::size_t> order(V);
    for (std::size_t v = 0; v < V; ++v) order[v] = v;
    const std::size_t top = std::min<std::size_t>(5, V);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](std::size_t a, std::size_t b) { return P[a] > P[b] || (P[a] == P[b] && a < b); });
    for (std::size_t r = 0; r < top; ++r) diag.top.emplace_back(static_cast<TokenId>(order[r]), P[order[r]]);
    res.steps.push_back(std::move(diag));
    res.tokens.push_back(chosen);
    if (chosen == corpus::kEos) break;
    append(chosen);
  }
  return res;
}

}  // namespace sdgm::head
