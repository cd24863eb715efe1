#include "sdgm/optim.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "sdgm/error.hpp"

namespace sdgm::optim {

DecayMode parse_decay_mode(std::string_view s) {
  if (s == "decoupled") return DecayMode::Decoupled;
  if (s == "l2") return DecayMode::L2;
  throw Error(ErrorKind::InvalidArgument, "unknown weight decay mode '" + std::string(s) + "' (decoupled|l2)");
}

std::string_view to_string(DecayMode m) { return m == DecayMode::Decoupled ? "decoupled" : "l2"; }

void OptimConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw Error(ErrorKind::InvalidArgument, msg);
  };
  require(lr > 0.0, "lr must be > 0");
  require(beta1 >= 0.0 && beta1 < 1.0, "beta1 must lie in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "beta2 must lie in [0, 1)");
  require(eps > 0.0, "adam eps must be > 0");
  require(weight_decay >= 0.0, "weight decay must be >= 0");
  require(clip_norm > 0.0, "clip_norm must be > 0");
  require(epochs >= 1, "epochs must be >= 1");
  require(patience >= 1, "patience must be >= 1");
}

AdamState AdamState::for_params(const ModelParams& params) {
  AdamState s;
  s.m = params;
  s.m.for_each([](std::string_view, ParamGroup, Tensor& t) { t.fill(0.0); });
  s.v = s.m;
  return s;
}

double global_norm(const ModelParams& grads) {
  double sq = 0.0;
  grads.for_each([&](std::string_view, ParamGroup, const Tensor& t) {
    for (double g : t.data) sq += g * g;
  });
  return std::sqrt(sq);
}

double clip_global_norm(ModelParams& grads, double max_norm) {
  grads.for_each([](std::string_view name, ParamGroup, const Tensor& t) {
    for (double g : t.data) {
      if (!std::isfinite(g)) {
        throw Error(ErrorKind::NonFinite, "non-finite gradient in '" + std::string(name) + "'");
      }
    }
  });
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    grads.for_each([&](std::string_view, ParamGroup, Tensor& t) {
      for (double& g : t.data) g *= scale;
    });
  }
  return norm;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const OptimConfig& cfg) {
  std::vector<Tensor*> p, g, m, v;
  params.for_each([&](std::string_view, ParamGroup, Tensor& t) { p.push_back(&t); });
  const_cast<ModelParams&>(grads).for_each([&](std::string_view, ParamGroup, Tensor& t) { g.push_back(&t); });
  state.m.for_each([&](std::string_view, ParamGroup, Tensor& t) { m.push_back(&t); });
  state.v.for_each([&](std::string_view, ParamGroup, Tensor& t) { v.push_back(&t); });
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!p[i]->same_shape(*g[i]) || !p[i]->same_shape(*m[i]) || !p[i]->same_shape(*v[i])) {
      throw Error(ErrorKind::ShapeMismatch, "gradient or optimizer state shape differs from parameters");
    }
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const bool l2 = cfg.decay_mode == DecayMode::L2;
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto& theta = p[i]->data;
    const auto& grad = g[i]->data;
    auto& mi = m[i]->data;
    auto& vi = v[i]->data;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = l2 ? grad[j] + cfg.weight_decay * theta[j] : grad[j];
      mi[j] = cfg.beta1 * mi[j] + (1.0 - cfg.beta1) * gj;
      vi[j] = cfg.beta2 * vi[j] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = mi[j] / bc1;
      const double vhat = vi[j] / bc2;
      double next = theta[j] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      if (!l2) next -= cfg.lr * cfg.weight_decay * theta[j];
      theta[j] = next;
    }
  }
  ++params.version;
}

}  // namespace sdgm::optim
