#include "sdgm/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "sdgm/error.hpp"
#include "sdgm/model.hpp"

namespace sdgm::gmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log pi_m + log N(z; mu_m, diag(var_m)) for every component.
void component_log_probs(std::span<const double> z, const GmmModel& g,
                         std::span<double> out) {
  const std::size_t M = g.components(), K = g.dim();
  for (std::size_t m = 0; m < M; ++m) {
    if (g.weights[m] <= 0.0) {
      out[m] = kNegInf;
      continue;
    }
    double acc = 0.0;
    auto mu = g.means.vec(m);
    auto var = g.variances.vec(m);
    for (std::size_t k = 0; k < K; ++k) {
      const double diff = z[k] - mu[k];
      acc += std::log(var[k]) + diff * diff / var[k];
    }
    out[m] = std::log(g.weights[m]) - 0.5 * (acc + static_cast<double>(K) * kLog2Pi);
  }
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// k-means++ seeding on a strided subsample, refined by a few Lloyd passes.
Tensor kmeans_init(const Tensor& Z, std::size_t M, const EmConfig& cfg,
                   std::mt19937_64& rng) {
  const std::size_t N = Z.dim(0), K = Z.dim(1);
  const std::size_t n = std::min(N, std::max(cfg.init_subsample, M));
  const double step = static_cast<double>(N) / static_cast<double>(n);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::size_t>(static_cast<double>(i) * step);

  Tensor centers({M, K});
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto pick_uniform = [&] {
    return std::min(n - 1, static_cast<std::size_t>(unif(rng) * static_cast<double>(n)));
  };
  auto first = Z.vec(idx[pick_uniform()]);
  std::copy(first.begin(), first.end(), centers.vec(0).begin());

  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t m = 1; m < M; ++m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(Z.vec(idx[i]), centers.vec(m - 1)));
      total += d2[i];
    }
    std::size_t chosen = 0;
    if (total > 0.0) {
      double r = unif(rng) * total;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick_uniform();
    }
    auto row = Z.vec(idx[chosen]);
    std::copy(row.begin(), row.end(), centers.vec(m).begin());
  }

  std::vector<std::size_t> assign(n);
  for (int pass = 0; pass < 5; ++pass) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < M; ++m) {
        const double dist = squared_distance(Z.vec(idx[i]), centers.vec(m));
        if (dist < best) {
          best = dist;
          assign[i] = m;
        }
      }
    }
    Tensor sums({M, K});
    std::vector<std::size_t> counts(M, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = Z.vec(idx[i]);
      auto s = sums.vec(assign[i]);
      for (std::size_t k = 0; k < K; ++k) s[k] += row[k];
      ++counts[assign[i]];
    }
    for (std::size_t m = 0; m < M; ++m) {
      if (counts[m] == 0) continue;  // keep the old center
      auto c = centers.vec(m);
      auto s = sums.vec(m);
      for (std::size_t k = 0; k < K; ++k) c[k] = s[k] / static_cast<double>(counts[m]);
    }
  }
  return centers;
}

Tensor random_init(const Tensor& Z, std::size_t M, std::mt19937_64& rng) {
  const std::size_t N = Z.dim(0), K = Z.dim(1);
  std::vector<std::size_t> perm(N);
  for (std::size_t i = 0; i < N; ++i) perm[i] = i;
  for (std::size_t i = 0; i < M; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, N - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  Tensor centers({M, K});
  for (std::size_t m = 0; m < M; ++m) {
    auto row = Z.vec(perm[m]);
    std::copy(row.begin(), row.end(), centers.vec(m).begin());
  }
  return centers;
}

}  // namespace

EmInit parse_em_init(std::string_view s) {
  if (s == "kmeans") return EmInit::KMeansPlusPlus;
  if (s == "random") return EmInit::Random;
  throw Error(ErrorKind::InvalidArgument, "unknown EM init '" + std::string(s) + "' (kmeans|random)");
}

std::string_view to_string(EmInit i) { return i == EmInit::KMeansPlusPlus ? "kmeans" : "random"; }

void GmmModel::validate(double var_floor) const {
  const std::size_t M = components();
  if (M == 0) throw Error(ErrorKind::InvalidArgument, "GMM has no components");
  if (means.shape != std::vector<std::size_t>{M, dim()} || !variances.same_shape(means)) {
    throw Error(ErrorKind::ShapeMismatch, "GMM tensors disagree in shape");
  }
  double sum = 0.0;
  for (double p : weights) {
    if (!(p >= 0.0)) throw Error(ErrorKind::InvalidArgument, "GMM weights must be nonnegative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "GMM weights must sum to 1");
  for (double v : variances.data) {
    if (!(v >= var_floor)) throw Error(ErrorKind::InvalidArgument, "GMM variance below floor");
  }
}

void EmConfig::validate() const {
  if (max_iters < 1) throw Error(ErrorKind::InvalidArgument, "max_iters must be >= 1");
  if (!(tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "tol must be > 0");
  if (!(var_floor > 0.0)) throw Error(ErrorKind::InvalidArgument, "var_floor must be > 0");
}

FitResult fit_em(const CoefficientBank& bank, std::size_t M, const EmConfig& cfg) {
  cfg.validate();
  const Tensor& Z = bank.Z;
  const std::size_t N = bank.rows();
  if (M < 1) throw Error(ErrorKind::InvalidArgument, "need at least one component");
  if (N < M) {
    throw Error(ErrorKind::InsufficientData, "bank has " + std::to_string(N) +
                                                 " rows but " + std::to_string(M) +
                                                 " components were requested");
  }
  const std::size_t K = Z.dim(1);
  if (K < 1) throw Error(ErrorKind::InvalidArgument, "coefficient dimension must be >= 1");
  for (double v : Z.data) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "coefficient bank holds non-finite values");
  }

  std::mt19937_64 rng(cfg.seed);
  FitResult res;
  GmmModel& g = res.model;
  g.means = cfg.init == EmInit::KMeansPlusPlus ? kmeans_init(Z, M, cfg, rng)
                                               : random_init(Z, M, rng);
  g.weights.assign(M, 1.0 / static_cast<double>(M));
  g.variances = Tensor({M, K});
  {
    std::vector<double> mean(K, 0.0), var(K, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < K; ++k) mean[k] += Z.at(n, k);
    }
    for (double& v : mean) v /= static_cast<double>(N);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < K; ++k) var[k] += (Z.at(n, k) - mean[k]) * (Z.at(n, k) - mean[k]);
    }
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t k = 0; k < K; ++k) {
        g.variances.at(m, k) = std::max(var[k] / static_cast<double>(N), cfg.var_floor);
      }
    }
  }

  Tensor resp({N, M});
  std::vector<double> lp(M);
  double prev = 0.0;
  bool have_prev = false;
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    // E-step in log space.
    double ll = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      component_log_probs(Z.vec(n), g, lp);
      const double lse = log_sum_exp(lp);
      ll += lse;
      auto r = resp.vec(n);
      for (std::size_t m = 0; m < M; ++m) r[m] = std::exp(lp[m] - lse);
    }
    ll /= static_cast<double>(N);
    if (!std::isfinite(ll)) throw Error(ErrorKind::DegenerateComponent, "EM log-likelihood diverged");
    res.ll_trace.push_back(ll);
    res.iterations = iter + 1;
    if (have_prev) {
      const double denom = std::abs(prev) > 0.0 ? std::abs(prev) : 1.0;
      if (std::abs(ll - prev) / denom < cfg.tol) {
        res.converged = true;
        return res;
      }
    }
    prev = ll;
    have_prev = true;

    // M-step; variances floored (the constrained maximizer).
    for (std::size_t m = 0; m < M; ++m) {
      double nk = 0.0;
      for (std::size_t n = 0; n < N; ++n) nk += resp.at(n, m);
      g.weights[m] = nk / static_cast<double>(N);
      if (nk <= 0.0) continue;  // dead component keeps its Gaussian
      auto mu = g.means.vec(m);
      std::fill(mu.begin(), mu.end(), 0.0);
      for (std::size_t n = 0; n < N; ++n) {
        const double r = resp.at(n, m);
        auto z = Z.vec(n);
        for (std::size_t k = 0; k < K; ++k) mu[k] += r * z[k];
      }
      for (double& v : mu) v /= nk;
      auto var = g.variances.vec(m);
      std::fill(var.begin(), var.end(), 0.0);
      for (std::size_t n = 0; n < N; ++n) {
        const double r = resp.at(n, m);
        auto z = Z.vec(n);
        for (std::size_t k = 0; k < K; ++k) var[k] += r * (z[k] - mu[k]) * (z[k] - mu[k]);
      }
      for (double& v : var) v = std::max(v / nk, cfg.var_floor);
    }
    double wsum = 0.0;
    for (double p : g.weights) wsum += p;
    for (double& p : g.weights) p /= wsum;
  }
  res.ll_trace.push_back(mean_log_likelihood(Z, g));
  return res;
}

double log_density(std::span<const double> z, const GmmModel& gmm) {
  if (z.size() != gmm.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "vector of length " + std::to_string(z.size()) +
                                                  " against a GMM of dimension " +
                                                  std::to_string(gmm.dim()));
  }
  std::vector<double> lp(gmm.components());
  component_log_probs(z, gmm, lp);
  return log_sum_exp(lp);
}

double log_density(std::span<const double> z, const GmmModel& gmm, std::span<double> grad) {
  const double lse = log_density(z, gmm);
  const std::size_t M = gmm.components(), K = gmm.dim();
  std::vector<double> lp(M);
  component_log_probs(z, gmm, lp);
  std::fill(grad.begin(), grad.end(), 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    const double r = std::exp(lp[m] - lse);
    if (r == 0.0) continue;
    auto mu = gmm.means.vec(m);
    auto var = gmm.variances.vec(m);
    for (std::size_t k = 0; k < K; ++k) grad[k] -= r * (z[k] - mu[k]) / var[k];
  }
  return lse;
}

double mean_log_likelihood(const Tensor& Z, const GmmModel& gmm) {
  const std::size_t N = Z.dim(0);
  double ll = 0.0;
  for (std::size_t n = 0; n < N; ++n) ll += log_density(Z.vec(n), gmm);
  return ll / static_cast<double>(N);
}

Tensor sample(const GmmModel& gmm, std::mt19937_64& rng, std::size_t n) {
  const std::size_t M = gmm.components(), K = gmm.dim();
  Tensor out({n, K});
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double u = unif(rng);
    std::size_t m = M;
    for (std::size_t j = 0; j < M; ++j) {
      if (u < gmm.weights[j]) {
        m = j;
        break;
      }
      u -= gmm.weights[j];
    }
    if (m == M) {  // rounding spill: last live component
      m = M - 1;
      while (m > 0 && gmm.weights[m] <= 0.0) --m;
    }
    auto mu = gmm.means.vec(m);
    auto var = gmm.variances.vec(m);
    auto row = out.vec(i);
    for (std::size_t k = 0; k < K; ++k) row[k] = mu[k] + std::sqrt(var[k]) * normal(rng);
  }
  return out;
}

CoefficientBank collect_bank(const ModelParams& params, const ModelConfig& cfg,
                             std::span<const corpus::Batch> batches) {
  const std::size_t K = cfg.dict_size;
  std::vector<double> rows;
  for (const auto& batch : batches) {
    const auto cache = model::forward(batch, params, cfg);
    for (std::size_t b = 0; b < batch.rows; ++b) {
      for (std::size_t t = 0; t < batch.len; ++t) {
        if (!batch.input_valid(b, t)) continue;
        auto c = cache.C.vec(b, t);
        rows.insert(rows.end(), c.begin(), c.end());
      }
    }
  }
  CoefficientBank bank{Tensor({rows.size() / K, K})};
  bank.Z.data = std::move(rows);
  return bank;
}

CoefficientBank subsample(const CoefficientBank& bank, std::size_t max_rows) {
  const std::size_t N = bank.rows();
  if (N <= max_rows || max_rows == 0) return bank;
  const std::size_t K = bank.Z.dim(1);
  CoefficientBank out{Tensor({max_rows, K})};
  const double step = static_cast<double>(N) / static_cast<double>(max_rows);
  for (std::size_t i = 0; i < max_rows; ++i) {
    auto src = bank.Z.vec(static_cast<std::size_t>(static_cast<double>(i) * step));
    std::copy(src.begin(), src.end(), out.Z.vec(i).begin());
  }
  return out;
}

}  // namespace sdgm::gmm
