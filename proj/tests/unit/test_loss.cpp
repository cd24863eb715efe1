#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sdgm/error.hpp"
#include "sdgm/loss.hpp"

using namespace sdgm;
using loss::StftConfig;
using loss::WindowKind;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : t.data) v = u(rng);
  return t;
}

double freq_oracle(const Tensor& A, const Tensor& B, std::size_t n_fft, std::size_t hop) {
  const std::size_t rows = A.dim(0), L = A.dim(1), D = A.dim(2);
  double acc = 0.0;
  std::size_t F = 0, T = 0;
  for (std::size_t b = 0; b < rows; ++b)
    for (std::size_t d = 0; d < D; ++d) {
      std::vector<double> xa(L), xb(L);
      for (std::size_t t = 0; t < L; ++t) {
        xa[t] = A.at(b, t, d);
        xb[t] = B.at(b, t, d);
      }
      const auto ma = oracle::stft_magnitude(xa, n_fft, hop, true);
      const auto mb = oracle::stft_magnitude(xb, n_fft, hop, true);
      F = ma.size();
      T = ma[0].size();
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t t = 0; t < T; ++t) acc += (ma[f][t] - mb[f][t]) * (ma[f][t] - mb[f][t]);
    }
  return acc / static_cast<double>(rows * F * T * D);
}

gmm::GmmModel two_component(std::size_t K, std::mt19937_64& rng) {
  gmm::GmmModel g;
  g.weights = {0.3, 0.7};
  g.means = random_tensor({2, K}, rng);
  g.variances = Tensor({2, K});
  std::uniform_real_distribution<double> u(0.2, 2.0);
  for (double& v : g.variances.data) v = u(rng);
  return g;
}

double gmm_oracle(std::span<const double> z, const gmm::GmmModel& g) {
  std::vector<std::vector<double>> mu, var;
  for (std::size_t m = 0; m < g.components(); ++m) {
    auto a = g.means.vec(m), b = g.variances.vec(m);
    mu.emplace_back(a.begin(), a.end());
    var.emplace_back(b.begin(), b.end());
  }
  return oracle::gmm_density(std::vector<double>(z.begin(), z.end()), g.weights, mu, var);
}

}  // namespace

TEST_CASE("time_mse examples") {
  std::mt19937_64 rng(21);
  const Tensor X = random_tensor({2, 3, 4}, rng);
  CHECK(loss::time_mse(X, X, {}) == 0.0);
  Tensor shifted = X;
  for (double& v : shifted.data) v += 1.0;
  CHECK(loss::time_mse(shifted, X, {}) == doctest::Approx(1.0).epsilon(1e-15));

  const Tensor Y = random_tensor({2, 3, 4}, rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) acc += (X[i] - Y[i]) * (X[i] - Y[i]);
  CHECK(std::abs(loss::time_mse(X, Y, {}) - acc / 24.0) <= 1e-12);

  // Masked positions drop out of both the sum and the divisor.
  std::vector<std::uint8_t> mask{1, 1, 0, 1, 0, 0};
  double masked = 0.0;
  for (std::size_t p = 0; p < 6; ++p) {
    if (!mask[p]) continue;
    for (std::size_t d = 0; d < 4; ++d) masked += (X[p * 4 + d] - Y[p * 4 + d]) * (X[p * 4 + d] - Y[p * 4 + d]);
  }
  CHECK(std::abs(loss::time_mse(X, Y, mask) - masked / 12.0) <= 1e-12);

  try {
    loss::time_mse(X, Tensor({2, 3, 5}), {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("freq_loss matches the naive implementation") {
  std::mt19937_64 rng(22);
  StftConfig cfg{16, 8, WindowKind::Hann, false};
  const Tensor A = random_tensor({1, 64, 2}, rng), B = random_tensor({1, 64, 2}, rng);
  CHECK(std::abs(loss::freq_loss(A, B, {}, cfg) - freq_oracle(A, B, 16, 8)) <= 1e-9);
  CHECK(loss::freq_loss(A, A, {}, cfg) == 0.0);
  Tensor neg = A;
  for (double& v : neg.data) v = -v;
  CHECK(loss::freq_loss(neg, A, {}, cfg) <= 1e-24);

  const Tensor C = random_tensor({3, 40, 3}, rng), E = random_tensor({3, 40, 3}, rng);
  cfg = {8, 4, WindowKind::Hann, false};
  CHECK(std::abs(loss::freq_loss(C, E, {}, cfg) - freq_oracle(C, E, 8, 4)) <= 1e-9);

  const Tensor shortx({1, 8, 1});
  cfg = {16, 8, WindowKind::Hann, false};
  CHECK_THROWS_AS(loss::freq_loss(shortx, shortx, {}, cfg), Error);
}

TEST_CASE("nll examples") {
  Tensor uniform({1, 2, 4}, 0.3);
  const std::vector<corpus::TokenId> targets{1, 3};
  CHECK(loss::nll_loss(uniform, targets, {}) == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  Tensor sat({1, 1, 3});
  sat.data = {0.0, 100.0, 0.0};
  const std::vector<corpus::TokenId> one{1};
  CHECK(loss::nll_loss(sat, one, {}) < 1e-40);

  std::mt19937_64 rng(23);
  const Tensor logits = random_tensor({1, 3, 5}, rng, 4.0);
  const std::vector<corpus::TokenId> t3{4, 0, 2};
  double want = 0.0;
  for (std::size_t p = 0; p < 3; ++p) {
    auto v = logits.vec(0, p);
    const auto s = oracle::softmax({v.begin(), v.end()});
    want -= std::log(s[t3[p]]);
  }
  CHECK(std::abs(loss::nll_loss(logits, t3, {}) - want / 3.0) <= 1e-12);

  const std::vector<corpus::TokenId> wrong_len{1};
  CHECK_THROWS_AS(loss::nll_loss(logits, wrong_len, {}), Error);
}

TEST_CASE("prior examples") {
  gmm::GmmModel g;
  g.weights = {1.0};
  g.means = Tensor({1, 3});
  g.means.data = {0.5, -1.0, 2.0};
  g.variances = Tensor({1, 3}, 1.0);
  Tensor C({1, 1, 3});
  C.data = g.means.data;
  CHECK(std::abs(loss::prior_loss(C, g, {}) - 1.5 * std::log(2.0 * oracle::kPi)) <= 1e-12);

  gmm::GmmModel dup = g;
  dup.weights = {0.5, 0.5};
  dup.means = Tensor({2, 3});
  dup.variances = Tensor({2, 3}, 1.0);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t k = 0; k < 3; ++k) dup.means.at(m, k) = g.means.at(0, k);
  std::mt19937_64 rng(24);
  const Tensor Z = random_tensor({2, 4, 3}, rng, 3.0);
  CHECK(std::abs(loss::prior_loss(Z, dup, {}) - loss::prior_loss(Z, g, {})) <= 1e-12);

  const auto two = two_component(3, rng);
  double want = 0.0;
  for (std::size_t p = 0; p < 8; ++p) want -= std::log(gmm_oracle(Z.vec(p / 4, p % 4), two));
  CHECK(std::abs(loss::prior_loss(Z, two, {}) - want / 8.0) <= 1e-12);

  try {
    loss::prior_loss(Tensor({1, 2, 4}), two, {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
}

namespace {

struct Fixture {
  Tensor Xhat, X, logits, C;
  std::vector<corpus::TokenId> targets;
  std::vector<std::uint8_t> mask;
  gmm::GmmModel g;

  explicit Fixture(std::uint64_t seed, std::size_t B = 2, std::size_t L = 20, std::size_t D = 3,
                   std::size_t V = 6, std::size_t K = 4) {
    std::mt19937_64 rng(seed);
    Xhat = random_tensor({B, L, D}, rng);
    X = random_tensor({B, L, D}, rng);
    logits = random_tensor({B, L, V}, rng, 2.0);
    C = random_tensor({B, L, K}, rng);
    targets.resize(B * L);
    for (auto& t : targets) t = static_cast<corpus::TokenId>(rng() % V);
    mask.assign(B * L, 1);
    mask[B * L - 1] = 0;
    mask[B * L - 2] = 0;
    g = two_component(K, rng);
  }
  loss::LossInputs inputs() const { return {&Xhat, &X, &logits, targets, &C, &g, mask}; }
};

}  // namespace

TEST_CASE("composite combines the components with the given weights") {
  const Fixture fx(25);
  const StftConfig cfg{8, 4, WindowKind::Hann, false};
  const loss::LossWeights w{1.0, 0.5, 0.1, 0.01};
  const auto r = loss::composite_loss(fx.inputs(), w, cfg);
  const double t = loss::time_mse(fx.Xhat, fx.X, fx.mask);
  const double f = loss::freq_loss(fx.Xhat, fx.X, fx.mask, cfg);
  const double n = loss::nll_loss(fx.logits, fx.targets, fx.mask);
  const double p = loss::prior_loss(fx.C, fx.g, fx.mask);
  CHECK(r.time == t);
  CHECK(r.freq == f);
  CHECK(r.nll == n);
  CHECK(r.prior == p);
  CHECK(std::abs(r.total - (t + 0.5 * f + 0.1 * n + 0.01 * p)) <= 1e-9 * std::abs(r.total));
  CHECK(r.token_count == 38);
}

TEST_CASE("zero weights skip their terms") {
  const Fixture fx(26);
  const StftConfig cfg{8, 4, WindowKind::Hann, false};
  const auto before = loss::stft_call_count();
  const auto r = loss::composite_loss(fx.inputs(), {1.0, 0.0, 0.0, 0.0}, cfg);
  CHECK(loss::stft_call_count() == before);
  CHECK(r.total == r.time);
  CHECK(r.freq == 0.0);
  CHECK(r.nll == 0.0);
  CHECK(r.prior == 0.0);

  // Missing inputs are fine when their term is off.
  loss::LossInputs bare{&fx.Xhat, &fx.X, nullptr, {}, nullptr, nullptr, fx.mask};
  CHECK_NOTHROW(loss::composite_loss(bare, {1.0, 0.5, 0.0, 0.0}, cfg));
  const auto z = loss::composite_loss(bare, {0.0, 0.0, 0.0, 0.0}, cfg);
  CHECK(z.total == 0.0);

  const auto with_freq = loss::stft_call_count();
  loss::composite_loss(fx.inputs(), {1.0, 0.5, 0.0, 0.0}, cfg);
  CHECK(loss::stft_call_count() > with_freq);
}

TEST_CASE("composite is monotone in every weight") {
  const StftConfig cfg{8, 4, WindowKind::Hann, false};
  std::mt19937_64 rng(27);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Fixture fx(1000 + trial);
    loss::LossWeights w{u(rng), u(rng), u(rng), u(rng)};
    const double base = loss::composite_loss(fx.inputs(), w, cfg).total;
    for (int which = 0; which < 4; ++which) {
      auto bumped = w;
      double* field[] = {&bumped.alpha, &bumped.beta, &bumped.gamma, &bumped.delta};
      *field[which] += u(rng);
      const auto r = loss::composite_loss(fx.inputs(), bumped, cfg);
      // prior can be negative for a tight mixture; skip that direction when it is
      if (which == 3 && r.prior < 0.0) continue;
      CHECK(r.total >= base - 1e-12);
    }
  }
}

TEST_CASE("losses are nonnegative on random inputs") {
  const StftConfig cfg{8, 4, WindowKind::Hann, false};
  for (int trial = 0; trial < 30; ++trial) {
    const Fixture fx(2000 + trial);
    CHECK(loss::time_mse(fx.Xhat, fx.X, fx.mask) >= 0.0);
    CHECK(loss::freq_loss(fx.Xhat, fx.X, fx.mask, cfg) >= 0.0);
    CHECK(loss::nll_loss(fx.logits, fx.targets, fx.mask) >= 0.0);
  }
}

TEST_CASE("composite gradients match finite differences") {
  Fixture fx(28, 2, 12, 2, 5, 3);
  const StftConfig cfg{8, 2, WindowKind::Hann, false};
  const loss::LossWeights w{1.0, 0.5, 0.1, 0.01};
  loss::LossGrads grads;
  loss::composite_loss(fx.inputs(), w, cfg, &grads);
  auto total = [&] { return loss::composite_loss(fx.inputs(), w, cfg).total; };
  const double eps = 1e-6;
  auto check = [&](Tensor& t, const Tensor& g) {
    REQUIRE(g.same_shape(t));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + eps;
      const double up = total();
      t[i] = saved - eps;
      const double down = total();
      t[i] = saved;
      const double num = (up - down) / (2 * eps);
      CHECK(std::abs(g[i] - num) <= 1e-4 * std::max(1e-3, std::abs(num)));
    }
  };
  check(fx.Xhat, grads.dXhat);
  check(fx.X, grads.dX);
  check(fx.logits, grads.dlogits);
  check(fx.C, grads.dC);
}

TEST_CASE("weights validation") {
  CHECK_NOTHROW(loss::LossWeights{}.validate());
  CHECK_THROWS_AS((loss::LossWeights{-0.1, 0, 0, 0}.validate()), Error);
  CHECK_THROWS_AS((loss::LossWeights{0, 0, 0, std::nan("")}.validate()), Error);
}
