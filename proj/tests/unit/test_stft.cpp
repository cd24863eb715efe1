#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "oracles.hpp"
#include "sdgm/error.hpp"
#include "sdgm/stft.hpp"

using namespace sdgm;
using loss::StftConfig;
using loss::WindowKind;

namespace {

std::vector<double> random_signal(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  return x;
}

std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& a) {
  const std::size_t N = a.size();
  std::vector<std::complex<double>> out(N);
  for (std::size_t k = 0; k < N; ++k)
    for (std::size_t n = 0; n < N; ++n) {
      const double ang = -2.0 * oracle::kPi * static_cast<double>(k * n) / static_cast<double>(N);
      out[k] += a[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
  return out;
}

}  // namespace

TEST_CASE("fft agrees with the direct DFT for power-of-two and other sizes") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t n : {1u, 2u, 4u, 8u, 12u, 16u, 64u, 15u}) {
    std::vector<std::complex<double>> a(n);
    for (auto& z : a) z = {u(rng), u(rng)};
    const auto want = naive_dft(a);
    loss::fft(a);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(a[k] - want[k]) <= 1e-10);
  }
}

TEST_CASE("hann window matches the closed form") {
  for (std::size_t n : {2u, 8u, 32u}) {
    const auto w = loss::make_window(n, WindowKind::Hann);
    REQUIRE(w.size() == n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(w[i] - oracle::hann(i, n)) <= 1e-15);
    CHECK(w.front() == 0.0);
    CHECK(std::abs(w.back()) <= 1e-15);
  }
  for (double v : loss::make_window(5, WindowKind::Rect)) CHECK(v == 1.0);
}

TEST_CASE("stft magnitude matches the naive DFT oracle") {
  std::mt19937_64 rng(12);
  for (auto window : {WindowKind::Hann, WindowKind::Rect}) {
    StftConfig cfg{16, 4, window, false};
    const auto x = random_signal(53, rng);
    const auto spec = loss::stft(x, cfg);
    const auto want = oracle::stft_magnitude(x, 16, 4, window == WindowKind::Hann);
    REQUIRE(spec.bins == want.size());
    REQUIRE(spec.frames == want[0].size());
    CHECK(spec.frames == 1 + (53 - 16) / 4);
    for (std::size_t f = 0; f < spec.bins; ++f)
      for (std::size_t t = 0; t < spec.frames; ++t) CHECK(std::abs(std::abs(spec.at(f, t)) - want[f][t]) <= 1e-9);
  }
}

TEST_CASE("stft of zero and constant signals") {
  StftConfig cfg{8, 4, WindowKind::Rect, false};
  std::vector<double> zero(20, 0.0), ones(20, 1.0);
  for (const auto& z : loss::stft(zero, cfg).values) CHECK(z == std::complex<double>(0.0, 0.0));
  const auto spec = loss::stft(ones, cfg);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    CHECK(std::abs(spec.at(0, t) - 8.0) <= 1e-12);
    for (std::size_t f = 1; f < spec.bins; ++f) CHECK(std::abs(spec.at(f, t)) <= 1e-12);
  }
}

TEST_CASE("pure bin-frequency sinusoid peaks at its bin in every frame") {
  const std::size_t n_fft = 32, k0 = 5;
  std::vector<double> x(128);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::sin(2.0 * oracle::kPi * k0 * n / n_fft);
  StftConfig cfg{n_fft, 8, WindowKind::Hann, false};
  const auto spec = loss::stft(x, cfg);
  const auto want = oracle::stft_magnitude(x, n_fft, 8, true);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    std::size_t best = 0;
    for (std::size_t f = 0; f < spec.bins; ++f) {
      if (std::abs(spec.at(f, t)) > std::abs(spec.at(best, t))) best = f;
      CHECK(std::abs(std::abs(spec.at(f, t)) - want[f][t]) <= 1e-9);
    }
    CHECK(best == k0);
  }
}

TEST_CASE("stft is linear in the complex domain") {
  std::mt19937_64 rng(13);
  StftConfig cfg{16, 8, WindowKind::Hann, false};
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_signal(40, rng), y = random_signal(40, rng);
    const double a = std::uniform_real_distribution<double>(-3, 3)(rng);
    const double b = std::uniform_real_distribution<double>(-3, 3)(rng);
    std::vector<double> mix(40);
    for (std::size_t i = 0; i < 40; ++i) mix[i] = a * x[i] + b * y[i];
    const auto sx = loss::stft(x, cfg), sy = loss::stft(y, cfg), sm = loss::stft(mix, cfg);
    for (std::size_t i = 0; i < sm.values.size(); ++i)
      CHECK(std::abs(sm.values[i] - (a * sx.values[i] + b * sy.values[i])) <= 1e-9);
  }
}

TEST_CASE("rectangular window with hop = n_fft preserves frame energy") {
  std::mt19937_64 rng(14);
  const std::size_t n_fft = 16;
  StftConfig cfg{n_fft, n_fft, WindowKind::Rect, false};
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_signal(64, rng);
    // Full two-sided energy, rebuilt from the one-sided bins.
    const auto spec = loss::stft(x, cfg);
    for (std::size_t t = 0; t < spec.frames; ++t) {
      double e = 0.0, time = 0.0;
      for (std::size_t f = 0; f < spec.bins; ++f) {
        const double m2 = std::norm(spec.at(f, t));
        e += (f == 0 || f == n_fft / 2) ? m2 : 2.0 * m2;
      }
      for (std::size_t n = 0; n < n_fft; ++n) time += x[t * n_fft + n] * x[t * n_fft + n];
      CHECK(std::abs(e - n_fft * time) <= 1e-6 * n_fft * time);
    }
  }
}

TEST_CASE("signal shorter than the window") {
  StftConfig cfg{16, 4, WindowKind::Hann, false};
  std::vector<double> x(15, 1.0);
  try {
    loss::stft(x, cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SignalTooShort);
  }
  cfg.center = true;
  const auto spec = loss::stft(x, cfg);
  CHECK(spec.frames == cfg.frames(15));
  CHECK(spec.frames >= 1);
}

TEST_CASE("centered framing equals the uncentered transform of a zero-padded signal") {
  std::mt19937_64 rng(15);
  const auto x = random_signal(30, rng);
  StftConfig c{8, 2, WindowKind::Hann, true};
  std::vector<double> padded(4, 0.0);
  padded.insert(padded.end(), x.begin(), x.end());
  padded.insert(padded.end(), 4, 0.0);
  const auto a = loss::stft(x, c);
  c.center = false;
  const auto b = loss::stft(padded, c);
  REQUIRE(a.frames == b.frames);
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(std::abs(a.values[i] - b.values[i]) <= 1e-12);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(StftConfig{}.validate());
  CHECK_THROWS_AS((StftConfig{8, 0, WindowKind::Hann, false}.validate()), Error);
  CHECK_THROWS_AS((StftConfig{8, 9, WindowKind::Hann, false}.validate()), Error);
  CHECK_THROWS_AS((StftConfig{0, 1, WindowKind::Hann, false}.validate()), Error);
  CHECK(loss::parse_window("hann") == WindowKind::Hann);
  CHECK_THROWS_AS(loss::parse_window("blackman"), Error);
}

TEST_CASE("magnitude backward matches finite differences") {
  std::mt19937_64 rng(16);
  for (bool center : {false, true}) {
    StftConfig cfg{8, 3, WindowKind::Hann, center};
    auto x = random_signal(25, rng);
    const auto spec = loss::stft(x, cfg);
    std::vector<double> g(spec.values.size());
    for (double& v : g) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    auto probe = [&](const std::vector<double>& s) {
      const auto sp = loss::stft(s, cfg);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * std::abs(sp.values[i]);
      return acc;
    };
    std::vector<double> dx(x.size(), 0.0);
    loss::stft_magnitude_backward(spec, g, cfg, dx);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + eps;
      const double up = probe(x);
      x[i] = saved - eps;
      const double down = probe(x);
      x[i] = saved;
      const double num = (up - down) / (2 * eps);
      CHECK(std::abs(dx[i] - num) <= 1e-4 * std::max(1.0, std::abs(num)));
    }
  }
}

TEST_CASE("magnitude backward is zero on a zero spectrum") {
  StftConfig cfg{8, 4, WindowKind::Hann, false};
  std::vector<double> x(16, 0.0);
  const auto spec = loss::stft(x, cfg);
  std::vector<double> g(spec.values.size(), 1.0), dx(16, 0.0);
  loss::stft_magnitude_backward(spec, g, cfg, dx);
  for (double v : dx) CHECK(v == 0.0);
}
