#pragma once

// Slow, obviously-correct reference computations used by the unit and
// acceptance tests. Nothing here shares code with the library.

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

inline constexpr double kPi = 3.14159265358979323846;

// Plain row-major 3-D array for the oracles.
struct Array3 {
  std::size_t n0 = 0, n1 = 0, n2 = 0;
  std::vector<double> v;
  Array3(std::size_t a, std::size_t b, std::size_t c) : n0(a), n1(b), n2(c), v(a * b * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return v[(i * n1 + j) * n2 + k]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return v[(i * n1 + j) * n2 + k];
  }
};

// X_hat[b, t, d] = sum_k C[b, t, k] S[k, t, d], four nested loops.
inline Array3 decode(const Array3& C, const Array3& S) {
  Array3 out(C.n0, C.n1, S.n2);
  for (std::size_t b = 0; b < C.n0; ++b)
    for (std::size_t t = 0; t < C.n1; ++t)
      for (std::size_t d = 0; d < S.n2; ++d) {
        double acc = 0.0;
        for (std::size_t k = 0; k < C.n2; ++k) acc += C(b, t, k) * S(k, t, d);
        out(b, t, d) = acc;
      }
  return out;
}

// S[k, t, d] = A sin(2 pi F (t+1)/L + phi), straight from the definition.
inline Array3 atoms(const std::vector<double>& A, const std::vector<double>& F,
                    const std::vector<double>& P, std::size_t K, std::size_t D, std::size_t L) {
  Array3 S(K, L, D);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t d = 0; d < D; ++d) {
        const std::size_t i = k * D + d;
        S(k, t, d) = A[i] * std::sin(2.0 * kPi * F[i] * static_cast<double>(t + 1) /
                                         static_cast<double>(L) + P[i]);
      }
  return S;
}

inline double hann(std::size_t n, std::size_t N) {
  return 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(n) / static_cast<double>(N - 1)));
}

// |DFT| of each windowed frame by direct O(n^2) summation; result[f][tau].
inline std::vector<std::vector<double>> stft_magnitude(const std::vector<double>& x, std::size_t n_fft,
                                                       std::size_t hop, bool hann_window) {
  const std::size_t frames = 1 + (x.size() - n_fft) / hop;
  const std::size_t bins = n_fft / 2 + 1;
  std::vector<std::vector<double>> out(bins, std::vector<double>(frames));
  for (std::size_t tau = 0; tau < frames; ++tau) {
    for (std::size_t f = 0; f < bins; ++f) {
      std::complex<double> acc = 0.0;
      for (std::size_t n = 0; n < n_fft; ++n) {
        const double w = hann_window ? hann(n, n_fft) : 1.0;
        const double ang = -2.0 * kPi * static_cast<double>(f * n) / static_cast<double>(n_fft);
        acc += w * x[tau * hop + n] * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      out[f][tau] = std::abs(acc);
    }
  }
  return out;
}

inline double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

inline std::vector<double> softmax(std::vector<double> z) {
  double m = z[0];
  for (double v : z) m = v > m ? v : m;
  double s = 0.0;
  for (double& v : z) s += (v = std::exp(v - m));
  for (double& v : z) v /= s;
  return z;
}

// log N(z; mu, diag(var)) summed into a mixture, no log-sum-exp tricks.
inline double gmm_density(const std::vector<double>& z, const std::vector<double>& w,
                          const std::vector<std::vector<double>>& mu,
                          const std::vector<std::vector<double>>& var) {
  double p = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) {
    double q = w[m];
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double diff = z[k] - mu[m][k];
      q *= std::exp(-0.5 * diff * diff / var[m][k]) / std::sqrt(2.0 * kPi * var[m][k]);
    }
    p += q;
  }
  return p;
}

}  // namespace oracle
