#include "sdgm/stft.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <string>

#include "sdgm/error.hpp"

namespace sdgm::loss {

namespace {

std::atomic<std::uint64_t> g_stft_calls{0};

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Copies x into a zero-padded buffer when center framing is on.
std::vector<double> framed_signal(std::span<const double> x, const StftConfig& cfg) {
  const std::size_t pad = cfg.center ? cfg.n_fft / 2 : 0;
  std::vector<double> buf(x.size() + 2 * pad, 0.0);
  std::copy(x.begin(), x.end(), buf.begin() + static_cast<std::ptrdiff_t>(pad));
  return buf;
}

}  // namespace

WindowKind parse_window(std::string_view s) {
  if (s == "hann") return WindowKind::Hann;
  if (s == "rect") return WindowKind::Rect;
  throw Error(ErrorKind::InvalidArgument, "unknown window '" + std::string(s) + "' (hann|rect)");
}

std::string_view to_string(WindowKind w) { return w == WindowKind::Hann ? "hann" : "rect"; }

void StftConfig::validate() const {
  if (n_fft < 1) throw Error(ErrorKind::InvalidArgument, "n_fft must be >= 1");
  if (hop < 1 || hop > n_fft) {
    throw Error(ErrorKind::InvalidArgument, "hop must lie in [1, n_fft]");
  }
}

std::size_t StftConfig::frames(std::size_t length) const {
  const std::size_t padded = length + (center ? 2 * (n_fft / 2) : 0);
  if (padded < n_fft) {
    throw Error(ErrorKind::SignalTooShort,
                "signal of length " + std::to_string(length) +
                    " is shorter than the window (" + std::to_string(n_fft) + ")");
  }
  return 1 + (padded - n_fft) / hop;
}

std::vector<double> make_window(std::size_t n, WindowKind kind) {
  std::vector<double> w(n, 1.0);
  if (kind == WindowKind::Hann && n > 1) {
    const double denom = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom));
    }
  }
  return w;
}

void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  if (!is_pow2(n)) {
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) /
                           static_cast<double>(n);
        acc += a[j] * std::polar(1.0, ang);
      }
      out[k] = acc;
    }
    a.swap(out);
    return;
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> wj = std::polar(1.0, ang * static_cast<double>(j));
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * wj;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
}

Spectrogram stft(std::span<const double> x, const StftConfig& cfg) {
  cfg.validate();
  ++g_stft_calls;
  const std::size_t T = cfg.frames(x.size());
  const std::size_t F = cfg.bins();
  const auto window = make_window(cfg.n_fft, cfg.window);
  const auto sig = framed_signal(x, cfg);

  Spectrogram spec{F, T, std::vector<std::complex<double>>(F * T)};
  std::vector<std::complex<double>> buf(cfg.n_fft);
  for (std::size_t tau = 0; tau < T; ++tau) {
    const std::size_t off = tau * cfg.hop;
    for (std::size_t n = 0; n < cfg.n_fft; ++n) buf[n] = sig[off + n] * window[n];
    fft(buf);
    for (std::size_t f = 0; f < F; ++f) spec.values[f * T + tau] = buf[f];
  }
  return spec;
}

void stft_magnitude_backward(const Spectrogram& spec, std::span<const double> dmag,
                             const StftConfig& cfg, std::span<double> dx) {
  const std::size_t pad = cfg.center ? cfg.n_fft / 2 : 0;
  const auto window = make_window(cfg.n_fft, cfg.window);
  std::vector<std::complex<double>> buf(cfg.n_fft);
  for (std::size_t tau = 0; tau < spec.frames; ++tau) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t f = 0; f < spec.bins; ++f) {
      const std::complex<double> y = spec.at(f, tau);
      const double mag = std::abs(y);
      if (mag == 0.0) continue;
      buf[f] = dmag[f * spec.frames + tau] * std::conj(y) / mag;
    }
    fft(buf);
    const std::size_t off = tau * cfg.hop;
    for (std::size_t n = 0; n < cfg.n_fft; ++n) {
      const std::size_t p = off + n;
      if (p < pad || p - pad >= dx.size()) continue;
      dx[p - pad] += window[n] * buf[n].real();
    }
  }
}

std::uint64_t stft_call_count() { return g_stft_calls.load(); }

}  // namespace sdgm::loss
