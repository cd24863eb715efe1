#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace sdgm::loss {

enum class WindowKind { Hann, Rect };

WindowKind parse_window(std::string_view s);
std::string_view to_string(WindowKind w);

struct StftConfig {
  std::size_t n_fft = 32;
  std::size_t hop = 8;
  WindowKind window = WindowKind::Hann;
  // Zero-pads n_fft/2 samples on both sides when set.
  bool center = false;

  void validate() const;
  std::size_t bins() const { return n_fft / 2 + 1; }
  // Full frames for a length-L signal; throws SignalTooShort if there are none.
  std::size_t frames(std::size_t length) const;
};

// Symmetric window of length n: Hann is 0.5 * (1 - cos(2 pi i / (n - 1))).
std::vector<double> make_window(std::size_t n, WindowKind kind);

// In-place forward DFT with the e^{-2 pi i k n / N} convention. Radix-2 for
// power-of-two sizes, direct summation otherwise.
void fft(std::vector<std::complex<double>>& a);

// One-sided spectrogram, bins x frames, bin-major.
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<std::complex<double>> values;

  std::complex<double> at(std::size_t f, std::size_t tau) const {
    return values[f * frames + tau];
  }
};

Spectrogram stft(std::span<const double> x, const StftConfig& cfg);

// Adjoint of |stft| for real input: given dL/d|Y| (bins x frames, same layout
// as Spectrogram), accumulates dL/dx into dx. Zero-magnitude bins contribute
// nothing.
void stft_magnitude_backward(const Spectrogram& spec, std::span<const double> dmag,
                             const StftConfig& cfg, std::span<double> dx);

// Number of stft() calls made by this process; used to verify that a
// disabled frequency term skips all spectral work.
std::uint64_t stft_call_count();

}  // namespace sdgm::loss
