#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "vox/error.hpp"
#include "vox/tensor.hpp"

namespace vox {

// Mono audio in [-1, 1] at an integer sample rate. The universal signal
// currency between modules.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct MelConfig {
  int sample_rate = 16000;
  std::size_t frame_length = 800;  // 50 ms
  std::size_t hop_length = 200;    // 12.5 ms
  std::size_t fft_size = 1024;
  std::size_t n_mels = 80;
  double fmin = 40.0;
  double fmax = 7600.0;
  double preemphasis = 0.97;
  double log_floor = 1e-5;

  void validate() const;
  std::size_t frame_count(std::size_t n_samples) const {
    return n_samples < frame_length ? 0 : 1 + (n_samples - frame_length) / hop_length;
  }
};

struct MelSpectrogram {
  Tensor data;  // frames x n_mels, natural-log energies, floored
  MelConfig config;

  std::size_t frames() const { return data.rows(); }
};

// RIFF/WAVE, PCM16, mono, little-endian. Everything else is rejected.
Waveform load_wav(const std::string& path);
void save_wav(const Waveform& w, const std::string& path);

// preemphasis -> Hann-windowed frames -> magnitude FFT -> triangular mel
// filterbank -> natural log with floor. Unpadded framing: the trailing
// partial frame is dropped.
MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg);

// Triangular filter center frequencies in Hz (for oracle checks).
std::vector<double> mel_filter_centers(const MelConfig& cfg);

// Mu-law companding, mu = Q - 1. Input is clamped into [-1, 1].
int mu_law_encode(double sample, int quantization_channels);
double mu_law_decode(int index, int quantization_channels);
double mu_law_compand(double x, int quantization_channels);  // f(x) in [-1, 1]

// Windowed-sinc resampling by 1/factor at the nominal sample rate, so
// duration scales by 1/factor and pitch by factor.
Waveform speed_perturb(const Waveform& w, double factor);

// Radix-2 in-place FFT; n must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse);

}  // namespace vox
