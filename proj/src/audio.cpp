#include "vox/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace vox {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t x) {
  out.push_back(static_cast<char>(x & 0xff));
  out.push_back(static_cast<char>((x >> 8) & 0xff));
  out.push_back(static_cast<char>((x >> 16) & 0xff));
  out.push_back(static_cast<char>((x >> 24) & 0xff));
}

void put_u16(std::string& out, std::uint16_t x) {
  out.push_back(static_cast<char>(x & 0xff));
  out.push_back(static_cast<char>((x >> 8) & 0xff));
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace

void MelConfig::validate() const {
  if (sample_rate <= 0) throw ShapeMismatch("sample_rate must be positive");
  if (frame_length > fft_size) throw ShapeMismatch("frame_length must not exceed fft_size");
  if (hop_length == 0 || hop_length > frame_length)
    throw ShapeMismatch("hop_length must be in (0, frame_length]");
  if (!(fmin < fmax && fmax <= sample_rate / 2.0))
    throw ShapeMismatch("need fmin < fmax <= sample_rate/2");
  if ((fft_size & (fft_size - 1)) != 0 || fft_size == 0)
    throw ShapeMismatch("fft_size must be a power of two");
  if (n_mels == 0) throw ShapeMismatch("n_mels must be positive");
  if (preemphasis < 0.0 || preemphasis >= 1.0) throw ShapeMismatch("preemphasis must be in [0,1)");
  if (log_floor <= 0.0) throw ShapeMismatch("log_floor must be positive");
}

Waveform load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();

  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw NotWav(path + " is not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  Waveform w;

  std::size_t off = 12;
  while (off + 8 <= n) {
    const char* id = reinterpret_cast<const char*>(p + off);
    std::uint32_t sz = read_u32(p + off + 4);
    std::size_t body = off + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (body + 16 > n) throw Truncated("fmt chunk exceeds file size");
      format = read_u16(p + body);
      channels = read_u16(p + body + 2);
      rate = read_u32(p + body + 4);
      bits = read_u16(p + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw NotWav("data chunk before fmt chunk");
      if (format != 1 || bits != 16) throw UnsupportedFormat("only PCM16 is supported");
      if (channels != 1) throw UnsupportedFormat("only mono is supported");
      if (body + sz > n) throw Truncated("declared data length exceeds file");
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(sz / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        auto u = static_cast<std::uint16_t>(p[body + 2 * i] | (p[body + 2 * i + 1] << 8));
        w.samples[i] = static_cast<double>(static_cast<std::int16_t>(u)) / 32768.0;
      }
      return w;
    }
    off = body + sz + (sz & 1);  // chunks are word-aligned
  }
  if (!have_fmt) throw NotWav("no fmt chunk found");
  throw Truncated("no data chunk found");
}

void save_wav(const Waveform& w, const std::string& path) {
  for (double s : w.samples)
    if (!std::isfinite(s)) throw IoFailure("non-finite sample cannot be written");

  std::string out;
  out.reserve(44 + 2 * w.samples.size());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(2 * w.samples.size());
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : w.samples) {
    double c = std::clamp(s, -1.0, 1.0);
    long q = std::lround(c * 32768.0);
    q = std::clamp(q, -32768L, 32767L);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoFailure("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoFailure("write failed: " + path);
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ShapeMismatch("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        auto u = a[i + k];
        auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

std::vector<double> mel_filter_centers(const MelConfig& cfg) {
  std::vector<double> centers(cfg.n_mels);
  const double mlo = hz_to_mel(cfg.fmin), mhi = hz_to_mel(cfg.fmax);
  for (std::size_t m = 0; m < cfg.n_mels; ++m)
    centers[m] = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(m + 1) /
                                     static_cast<double>(cfg.n_mels + 1));
  return centers;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  if (w.sample_rate != cfg.sample_rate)
    throw SampleRateMismatch("waveform rate " + std::to_string(w.sample_rate) +
                             " != config rate " + std::to_string(cfg.sample_rate));
  if (w.samples.size() < cfg.frame_length)
    throw TooShort("need at least frame_length samples");

  // Preemphasis over the whole signal; x'[0] = x[0].
  std::vector<double> x(w.samples.size());
  x[0] = w.samples[0];
  for (std::size_t i = 1; i < x.size(); ++i)
    x[i] = w.samples[i] - cfg.preemphasis * w.samples[i - 1];

  std::vector<double> window(cfg.frame_length);
  for (std::size_t i = 0; i < cfg.frame_length; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                     static_cast<double>(cfg.frame_length));

  // Triangular filterbank (peak 1), HTK mel scale.
  const std::size_t n_bins = cfg.fft_size / 2 + 1;
  const double mlo = hz_to_mel(cfg.fmin), mhi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t m = 0; m < edges.size(); ++m)
    edges[m] = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(m) /
                                   static_cast<double>(cfg.n_mels + 1));
  std::vector<std::vector<std::pair<std::size_t, double>>> filters(cfg.n_mels);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    double f0 = edges[m], f1 = edges[m + 1], f2 = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      double fk = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
      double wgt = 0.0;
      if (fk > f0 && fk < f1) wgt = (fk - f0) / (f1 - f0);
      else if (fk >= f1 && fk < f2) wgt = (f2 - fk) / (f2 - f1);
      if (wgt > 0.0) filters[m].emplace_back(k, wgt);
    }
  }

  const std::size_t n_frames = cfg.frame_count(x.size());
  MelSpectrogram mel;
  mel.config = cfg;
  mel.data = Tensor({n_frames, cfg.n_mels});

  std::vector<std::complex<double>> buf(cfg.fft_size);
  const double floor_log = std::log(cfg.log_floor);
  for (std::size_t t = 0; t < n_frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    const std::size_t s0 = t * cfg.hop_length;
    for (std::size_t i = 0; i < cfg.frame_length; ++i)
      buf[i] = x[s0 + i] * window[i];
    fft(buf, false);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      for (auto [k, wgt] : filters[m]) e += wgt * std::abs(buf[k]);
      mel.data.at(t, m) = e <= cfg.log_floor ? floor_log : std::log(e);
    }
  }
  return mel;
}

double mu_law_compand(double x, int quantization_channels) {
  if (quantization_channels < 2) throw ShapeMismatch("need at least 2 quantization channels");
  const double mu = quantization_channels - 1;
  double c = std::clamp(x, -1.0, 1.0);
  double f = std::log1p(mu * std::abs(c)) / std::log1p(mu);
  return c < 0.0 ? -f : f;
}

int mu_law_encode(double sample, int quantization_channels) {
  const double f = mu_law_compand(sample, quantization_channels);
  const double q = (f + 1.0) / 2.0 * (quantization_channels - 1);
  long idx = std::lround(q);  // round half away from zero
  idx = std::clamp(idx, 0L, static_cast<long>(quantization_channels - 1));
  return static_cast<int>(idx);
}

double mu_law_decode(int index, int quantization_channels) {
  if (quantization_channels < 2) throw ShapeMismatch("need at least 2 quantization channels");
  if (index < 0 || index >= quantization_channels)
    throw IndexOutOfRange("class index " + std::to_string(index) + " outside [0, Q)");
  const double mu = quantization_channels - 1;
  const double y = 2.0 * index / mu - 1.0;
  const double mag = (std::pow(1.0 + mu, std::abs(y)) - 1.0) / mu;
  return y < 0.0 ? -mag : mag;
}

Waveform speed_perturb(const Waveform& w, double factor) {
  if (!(factor >= 0.5 && factor <= 2.0))
    throw FactorOutOfRange("speed factor must be in [0.5, 2.0]");
  if (factor == 1.0) return w;

  const double fc = std::min(1.0, 1.0 / factor);  // normalized cutoff
  const int half_width = 32;
  const std::size_t out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(w.samples.size()) / factor));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(out_len);

  const auto& x = w.samples;
  const long n_in = static_cast<long>(x.size());
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) * factor;
    const long m0 = static_cast<long>(std::ceil(t)) - half_width;
    const long m1 = static_cast<long>(std::floor(t)) + half_width;
    double acc = 0.0;
    for (long m = std::max(0L, m0); m <= std::min(n_in - 1, m1); ++m) {
      const double tau = t - static_cast<double>(m);
      double sinc = std::abs(fc * tau) < 1e-12
                        ? 1.0
                        : std::sin(kPi * fc * tau) / (kPi * fc * tau);
      const double win = 0.5 + 0.5 * std::cos(kPi * tau / half_width);  // Hann taper
      acc += x[static_cast<std::size_t>(m)] * fc * sinc * win;
    }
    out.samples[n] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

void check_finite(const Tensor& t, const std::string& context) {
  for (double x : t.v)
    if (!std::isfinite(x)) throw NonFiniteValue("non-finite value in " + context);
}

}  // namespace vox
