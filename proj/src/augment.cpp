#include "vox/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace vox {

namespace {

double mean_power(const std::vector<double>& x) {
  double p = 0.0;
  for (double s : x) p += s * s;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

double rms(const std::vector<double>& x) { return std::sqrt(mean_power(x)); }

}  // namespace

void AugmentSpec::validate() const {
  if (snr_lo > snr_hi) throw ConfigInvalid("augment snr_lo > snr_hi");
  for (double p : {p_noise, p_reverb, p_speed})
    if (p < 0.0 || p > 1.0) throw ConfigInvalid("augment probabilities must be in [0,1]");
  for (double f : speed_factors)
    if (f < 0.5 || f > 2.0) throw FactorOutOfRange("speed factors must lie in [0.5, 2.0]");
}

Waveform add_noise(const Waveform& clean, const Waveform& noise, double snr_db,
                   std::size_t noise_offset) {
  const double p_clean = mean_power(clean.samples);
  if (p_clean <= 0.0) throw SilentSignal("clean signal has zero power");
  if (noise.samples.empty() || mean_power(noise.samples) <= 0.0)
    throw SilentNoise("noise signal has zero power");

  // Tile or crop the noise to the clean length, then scale to the target SNR.
  std::vector<double> n(clean.samples.size());
  const std::size_t L = noise.samples.size();
  for (std::size_t i = 0; i < n.size(); ++i) n[i] = noise.samples[(noise_offset + i) % L];
  const double p_noise = mean_power(n);
  if (p_noise <= 0.0) throw SilentNoise("noise crop has zero power");
  const double scale = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));

  Waveform out;
  out.sample_rate = clean.sample_rate;
  out.samples.resize(clean.samples.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    out.samples[i] = clean.samples[i] + scale * n[i];
    peak = std::max(peak, std::abs(out.samples[i]));
  }
  if (peak > 1.0)
    for (auto& s : out.samples) s /= peak;
  return out;
}

Waveform add_reverb(const Waveform& dry, const Waveform& rir) {
  if (rir.samples.empty()) throw EmptyRir("impulse response is empty");
  if (dry.sample_rate != rir.sample_rate)
    throw SampleRateMismatch("dry and rir sample rates differ");

  const std::size_t N = dry.samples.size(), L = rir.samples.size();
  std::size_t fft_n = 1;
  while (fft_n < N + L - 1) fft_n <<= 1;
  std::vector<std::complex<double>> a(fft_n), b(fft_n);
  for (std::size_t i = 0; i < N; ++i) a[i] = dry.samples[i];
  for (std::size_t i = 0; i < L; ++i) b[i] = rir.samples[i];
  fft(a, false);
  fft(b, false);
  for (std::size_t i = 0; i < fft_n; ++i) a[i] *= b[i];
  fft(a, true);

  Waveform out;
  out.sample_rate = dry.sample_rate;
  out.samples.resize(N);
  for (std::size_t i = 0; i < N; ++i) out.samples[i] = a[i].real();

  const double target = rms(dry.samples), got = rms(out.samples);
  if (got > 0.0) {
    const double k = target / got;
    for (auto& s : out.samples) s *= k;
  }
  return out;
}

std::pair<Waveform, AugmentRecord> augment(const Waveform& w, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  AugmentRecord rec;

  // Decisions and parameters are always drawn in the same order so the
  // stream stays aligned regardless of which branches fire.
  const bool want_noise = rng.uniform() < spec.p_noise;
  const std::size_t noise_idx = spec.noise_pool.empty() ? 0 : rng.index(spec.noise_pool.size());
  const double snr = rng.uniform(spec.snr_lo, spec.snr_hi);
  const double off_u = rng.uniform();
  const bool want_reverb = rng.uniform() < spec.p_reverb;
  const std::size_t rir_idx = spec.rir_pool.empty() ? 0 : rng.index(spec.rir_pool.size());
  const bool want_speed = rng.uniform() < spec.p_speed;
  const std::size_t speed_idx =
      spec.speed_factors.empty() ? 0 : rng.index(spec.speed_factors.size());

  if (want_noise && !spec.noise_pool.empty()) {
    rec.noise = true;
    rec.noise_index = noise_idx;
    rec.snr_db = snr;
    const auto& nz = spec.noise_pool[noise_idx];
    rec.noise_offset = nz.samples.size() > w.samples.size()
                           ? static_cast<std::size_t>(off_u * static_cast<double>(
                                                                  nz.samples.size() - w.samples.size()))
                           : 0;
  }
  if (want_reverb && !spec.rir_pool.empty()) {
    rec.reverb = true;
    rec.rir_index = rir_idx;
  }
  if (want_speed && !spec.speed_factors.empty()) {
    rec.speed = true;
    rec.speed_factor = spec.speed_factors[speed_idx];
  }
  return {apply_record(w, spec, rec), rec};
}

Waveform apply_record(const Waveform& w, const AugmentSpec& spec, const AugmentRecord& rec) {
  Waveform out = w;
  if (rec.noise) {
    if (rec.noise_index >= spec.noise_pool.size()) throw IndexOutOfRange("noise index");
    out = add_noise(out, spec.noise_pool[rec.noise_index], rec.snr_db, rec.noise_offset);
  }
  if (rec.reverb) {
    if (rec.rir_index >= spec.rir_pool.size()) throw IndexOutOfRange("rir index");
    out = add_reverb(out, spec.rir_pool[rec.rir_index]);
  }
  if (rec.speed) out = speed_perturb(out, rec.speed_factor);
  return out;
}

std::string AugmentRecord::serialize() const {
  std::string s;
  char buf[96];
  if (noise) {
    std::snprintf(buf, sizeof(buf), "noise:%zu:%zu:%.17g", noise_index, noise_offset, snr_db);
    s += buf;
  }
  if (reverb) {
    std::snprintf(buf, sizeof(buf), "%sreverb:%zu", s.empty() ? "" : ";", rir_index);
    s += buf;
  }
  if (speed) {
    std::snprintf(buf, sizeof(buf), "%sspeed:%.17g", s.empty() ? "" : ";", speed_factor);
    s += buf;
  }
  return s.empty() ? "none" : s;
}

AugmentRecord AugmentRecord::parse(const std::string& line) {
  AugmentRecord rec;
  if (line == "none" || line.empty()) return rec;
  std::stringstream ss(line);
  std::string part;
  while (std::getline(ss, part, ';')) {
    std::stringstream ps(part);
    std::string tag;
    std::getline(ps, tag, ':');
    std::string rest;
    std::getline(ps, rest);
    if (tag == "noise") {
      rec.noise = true;
      if (std::sscanf(rest.c_str(), "%zu:%zu:%lg", &rec.noise_index, &rec.noise_offset,
                      &rec.snr_db) != 3)
        throw ParseError("bad noise record '" + part + "'");
    } else if (tag == "reverb") {
      rec.reverb = true;
      if (std::sscanf(rest.c_str(), "%zu", &rec.rir_index) != 1)
        throw ParseError("bad reverb record '" + part + "'");
    } else if (tag == "speed") {
      rec.speed = true;
      if (std::sscanf(rest.c_str(), "%lg", &rec.speed_factor) != 1)
        throw ParseError("bad speed record '" + part + "'");
    } else {
      throw ParseError("unknown augment record tag '" + tag + "'");
    }
  }
  return rec;
}

std::vector<Waveform> load_pool(const std::string& pool_manifest_path) {
  std::ifstream in(pool_manifest_path);
  if (!in) throw IoFailure("cannot open pool manifest " + pool_manifest_path);
  const auto base = std::filesystem::path(pool_manifest_path).parent_path();
  std::vector<Waveform> pool;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::filesystem::path p(line);
    if (p.is_relative()) p = base / p;
    pool.push_back(load_wav(p.string()));
  }
  return pool;
}

}  // namespace vox
