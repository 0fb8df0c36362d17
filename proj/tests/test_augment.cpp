#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "vox/augment.hpp"

using namespace vox;

namespace {

Waveform make(std::vector<double> s, int sr = 16000) {
  Waveform w;
  w.samples = std::move(s);
  w.sample_rate = sr;
  return w;
}

Waveform random_wave(Rng& rng, std::size_t n, double amp = 0.3) {
  Waveform w;
  w.sample_rate = 16000;
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(rng.uniform(-amp, amp));
  return w;
}

double power(const std::vector<double>& s) {
  double p = 0.0;
  for (double v : s) p += v * v;
  return p / static_cast<double>(s.size());
}

}  // namespace

TEST_CASE("add_noise: unit powers at 0 dB leave the noise unscaled") {
  Waveform clean = make(std::vector<double>(1000, 0.0));
  Waveform noise = make(std::vector<double>(1000, 0.0));
  for (std::size_t i = 0; i < 1000; ++i) {
    clean.samples[i] = (i % 2 == 0) ? 0.5 : -0.5;  // power 0.25
    noise.samples[i] = (i % 2 == 0) ? -0.5 : 0.5;  // power 0.25
  }
  Waveform out = add_noise(clean, noise, 0.0);
  for (std::size_t i = 0; i < 1000; ++i)
    CHECK(out.samples[i] == doctest::Approx(clean.samples[i] + noise.samples[i]).epsilon(1e-12));
}

TEST_CASE("add_noise: high snr output is close to clean") {
  Rng rng(3);
  Waveform clean = random_wave(rng, 2000);
  Waveform noise = random_wave(rng, 2000);
  Waveform out = add_noise(clean, noise, 60.0);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    const double d = out.samples[i] - clean.samples[i];
    num += d * d;
    den += clean.samples[i] * clean.samples[i];
  }
  CHECK(std::sqrt(num / den) < std::pow(10.0, -60.0 / 20.0) * 1.01);
}

TEST_CASE("add_noise: realized snr within 0.1 dB on 100 random cases") {
  for (int c = 0; c < 100; ++c) {
    Rng rng(mix_seed(7, c));
    Waveform clean = random_wave(rng, 1500 + rng.index(1000));
    Waveform noise = random_wave(rng, 800 + rng.index(2500));
    const double snr = rng.uniform(-5.0, 30.0);
    Waveform out = add_noise(clean, noise, snr, rng.index(100));
    std::vector<double> added(clean.samples.size());
    for (std::size_t i = 0; i < added.size(); ++i) added[i] = out.samples[i] - clean.samples[i];
    // peak normalization (if any) scales both parts equally and cancels in
    // the ratio
    const double realized = 10.0 * std::log10(power(clean.samples) / power(added));
    CHECK(std::abs(realized - snr) <= 0.1);
  }
}

TEST_CASE("add_noise rejects silent inputs and tiles short noise") {
  Waveform silent = make(std::vector<double>(100, 0.0));
  Waveform ok = make(std::vector<double>(100, 0.3));
  CHECK_THROWS_AS(add_noise(silent, ok, 10.0), SilentSignal);
  CHECK_THROWS_AS(add_noise(ok, silent, 10.0), SilentNoise);

  Rng rng(9);
  Waveform clean = random_wave(rng, 1000);
  Waveform shorty = random_wave(rng, 300);
  Waveform out = add_noise(clean, shorty, 10.0);
  CHECK(out.samples.size() == 1000);
  // tiling repeats the scaled noise with period 300
  std::vector<double> added(1000);
  for (std::size_t i = 0; i < 1000; ++i) added[i] = out.samples[i] - clean.samples[i];
  for (std::size_t i = 300; i < 1000; ++i)
    CHECK(added[i] == doctest::Approx(added[i - 300]).epsilon(1e-9));
}

TEST_CASE("add_reverb: unit impulse is an identity up to rescale") {
  Rng rng(11);
  Waveform dry = random_wave(rng, 500);
  Waveform rir = make({1.0});
  Waveform out = add_reverb(dry, rir);
  REQUIRE(out.samples.size() == dry.samples.size());
  for (std::size_t i = 0; i < dry.samples.size(); ++i)
    CHECK(std::abs(out.samples[i] - dry.samples[i]) < 1e-9);
}

TEST_CASE("add_reverb: delayed impulse shifts the signal") {
  Rng rng(13);
  Waveform dry = random_wave(rng, 400);
  Waveform rir = make(std::vector<double>(6, 0.0));
  rir.samples[5] = 1.0;
  Waveform out = add_reverb(dry, rir);
  const double rms_dry = std::sqrt(power(dry.samples));
  const double rms_out = std::sqrt(power(out.samples));
  CHECK(rms_out == doctest::Approx(rms_dry).epsilon(1e-6));
  // out = shift(dry, 5) * g for a single gain g
  const double g = out.samples[10] / dry.samples[5];
  for (std::size_t i = 5; i < 400; ++i)
    CHECK(out.samples[i] == doctest::Approx(g * dry.samples[i - 5]).epsilon(1e-7));
}

TEST_CASE("add_reverb matches the direct-sum convolution oracle") {
  for (int c = 0; c < 20; ++c) {
    Rng rng(mix_seed(17, c));
    Waveform dry = random_wave(rng, 64 + rng.index(128));
    Waveform rir = random_wave(rng, 1 + rng.index(32), 0.5);
    Waveform out = add_reverb(dry, rir);
    REQUIRE(out.samples.size() == dry.samples.size());

    std::vector<double> conv(dry.samples.size(), 0.0);
    for (std::size_t n = 0; n < conv.size(); ++n)
      for (std::size_t k = 0; k < rir.samples.size() && k <= n; ++k)
        conv[n] += dry.samples[n - k] * rir.samples[k];
    const double rms_dry = std::sqrt(power(dry.samples));
    const double rms_conv = std::sqrt(power(conv));
    for (std::size_t n = 0; n < conv.size(); ++n)
      CHECK(std::abs(out.samples[n] - conv[n] * rms_dry / rms_conv) < 1e-9);
  }
}

TEST_CASE("add_reverb contract errors") {
  Waveform dry = make(std::vector<double>(100, 0.2));
  Waveform rir = make({1.0}, 8000);
  CHECK_THROWS_AS(add_reverb(dry, rir), SampleRateMismatch);
  CHECK_THROWS_AS(add_reverb(dry, make({})), EmptyRir);
}

TEST_CASE("augment: zero probabilities are a no-op with an empty record") {
  Rng rng(19);
  Waveform w = random_wave(rng, 800);
  AugmentSpec spec;
  spec.p_noise = spec.p_reverb = spec.p_speed = 0.0;
  Rng draw(5);
  auto [out, rec] = augment(w, spec, draw);
  CHECK(out.samples == w.samples);
  CHECK(rec.serialize() == "none");
}

TEST_CASE("augment: fixed seed reproduces output and record") {
  Rng rng(23);
  Waveform w = random_wave(rng, 1200);
  AugmentSpec spec;
  spec.noise_pool = {random_wave(rng, 700), random_wave(rng, 2000)};
  spec.rir_pool = {make({1.0, 0.4, 0.1})};
  spec.p_noise = spec.p_reverb = spec.p_speed = 0.7;

  Rng a(99), b(99);
  auto [w1, r1] = augment(w, spec, a);
  auto [w2, r2] = augment(w, spec, b);
  CHECK(w1.samples == w2.samples);
  CHECK(r1.serialize() == r2.serialize());
}

TEST_CASE("augment: forced speed changes length per the resampling contract") {
  Rng rng(29);
  Waveform w = random_wave(rng, 1000);
  AugmentSpec spec;
  spec.p_noise = spec.p_reverb = 0.0;
  spec.p_speed = 1.0;
  spec.speed_factors = {0.9};
  Rng draw(1);
  auto [out, rec] = augment(w, spec, draw);
  CHECK(out.samples.size() == static_cast<std::size_t>(std::llround(1000.0 / 0.9)));
  CHECK(rec.speed);
  CHECK(rec.speed_factor == 0.9);
}

TEST_CASE("augment: record replay is bit identical") {
  Rng rng(31);
  Waveform w = random_wave(rng, 1500);
  AugmentSpec spec;
  spec.noise_pool = {random_wave(rng, 900), random_wave(rng, 3000)};
  spec.rir_pool = {make({0.9, 0.3}), make({1.0, 0.0, 0.2})};
  spec.p_noise = spec.p_reverb = spec.p_speed = 0.8;

  for (int c = 0; c < 10; ++c) {
    Rng draw(mix_seed(37, c));
    auto [out, rec] = augment(w, spec, draw);
    const AugmentRecord parsed = AugmentRecord::parse(rec.serialize());
    Waveform replay = apply_record(w, spec, parsed);
    CHECK(replay.samples == out.samples);
  }
}
