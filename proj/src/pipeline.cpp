#include "vox/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "vox/speaker_encoder.hpp"
#include "vox/synthesizer.hpp"

namespace vox {

namespace {

constexpr int kToySampleRate = 16000;
constexpr double kTokenSeconds = 0.1;

// Two-pole-style resonance gain around the speaker's characteristic center.
double resonance_gain(double f, double center, double bandwidth) {
  const double d = (f - center) / bandwidth;
  return 1.0 / (1.0 + d * d);
}

std::vector<double> render_tokens(const std::string& digits, double f0, double& phase) {
  const std::size_t token_len = static_cast<std::size_t>(kTokenSeconds * kToySampleRate);
  const std::size_t fade = kToySampleRate / 200;  // 5 ms
  const double center = 5.0 * f0;
  std::vector<double> out;
  out.reserve(digits.size() * token_len);
  for (char ch : digits) {
    const int d = ch - '0';
    const double pitch = f0 * std::pow(2.0, (d - 4.5) / 48.0);
    const std::size_t n_harm =
        static_cast<std::size_t>(std::floor(0.45 * kToySampleRate / pitch));
    std::vector<double> amp(n_harm + 1, 0.0);
    double amp_sum = 0.0;
    for (std::size_t h = 1; h <= n_harm; ++h) {
      amp[h] = resonance_gain(h * pitch, center, f0) / static_cast<double>(h);
      amp_sum += amp[h];
    }
    const double norm = 0.3 / amp_sum;
    for (std::size_t i = 0; i < token_len; ++i) {
      double s = 0.0;
      for (std::size_t h = 1; h <= n_harm; ++h)
        s += amp[h] * std::sin(static_cast<double>(h) * phase);
      double env = 1.0;
      if (i < fade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * i / fade);
      if (token_len - i <= fade)
        env = 0.5 - 0.5 * std::cos(std::numbers::pi * (token_len - i) / fade);
      out.push_back(norm * env * s);
      phase += 2.0 * std::numbers::pi * pitch / kToySampleRate;
    }
  }
  return out;
}

}  // namespace

Manifest generate_toy_corpus(const std::string& out_dir, std::size_t n_speakers,
                             std::size_t utterances_per_speaker, std::uint64_t seed) {
  if (n_speakers < 2) throw InsufficientSpeakers("toy corpus needs at least 2 speakers");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoFailure("cannot create " + out_dir + ": " + ec.message());

  Manifest m;
  char buf[64];
  for (std::size_t spk = 0; spk < n_speakers; ++spk) {
    const double f0 = 120.0 + 40.0 * static_cast<double>(spk);
    for (std::size_t u = 0; u < utterances_per_speaker; ++u) {
      Rng rng(mix_seed(seed, spk * utterances_per_speaker + u));
      const std::size_t n_tokens = 3 + rng.index(6);
      std::string digits;
      for (std::size_t i = 0; i < n_tokens; ++i)
        digits.push_back(static_cast<char>('0' + rng.index(10)));

      double phase = 0.0;
      Waveform w;
      w.sample_rate = kToySampleRate;
      w.samples = render_tokens(digits, f0, phase);

      std::snprintf(buf, sizeof buf, "spk%zu_utt%02zu", spk, u);
      ManifestRow row;
      row.utt_id = buf;
      row.speaker_id = "spk" + std::to_string(spk);
      row.wav_path = (std::filesystem::path(out_dir) / (row.utt_id + ".wav")).string();
      row.text = digits;
      save_wav(w, row.wav_path);
      m.rows.push_back(std::move(row));
    }
  }
  write_manifest(m, (std::filesystem::path(out_dir) / "manifest.tsv").string());
  return m;
}

SynthesisOutput synthesize(const std::string& text, const std::vector<Waveform>& references,
                           const nn::ParamSet& encoder, const nn::ParamSet& synthesizer,
                           const nn::ParamSet& vocoder, const RunConfig& cfg, SampleMode mode,
                           std::uint64_t sample_seed) {
  if (text.empty()) throw EmptyText("nothing to synthesize");

  const SpeakerEncoderConfig enc_cfg = speaker_encoder_config_of(encoder);
  if (enc_cfg.n_mels != cfg.mel.n_mels)
    throw CheckpointIncompatible("speaker encoder expects " + std::to_string(enc_cfg.n_mels) +
                                 " mel bins, config has " + std::to_string(cfg.mel.n_mels));
  SynthesizerConfig syn_cfg = SynthesizerConfig::from(cfg, enc_cfg.embed_dim);
  synthesizer_validate(synthesizer, syn_cfg);
  VocoderConfig voc_cfg = VocoderConfig::from(cfg);
  vocoder_validate(vocoder, voc_cfg);

  const Waveform spliced = splice_reference_audio(references);
  if (spliced.sample_rate != cfg.mel.sample_rate)
    throw SampleRateMismatch("reference audio is " + std::to_string(spliced.sample_rate) +
                             " Hz, config expects " + std::to_string(cfg.mel.sample_rate));
  const Tensor embedding = embed_utterance(mel_spectrogram(spliced, cfg.mel), encoder, enc_cfg);

  const TokenSequence tokens = tokenize(text);
  const Tensor memory = encode_text(tokens, embedding, synthesizer, syn_cfg);
  const DecodeResult decoded = decode(memory, synthesizer, syn_cfg, cfg.train.seed);

  SynthesisOutput out;
  out.token_count = tokens.ids.size();
  out.mel_frames = decoded.mel.rows();
  out.stop_reason = decoded.max_steps_exceeded ? "max_steps" : "stop_token";
  out.wav = generate(decoded.mel, vocoder, voc_cfg, cfg.mel.sample_rate, sample_seed, mode);
  return out;
}

}  // namespace vox
