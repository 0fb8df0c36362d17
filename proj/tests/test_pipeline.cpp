#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "vox/pipeline.hpp"
#include "vox/speaker_encoder.hpp"
#include "vox/synthesizer.hpp"

using namespace vox;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

}  // namespace

TEST_CASE("manifest parsing: rows, comments, duplicates, missing files") {
  const std::string dir = tmp_path("man_test");
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  // the wav files only need to exist
  for (const char* n : {"a.wav", "b.wav", "c.wav"}) {
    std::ofstream out(std::filesystem::path(dir) / n);
    out << "x";
  }
  const std::string mpath = (std::filesystem::path(dir) / "m.tsv").string();
  {
    std::ofstream out(mpath);
    out << "# comment line\n";
    out << "u1\tspkA\ta.wav\thello\n";
    out << "\n";
    out << "u2\tspkA\tb.wav\tworld\n";
    out << "u3\tspkB\tc.wav\tagain\n";
  }
  Manifest m = parse_manifest(mpath);
  REQUIRE(m.rows.size() == 3);
  CHECK(m.rows[0].utt_id == "u1");
  CHECK(m.rows[2].speaker_id == "spkB");
  CHECK(m.speaker_ids() == std::vector<std::string>{"spkA", "spkB"});
  // paths resolve relative to the manifest directory
  CHECK(std::filesystem::path(m.rows[0].wav_path).is_absolute() ==
        std::filesystem::path(mpath).is_absolute());
  CHECK(std::filesystem::exists(m.rows[0].wav_path));

  {
    std::ofstream out(mpath);
    out << "u1\tspkA\ta.wav\thello\nu1\tspkA\tb.wav\tdup\n";
  }
  try {
    parse_manifest(mpath);
    FAIL("expected DuplicateUttId");
  } catch (const DuplicateUttId& e) {
    CHECK(std::string(e.what()).find("u1") != std::string::npos);
  }

  {
    std::ofstream out(mpath);
    out << "u1\tspkA\tnope.wav\thello\n";
  }
  CHECK_THROWS_AS(parse_manifest(mpath), MissingFile);

  {
    std::ofstream out(mpath);
    out << "u1\tspkA\ta.wav\n";
  }
  CHECK_THROWS_AS(parse_manifest(mpath), ParseError);
}

TEST_CASE("manifest write/parse round trip") {
  const std::string dir = tmp_path("man_rt");
  std::filesystem::remove_all(dir);
  Manifest m = generate_toy_corpus(dir, 2, 2, 3);
  const std::string copy = (std::filesystem::path(dir) / "copy.tsv").string();
  write_manifest(m, copy);
  Manifest back = parse_manifest(copy);
  REQUIRE(back.rows.size() == m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    CHECK(back.rows[i].utt_id == m.rows[i].utt_id);
    CHECK(back.rows[i].speaker_id == m.rows[i].speaker_id);
    CHECK(back.rows[i].text == m.rows[i].text);
    CHECK(std::filesystem::equivalent(back.rows[i].wav_path, m.rows[i].wav_path));
  }
}

TEST_CASE("config: apply, reject unknown keys, round trip") {
  RunConfig cfg;
  apply_config_line(cfg, "encoder.lstm_hidden = 64", 1);
  CHECK(cfg.encoder.lstm_hidden == 64);
  apply_config_line(cfg, "synth.cyc_weight = 0.25", 2);
  CHECK(cfg.synth.cyc_weight == 0.25);
  apply_config_line(cfg, "augment.speed_factors = 0.8,1.0,1.25", 3);
  CHECK(cfg.speed_factor_list() == std::vector<double>{0.8, 1.0, 1.25});
  apply_config_line(cfg, "# comment", 4);
  apply_config_line(cfg, "", 5);

  CHECK_THROWS_AS(apply_config_line(cfg, "nope.key = 1", 6), ConfigInvalid);
  CHECK_THROWS_AS(apply_config_line(cfg, "encoder.lstm_hidden = banana", 7), ConfigInvalid);
  CHECK_THROWS_AS(apply_config_line(cfg, "garbage without equals", 8), ConfigInvalid);

  cfg.mel.preemphasis = 0.9123456789012345;
  cfg.train.seed = 987654321;
  const std::string p = tmp_path("cfg_rt.txt");
  {
    std::ofstream out(p);
    out << dump_config(cfg);
  }
  RunConfig back = parse_config(p);
  CHECK(dump_config(back) == dump_config(cfg));
  CHECK(back.mel.preemphasis == cfg.mel.preemphasis);
  CHECK(back.train.seed == cfg.train.seed);
}

TEST_CASE("toy corpus: counts, determinism, spectral separation") {
  const std::string d1 = tmp_path("toy_a"), d2 = tmp_path("toy_b");
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);

  Manifest m = generate_toy_corpus(d1, 4, 20, 7);
  CHECK(m.rows.size() == 80);
  CHECK(m.n_speakers() == 4);
  std::size_t wavs = 0;
  for (const auto& e : std::filesystem::directory_iterator(d1))
    if (e.path().extension() == ".wav") ++wavs;
  CHECK(wavs == 80);

  Manifest m2 = generate_toy_corpus(d2, 4, 20, 7);
  for (std::size_t i : {std::size_t{0}, std::size_t{33}, std::size_t{79}})
    CHECK(slurp(m.rows[i].wav_path) == slurp(m2.rows[i].wav_path));
  CHECK(slurp((std::filesystem::path(d1) / "manifest.tsv").string()) ==
        slurp((std::filesystem::path(d2) / "manifest.tsv").string()));

  // one dominant spectral peak per speaker, all distinct
  std::vector<double> peaks;
  for (int spk = 0; spk < 4; ++spk) {
    Waveform w = load_wav(m.rows[static_cast<std::size_t>(spk) * 20].wav_path);
    const std::size_t n = 8192;
    std::vector<std::complex<double>> a(n);
    for (std::size_t i = 0; i < n && i < w.samples.size(); ++i) a[i] = w.samples[i];
    fft(a, false);
    std::size_t peak = 1;
    for (std::size_t k = 1; k < n / 2; ++k)
      if (std::abs(a[k]) > std::abs(a[peak])) peak = k;
    peaks.push_back(static_cast<double>(peak) * 16000.0 / static_cast<double>(n));
  }
  for (int spk = 0; spk < 4; ++spk) {
    // the digit pitch nudge moves the fundamental by up to 2^(4.5/48) ~ 6.7%
    const double expected = 5.0 * (120.0 + 40.0 * spk);
    CHECK(std::abs(peaks[static_cast<std::size_t>(spk)] - expected) < 0.08 * expected);
  }
  for (int spk = 1; spk < 4; ++spk)
    CHECK(peaks[static_cast<std::size_t>(spk)] > peaks[static_cast<std::size_t>(spk - 1)]);

  CHECK_THROWS_AS(generate_toy_corpus(tmp_path("toy_c"), 1, 5, 7), InsufficientSpeakers);
}

TEST_CASE("toy corpus texts are digit strings of 3 to 8 tokens") {
  const std::string d = tmp_path("toy_d");
  std::filesystem::remove_all(d);
  Manifest m = generate_toy_corpus(d, 2, 10, 9);
  for (const auto& r : m.rows) {
    CHECK(r.text.size() >= 3);
    CHECK(r.text.size() <= 8);
    for (char c : r.text) CHECK((c >= '0' && c <= '9'));
    Waveform w = load_wav(r.wav_path);
    CHECK(w.samples.size() == r.text.size() * 1600);
  }
}

TEST_CASE("synthesize chain honors the length arithmetic end to end") {
  const std::string d = tmp_path("toy_e");
  std::filesystem::remove_all(d);
  Manifest m = generate_toy_corpus(d, 2, 2, 21);

  RunConfig cfg;
  cfg.encoder.lstm_hidden = 8;
  cfg.encoder.fc1_dim = 16;
  cfg.encoder.embed_dim = 8;
  cfg.synth.embed_dim = 16;
  cfg.synth.prenet1 = 16;
  cfg.synth.prenet2 = 8;
  cfg.synth.bank_k = 3;
  cfg.synth.bank_channels = 8;
  cfg.synth.highway_layers = 2;
  cfg.synth.gru_hidden = 8;
  cfg.synth.attention_dim = 8;
  cfg.synth.decoder_hidden = 16;
  cfg.synth.max_decoder_steps = 12;
  cfg.vocoder.cond_dim = 8;
  cfg.vocoder.gru_hidden = 8;
  cfg.vocoder.fc_hidden = 8;
  cfg.vocoder.class_embed_dim = 8;

  nn::ParamSet enc = speaker_encoder_init(SpeakerEncoderConfig::from(cfg, 2), 3);
  nn::ParamSet syn = synthesizer_init(SynthesizerConfig::from(cfg, cfg.encoder.embed_dim), 5);
  nn::ParamSet voc = vocoder_init(VocoderConfig::from(cfg), 7);

  std::vector<Waveform> refs = {load_wav(m.rows[0].wav_path), load_wav(m.rows[1].wav_path)};
  SynthesisOutput out = synthesize("123", refs, enc, syn, voc, cfg, SampleMode::kArgmax, 1);
  CHECK(out.token_count == 4);  // three digits + eos
  CHECK(out.wav.samples.size() == out.mel_frames * cfg.mel.hop_length);
  CHECK((out.stop_reason == "stop_token" || out.stop_reason == "max_steps"));

  SynthesisOutput again = synthesize("123", refs, enc, syn, voc, cfg, SampleMode::kArgmax, 99);
  CHECK(again.wav.samples == out.wav.samples);  // argmax mode ignores the sampling seed

  CHECK_THROWS_AS(synthesize("", refs, enc, syn, voc, cfg, SampleMode::kArgmax, 1), EmptyText);
}
