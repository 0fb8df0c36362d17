#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "vox/pipeline.hpp"
#include "vox/speaker_encoder.hpp"
#include "vox/synthesizer.hpp"

using namespace vox;
using ad::Tape;
using ad::Var;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

SynthesizerConfig tiny_synth() {
  SynthesizerConfig cfg;
  cfg.n_mels = 6;
  cfg.speaker_embed_dim = 4;
  cfg.embed_dim = 8;
  cfg.prenet1 = 8;
  cfg.prenet2 = 6;
  cfg.bank_k = 3;
  cfg.bank_channels = 6;
  cfg.highway_layers = 2;
  cfg.gru_hidden = 5;
  cfg.attention_dim = 7;
  cfg.decoder_hidden = 9;
  cfg.reduction = 2;
  cfg.max_decoder_steps = 10;
  return cfg;
}

Tensor unit_embedding(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Tensor e({1, dim});
  double norm = 0.0;
  for (auto& v : e.v) {
    v = rng.uniform(-1.0, 1.0);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : e.v) v /= norm;
  return e;
}

}  // namespace

TEST_CASE("tokenize maps printable ascii with pad and eos reserved") {
  TokenSequence t = tokenize("A b!");
  REQUIRE(t.ids.size() == 5);
  CHECK(t.ids[0] == 'A' - 32 + 2);
  CHECK(t.ids[1] == ' ' - 32 + 2);
  CHECK(t.ids[2] == 'b' - 32 + 2);
  CHECK(t.ids[3] == '!' - 32 + 2);
  CHECK(t.ids[4] == kEosToken);
  CHECK(kPadToken == 0);
  CHECK(kEosToken == 1);

  CHECK_THROWS_AS(tokenize("caf\xc3\xa9"), ParseError);
  CHECK_THROWS_AS(tokenize("tab\there"), ParseError);
}

TEST_CASE("encode_text length and conditioning contracts") {
  SynthesizerConfig cfg = tiny_synth();
  nn::ParamSet params = synthesizer_init(cfg, 3);

  TokenSequence tokens = tokenize("hello,"); // 6 chars + eos
  REQUIRE(tokens.ids.size() == 7);
  Tensor memory = encode_text(tokens, unit_embedding(cfg.speaker_embed_dim, 1), params, cfg);
  CHECK(memory.rows() == 7);
  CHECK(memory.cols() == cfg.memory_dim());

  // the broadcast speaker embedding occupies the trailing columns
  Tensor e = unit_embedding(cfg.speaker_embed_dim, 1);
  for (std::size_t r = 0; r < memory.rows(); ++r)
    for (std::size_t c = 0; c < cfg.speaker_embed_dim; ++c)
      CHECK(memory.at(r, 2 * cfg.gru_hidden + c) == doctest::Approx(e.v[c]).epsilon(1e-12));

  Tensor different = encode_text(tokens, unit_embedding(cfg.speaker_embed_dim, 2), params, cfg);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < memory.v.size(); ++i)
    max_diff = std::max(max_diff, std::abs(memory.v[i] - different.v[i]));
  CHECK(max_diff > 0.0);

  Tensor zero({1, cfg.speaker_embed_dim});
  CHECK_THROWS_AS(encode_text(tokens, zero, params, cfg), ShapeMismatch);
  CHECK_THROWS_AS(encode_text(TokenSequence{}, e, params, cfg), EmptyTokens);
}

TEST_CASE("attention_step degenerate and symmetric cases") {
  SynthesizerConfig cfg = tiny_synth();
  nn::ParamSet params = synthesizer_init(cfg, 5);
  Tape t;
  auto leaves = nn::make_leaves(t, params);
  Rng rng(7);

  Tensor one_row({1, cfg.memory_dim()});
  for (auto& v : one_row.v) v = rng.uniform(-1.0, 1.0);
  auto query = t.leaf(Tensor({1, cfg.decoder_hidden}));
  auto [ctx, w] = attention_step(t, leaves, query, t.leaf(one_row));
  CHECK(w->val.v.size() == 1);
  CHECK(w->val.v[0] == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t c = 0; c < cfg.memory_dim(); ++c)
    CHECK(ctx->val.v[c] == doctest::Approx(one_row.v[c]).epsilon(1e-12));

  Tensor repeated({4, cfg.memory_dim()});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < cfg.memory_dim(); ++c) repeated.at(r, c) = one_row.v[c];
  auto [ctx2, w2] = attention_step(t, leaves, query, t.leaf(repeated));
  for (double v : w2->val.v) CHECK(v == doctest::Approx(0.25).epsilon(1e-9));

  CHECK_THROWS_AS(attention_step(t, leaves, query, t.leaf(Tensor({0, cfg.memory_dim()}))),
                  EmptyMemory);
}

TEST_CASE("attention_step passes grad check") {
  SynthesizerConfig cfg = tiny_synth();
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    Rng rng(mix_seed(11, inst));
    Tensor query({1, cfg.decoder_hidden}), memory({5, cfg.memory_dim()});
    for (auto& v : query.v) v = rng.uniform(-1.0, 1.0);
    for (auto& v : memory.v) v = rng.uniform(-1.0, 1.0);
    nn::ParamSet params = synthesizer_init(cfg, mix_seed(13, inst));
    Tensor proj({1, cfg.memory_dim()});
    for (auto& v : proj.v) v = rng.uniform(0.5, 1.5);
    worst = std::max(
        worst, ad::grad_check(
                   [&](Tape& t, const std::vector<Var>& x) {
                     auto leaves = nn::make_leaves(t, params);
                     auto [ctx, w] = attention_step(t, leaves, x[0], x[1]);
                     Tensor target(ctx->val.shape);
                     for (auto& v : target.v) v = -100.0;
                     return ad::l1_loss(t, ad::mul(t, ctx, t.leaf(proj)), target);
                   },
                   {query, memory}, 1e-4));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("teacher-forced decode matches reduction arithmetic") {
  SynthesizerConfig cfg = tiny_synth();
  nn::ParamSet params = synthesizer_init(cfg, 17);
  Rng rng(19);

  Tensor memory({5, cfg.memory_dim()});
  for (auto& v : memory.v) v = rng.uniform(-1.0, 1.0);
  Tensor teacher({12, cfg.n_mels});
  for (auto& v : teacher.v) v = rng.uniform(-2.0, 0.0);

  Tape t;
  auto leaves = nn::make_leaves(t, params);
  Rng drop(23);
  DecodeVars dv = decode_teacher_forced(t, leaves, t.leaf(memory), teacher, cfg, drop);
  CHECK(dv.mel->val.rows() == 12);
  CHECK(dv.mel->val.cols() == cfg.n_mels);
  CHECK(dv.stop_logits->val.rows() == 6);
  REQUIRE(dv.attention_rows.size() == 6);
  for (const auto& row : dv.attention_rows) {
    double sum = 0.0;
    for (double v : row->val.v) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("inference decode honors the stop rule") {
  SynthesizerConfig cfg = tiny_synth();
  nn::ParamSet params = synthesizer_init(cfg, 29);
  Rng rng(31);
  Tensor memory({4, cfg.memory_dim()});
  for (auto& v : memory.v) v = rng.uniform(-1.0, 1.0);

  SynthesizerConfig eager = cfg;
  eager.stop_threshold = 1e-9;  // sigmoid of anything finite crosses this
  DecodeResult r1 = decode(memory, params, eager, 7);
  CHECK(r1.mel.rows() == cfg.reduction);
  CHECK_FALSE(r1.max_steps_exceeded);

  SynthesizerConfig never = cfg;
  never.stop_threshold = 0.999999;  // untrained logits sit near one half
  DecodeResult r2 = decode(memory, params, never, 7);
  CHECK(r2.mel.rows() == cfg.max_decoder_steps * cfg.reduction);
  CHECK(r2.max_steps_exceeded);
  for (std::size_t s = 0; s < r2.attention.weights.rows(); ++s) {
    double sum = 0.0;
    for (std::size_t c = 0; c < r2.attention.weights.cols(); ++c) {
      CHECK(r2.attention.weights.at(s, c) >= 0.0);
      sum += r2.attention.weights.at(s, c);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("periodic_mask voiced and unvoiced detection") {
  MelConfig mel;
  const std::size_t n = mel.frame_length + 10 * mel.hop_length;

  Waveform silence;
  silence.sample_rate = mel.sample_rate;
  silence.samples.assign(n, 0.0);
  const auto silent_mask = periodic_mask(silence, mel, 0.45);
  REQUIRE(silent_mask.size() == mel.frame_count(n));
  for (double v : silent_mask) CHECK(v == 0.0);

  Waveform tone;
  tone.sample_rate = mel.sample_rate;
  for (std::size_t i = 0; i < n; ++i)
    tone.samples.push_back(0.5 * std::sin(2.0 * std::numbers::pi * 200.0 * i / mel.sample_rate));
  const auto voiced = periodic_mask(tone, mel, 0.45);
  for (double v : voiced) CHECK(v == 1.0);

  Rng rng(41);
  Waveform noise;
  noise.sample_rate = mel.sample_rate;
  for (std::size_t i = 0; i < n; ++i) noise.samples.push_back(rng.uniform(-0.5, 0.5));
  const auto noisy = periodic_mask(noise, mel, 0.45);
  double frac = 0.0;
  for (double v : noisy) frac += v;
  CHECK(frac / static_cast<double>(noisy.size()) < 0.2);

  Waveform shorty;
  shorty.sample_rate = mel.sample_rate;
  shorty.samples.assign(mel.frame_length - 1, 0.1);
  CHECK_THROWS_AS(periodic_mask(shorty, mel, 0.45), TooShort);
}

TEST_CASE("synthesis_loss identities") {
  Rng rng(43);
  Tensor target({4, 3});
  for (auto& v : target.v) v = rng.uniform(-2.0, 0.0);
  Tensor stop_targets({2, 1});
  stop_targets.v = {0.0, 1.0};
  const std::vector<double> ones(4, 1.0), zeros(4, 0.0);

  Tape t;
  auto pred_eq = t.leaf(target);
  auto stop_logits = t.leaf(Tensor({2, 1}));
  auto l_eq = synthesis_loss(t, pred_eq, target, ones, 1.0, stop_logits, stop_targets);
  CHECK(l_eq.l_synthesis->val.v[0] == 0.0);
  CHECK(l_eq.l_cyc->val.v[0] == 0.0);

  Tensor off = target;
  for (auto& v : off.v) v += 0.5;
  auto pred_off = t.leaf(off);
  auto l_off = synthesis_loss(t, pred_off, target, ones, 1.0, stop_logits, stop_targets);
  CHECK(l_off.l_synthesis->val.v[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(l_off.l_cyc->val.v[0] == doctest::Approx(0.5).epsilon(1e-12));

  auto l_masked = synthesis_loss(t, pred_off, target, zeros, 1.0, stop_logits, stop_targets);
  CHECK(l_masked.l_cyc->val.v[0] == 0.0);

  // lambda = 0: cyc still reported, excluded from the total
  auto l_z = synthesis_loss(t, pred_off, target, ones, 0.0, stop_logits, stop_targets);
  CHECK(l_z.l_cyc->val.v[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(l_z.total->val.v[0] - l_z.l_stop->val.v[0] - l_z.l_synthesis->val.v[0]) < 1e-12);
}

TEST_CASE("synthesis_loss passes grad check") {
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    Rng rng(mix_seed(47, inst));
    Tensor target({4, 3}), pred({4, 3}), stop_t({2, 1});
    for (auto& v : target.v) v = rng.uniform(-2.0, -1.0);
    for (auto& v : pred.v) v = rng.uniform(0.0, 1.0);  // no ties with target
    Tensor stop_logits({2, 1});
    for (auto& v : stop_logits.v) v = rng.uniform(-1.0, 1.0);
    stop_t.v = {0.0, 1.0};
    std::vector<double> mask = {1.0, 0.0, 1.0, 1.0};
    worst = std::max(
        worst,
        ad::grad_check(
            [&](Tape& t, const std::vector<Var>& x) {
              return synthesis_loss(t, x[0], target, mask, 0.7, x[1], stop_t).total;
            },
            {pred, stop_logits}, 1e-5));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("train_synthesizer validates the speaker checkpoint") {
  const std::string dir = tmp_path("synth_toy_a");
  std::filesystem::remove_all(dir);
  Manifest m = generate_toy_corpus(dir, 2, 2, 11);

  RunConfig cfg;
  cfg.encoder.lstm_hidden = 8;
  cfg.encoder.fc1_dim = 16;
  cfg.encoder.embed_dim = 8;
  SpeakerEncoderConfig bad = SpeakerEncoderConfig::from(cfg, 2);
  bad.n_mels = 13;  // disagrees with cfg.mel.n_mels
  nn::ParamSet enc = speaker_encoder_init(bad, 3);
  CHECK_THROWS_AS(train_synthesizer(m, enc, cfg), CheckpointIncompatible);
}

TEST_CASE("train_synthesizer reduces loss on a tiny overfit set") {
  const std::string dir = tmp_path("synth_toy_b");
  std::filesystem::remove_all(dir);
  Manifest m = generate_toy_corpus(dir, 2, 1, 13);
  m.rows.resize(1);

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
  cfg.synth.steps = 40;
  cfg.synth.lr = 3e-3;

  nn::ParamSet enc = speaker_encoder_init(SpeakerEncoderConfig::from(cfg, 2), 3);
  auto result = train_synthesizer(m, enc, cfg);
  REQUIRE(result.log.size() == 40);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 5; ++i) {
    early += result.log[static_cast<std::size_t>(i)].total;
    late += result.log[result.log.size() - 1 - static_cast<std::size_t>(i)].total;
  }
  CHECK(late < early);
}
