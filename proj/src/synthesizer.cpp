#include "vox/synthesizer.hpp"

#include <algorithm>
#include <cmath>

#include "vox/speaker_encoder.hpp"

namespace vox {

namespace {

using ad::Tape;
using ad::Var;

void check_unit_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  if (std::abs(std::sqrt(s) - 1.0) > 1e-3)
    throw ShapeMismatch("speaker embedding must be unit norm");
}

nn::Cell make_gru_dir(Tape& tape, const nn::Leaves& leaves, const std::string& prefix,
                      std::size_t batch, std::size_t hidden) {
  auto wx = leaves.at(prefix + ".Wx");
  auto bx = leaves.at(prefix + ".bx");
  auto wh = leaves.at(prefix + ".Wh");
  auto un = leaves.at(prefix + ".Un");
  auto state = std::make_shared<Var>(tape.leaf(Tensor({batch, hidden})));
  return [state, wx, bx, wh, un](Tape& t, const Var& x) {
    *state = nn::gru_cell(t, x, *state, wx, bx, wh, un);
    return *state;
  };
}

Var prenet(Tape& t, const nn::Leaves& leaves, const Var& x, const std::string& w1,
           const std::string& w2, bool use_dropout, double keep, Rng* rng) {
  auto h = ad::relu(t, nn::affine(t, x, leaves.at(w1 + ".W"), leaves.at(w1 + ".b")));
  if (use_dropout) h = ad::dropout(t, h, keep, *rng);
  h = ad::relu(t, nn::affine(t, h, leaves.at(w2 + ".W"), leaves.at(w2 + ".b")));
  if (use_dropout) h = ad::dropout(t, h, keep, *rng);
  return h;
}

struct DecoderStep {
  Var mel_frames;  // r x n_mels
  Var stop_logit;  // 1 x 1
  Var weights;     // 1 x L
};

DecoderStep decoder_step(Tape& t, const nn::Leaves& leaves, const Var& memory,
                         const Var& prev_frame, Var& h, Var& c, const SynthesizerConfig& cfg,
                         Rng& dropout_rng) {
  // Decoder prenet dropout stays active at inference as well.
  auto pre = prenet(t, leaves, prev_frame, "syn.dpre1", "syn.dpre2", true, cfg.dropout_keep,
                    &dropout_rng);
  auto [context, weights] = attention_step(t, leaves, h, memory);
  auto x = ad::concat_cols(t, pre, context);
  auto hc = nn::lstm_cell(t, x, h, c, leaves.at("syn.dec.W"), leaves.at("syn.dec.b"));
  h = hc.first;
  c = hc.second;
  auto out = nn::affine(t, h, leaves.at("syn.out.W"), leaves.at("syn.out.b"));
  DecoderStep step;
  step.mel_frames = ad::reshape(t, ad::slice_cols(t, out, 0, cfg.reduction * cfg.n_mels),
                                {cfg.reduction, cfg.n_mels});
  step.stop_logit = ad::slice_cols(t, out, cfg.reduction * cfg.n_mels, 1);
  step.weights = weights;
  return step;
}

}  // namespace

TokenSequence tokenize(const std::string& text) {
  TokenSequence seq;
  for (unsigned char ch : text) {
    if (ch < 32 || ch > 126)
      throw ParseError("unsupported character code " + std::to_string(ch) + " in text");
    seq.ids.push_back(static_cast<int>(ch) - 32 + 2);
  }
  seq.ids.push_back(kEosToken);
  return seq;
}

void SynthesizerConfig::validate() const {
  if (reduction < 1) throw ShapeMismatch("reduction factor must be >= 1");
  if (max_decoder_steps < 1) throw ShapeMismatch("max_decoder_steps must be >= 1");
  if (!(stop_threshold > 0.0 && stop_threshold < 1.0) && stop_threshold != 0.0)
    throw ShapeMismatch("stop_threshold must be in [0, 1)");
  if (dropout_keep <= 0.0 || dropout_keep > 1.0)
    throw ShapeMismatch("dropout_keep must be in (0, 1]");
  if (bank_k < 1 || bank_channels == 0 || gru_hidden == 0 || attention_dim == 0 ||
      decoder_hidden == 0 || prenet1 == 0 || prenet2 == 0 || embed_dim == 0)
    throw ShapeMismatch("synthesizer dims must be positive");
}

SynthesizerConfig SynthesizerConfig::from(const RunConfig& cfg, std::size_t speaker_embed_dim) {
  SynthesizerConfig s;
  s.n_mels = cfg.mel.n_mels;
  s.speaker_embed_dim = speaker_embed_dim;
  s.embed_dim = cfg.synth.embed_dim;
  s.prenet1 = cfg.synth.prenet1;
  s.prenet2 = cfg.synth.prenet2;
  s.bank_k = cfg.synth.bank_k;
  s.bank_channels = cfg.synth.bank_channels;
  s.highway_layers = cfg.synth.highway_layers;
  s.gru_hidden = cfg.synth.gru_hidden;
  s.attention_dim = cfg.synth.attention_dim;
  s.decoder_hidden = cfg.synth.decoder_hidden;
  s.reduction = cfg.synth.reduction;
  s.max_decoder_steps = cfg.synth.max_decoder_steps;
  s.stop_threshold = cfg.synth.stop_threshold;
  s.cyc_weight = cfg.synth.cyc_weight;
  s.dropout_keep = cfg.synth.dropout_keep;
  return s;
}

nn::ParamSet synthesizer_init(const SynthesizerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  nn::ParamSet p;
  const std::size_t P2 = cfg.prenet2, G = cfg.gru_hidden, M = cfg.memory_dim();

  p.add("syn.embed", nn::uniform_init({cfg.vocab_size, cfg.embed_dim}, cfg.embed_dim, rng));
  p.add("syn.prenet1.W", nn::uniform_init({cfg.embed_dim, cfg.prenet1}, cfg.embed_dim, rng));
  p.add("syn.prenet1.b", Tensor({cfg.prenet1}));
  p.add("syn.prenet2.W", nn::uniform_init({cfg.prenet1, P2}, cfg.prenet1, rng));
  p.add("syn.prenet2.b", Tensor({P2}));

  for (std::size_t k = 1; k <= cfg.bank_k; ++k) {
    p.add("syn.bank" + std::to_string(k) + ".w",
          nn::uniform_init({k, P2, cfg.bank_channels}, k * P2, rng));
    p.add("syn.bank" + std::to_string(k) + ".b", Tensor({cfg.bank_channels}));
  }
  p.add("syn.proj1.w", nn::uniform_init({3, cfg.bank_k * cfg.bank_channels, P2},
                                        3 * cfg.bank_k * cfg.bank_channels, rng));
  p.add("syn.proj1.b", Tensor({P2}));
  p.add("syn.proj2.w", nn::uniform_init({3, P2, P2}, 3 * P2, rng));
  p.add("syn.proj2.b", Tensor({P2}));

  for (std::size_t h = 0; h < cfg.highway_layers; ++h) {
    const std::string base = "syn.hw" + std::to_string(h);
    p.add(base + ".H.W", nn::uniform_init({P2, P2}, P2, rng));
    p.add(base + ".H.b", Tensor({P2}));
    p.add(base + ".T.W", nn::uniform_init({P2, P2}, P2, rng));
    p.add(base + ".T.b", Tensor({P2}));
  }

  for (const char* dir : {"f", "b"}) {
    const std::string base = std::string("syn.gru.") + dir;
    p.add(base + ".Wx", nn::uniform_init({P2, 3 * G}, P2, rng));
    p.add(base + ".bx", Tensor({3 * G}));
    p.add(base + ".Wh", nn::uniform_init({G, 2 * G}, G, rng));
    p.add(base + ".Un", nn::uniform_init({G, G}, G, rng));
  }

  p.add("syn.att.Wq", nn::uniform_init({cfg.decoder_hidden, cfg.attention_dim},
                                       cfg.decoder_hidden, rng));
  p.add("syn.att.Wm", nn::uniform_init({M, cfg.attention_dim}, M, rng));
  p.add("syn.att.b", Tensor({cfg.attention_dim}));
  p.add("syn.att.v", nn::uniform_init({cfg.attention_dim, 1}, cfg.attention_dim, rng));

  p.add("syn.dpre1.W", nn::uniform_init({cfg.n_mels, cfg.prenet1}, cfg.n_mels, rng));
  p.add("syn.dpre1.b", Tensor({cfg.prenet1}));
  p.add("syn.dpre2.W", nn::uniform_init({cfg.prenet1, P2}, cfg.prenet1, rng));
  p.add("syn.dpre2.b", Tensor({P2}));

  const std::size_t dec_in = P2 + M;
  p.add("syn.dec.W",
        nn::uniform_init({dec_in + cfg.decoder_hidden, 4 * cfg.decoder_hidden}, dec_in + cfg.decoder_hidden, rng));
  Tensor db({4 * cfg.decoder_hidden});
  for (std::size_t i = cfg.decoder_hidden; i < 2 * cfg.decoder_hidden; ++i) db.v[i] = 1.0;
  p.add("syn.dec.b", std::move(db));

  p.add("syn.out.W", nn::uniform_init({cfg.decoder_hidden, cfg.reduction * cfg.n_mels + 1},
                                      cfg.decoder_hidden, rng));
  p.add("syn.out.b", Tensor({cfg.reduction * cfg.n_mels + 1}));
  return p;
}

void synthesizer_validate(const nn::ParamSet& params, const SynthesizerConfig& cfg) {
  const std::size_t P2 = cfg.prenet2, M = cfg.memory_dim();
  params.expect("syn.embed", {cfg.vocab_size, cfg.embed_dim});
  params.expect("syn.prenet2.W", {cfg.prenet1, P2});
  params.expect("syn.bank" + std::to_string(cfg.bank_k) + ".w",
                {cfg.bank_k, P2, cfg.bank_channels});
  params.expect("syn.gru.f.Wx", {P2, 3 * cfg.gru_hidden});
  params.expect("syn.att.Wm", {M, cfg.attention_dim});
  params.expect("syn.att.Wq", {cfg.decoder_hidden, cfg.attention_dim});
  params.expect("syn.dec.W", {P2 + M + cfg.decoder_hidden, 4 * cfg.decoder_hidden});
  params.expect("syn.out.W", {cfg.decoder_hidden, cfg.reduction * cfg.n_mels + 1});
}

ad::Var encode_text_forward(Tape& t, const nn::Leaves& leaves, const TokenSequence& tokens,
                            const Var& speaker_embedding, const SynthesizerConfig& cfg,
                            bool train, Rng* dropout_rng) {
  if (tokens.ids.empty()) throw EmptyTokens("no tokens to encode");
  check_unit_norm(speaker_embedding->val.v);
  if (speaker_embedding->val.size() != cfg.speaker_embed_dim)
    throw ShapeMismatch("speaker embedding dim mismatch");
  const std::size_t L = tokens.ids.size();

  auto x = ad::embedding_lookup(t, leaves.at("syn.embed"), tokens.ids);
  auto pre = prenet(t, leaves, x, "syn.prenet1", "syn.prenet2", train, cfg.dropout_keep,
                    dropout_rng);

  std::vector<Var> bank_outs;
  for (std::size_t k = 1; k <= cfg.bank_k; ++k) {
    const std::string base = "syn.bank" + std::to_string(k);
    bank_outs.push_back(
        ad::relu(t, ad::conv1d(t, pre, leaves.at(base + ".w"), leaves.at(base + ".b"))));
  }
  Var bank = bank_outs[0];
  for (std::size_t i = 1; i < bank_outs.size(); ++i) bank = ad::concat_cols(t, bank, bank_outs[i]);
  bank = ad::maxpool1d(t, bank);

  auto proj = ad::relu(t, ad::conv1d(t, bank, leaves.at("syn.proj1.w"), leaves.at("syn.proj1.b")));
  proj = ad::conv1d(t, proj, leaves.at("syn.proj2.w"), leaves.at("syn.proj2.b"));
  auto res = ad::add(t, proj, pre);

  for (std::size_t h = 0; h < cfg.highway_layers; ++h) {
    const std::string base = "syn.hw" + std::to_string(h);
    res = nn::highway(t, res, leaves.at(base + ".H.W"), leaves.at(base + ".H.b"),
                      leaves.at(base + ".T.W"), leaves.at(base + ".T.b"));
  }

  std::vector<Var> seq;
  seq.reserve(L);
  for (std::size_t i = 0; i < L; ++i) seq.push_back(ad::row(t, res, i));
  auto gru_out = nn::bidirectional_wrap(
      t, seq, [&] { return make_gru_dir(t, leaves, "syn.gru.f", 1, cfg.gru_hidden); },
      [&] { return make_gru_dir(t, leaves, "syn.gru.b", 1, cfg.gru_hidden); });
  auto rnn = ad::concat_rows(t, gru_out);  // L x 2G

  // broadcast the speaker embedding onto every frame
  auto ones = t.leaf(Tensor({L, 1}, std::vector<double>(L, 1.0)));
  auto emb_row = ad::reshape(t, speaker_embedding, {1, cfg.speaker_embed_dim});
  auto spk = ad::matmul(t, ones, emb_row);
  return ad::concat_cols(t, rnn, spk);
}

Tensor encode_text(const TokenSequence& tokens, const Tensor& speaker_embedding,
                   const nn::ParamSet& params, const SynthesizerConfig& cfg) {
  Tape tape;
  auto leaves = nn::make_leaves(tape, params);
  auto emb = tape.leaf(speaker_embedding);
  auto mem = encode_text_forward(tape, leaves, tokens, emb, cfg, false, nullptr);
  return mem->val;
}

std::pair<ad::Var, ad::Var> attention_step(Tape& t, const nn::Leaves& leaves, const Var& query,
                                           const Var& memory) {
  if (memory->val.rows() == 0) throw EmptyMemory("attention over empty memory");
  auto proj_m = ad::matmul(t, memory, leaves.at("syn.att.Wm"));
  auto proj_q = nn::affine(t, query, leaves.at("syn.att.Wq"), leaves.at("syn.att.b"));
  auto energy = ad::tanh_op(t, ad::add_rowwise(t, proj_m, ad::reshape(t, proj_q, {proj_q->val.size()})));
  auto scores = ad::matmul(t, energy, leaves.at("syn.att.v"));  // L x 1
  auto weights = ad::softmax_rows(t, ad::transpose(t, scores)); // 1 x L
  auto context = ad::matmul(t, weights, memory);
  return {context, weights};
}

DecodeVars decode_teacher_forced(Tape& t, const nn::Leaves& leaves, const Var& memory,
                                 const Tensor& teacher_mel, const SynthesizerConfig& cfg,
                                 Rng& dropout_rng) {
  if (teacher_mel.rows() == 0) throw EmptyInput("teacher mel has no frames");
  if (teacher_mel.cols() != cfg.n_mels) throw ShapeMismatch("teacher mel dim mismatch");
  const std::size_t r = cfg.reduction;
  const std::size_t padded = (teacher_mel.rows() + r - 1) / r * r;

  Tensor teacher({padded, cfg.n_mels});
  for (std::size_t f = 0; f < padded; ++f) {
    const std::size_t src = std::min(f, teacher_mel.rows() - 1);  // repeat last frame
    for (std::size_t m = 0; m < cfg.n_mels; ++m) teacher.at(f, m) = teacher_mel.at(src, m);
  }

  const std::size_t S = padded / r;
  Var h = t.leaf(Tensor({1, cfg.decoder_hidden}));
  Var c = t.leaf(Tensor({1, cfg.decoder_hidden}));
  std::vector<Var> frames, stops, att;
  frames.reserve(S);
  for (std::size_t s = 0; s < S; ++s) {
    Tensor prev({1, cfg.n_mels});
    if (s > 0)
      for (std::size_t m = 0; m < cfg.n_mels; ++m) prev.v[m] = teacher.at(s * r - 1, m);
    auto step = decoder_step(t, leaves, memory, t.leaf(std::move(prev)), h, c, cfg, dropout_rng);
    frames.push_back(step.mel_frames);
    stops.push_back(step.stop_logit);
    att.push_back(step.weights);
  }

  DecodeVars out;
  out.mel = ad::concat_rows(t, frames);
  out.stop_logits = ad::concat_rows(t, stops);
  out.attention_rows = std::move(att);
  return out;
}

DecodeResult decode(const Tensor& memory, const nn::ParamSet& params, const SynthesizerConfig& cfg,
                    std::uint64_t prenet_dropout_seed) {
  if (memory.rows() == 0) throw EmptyMemory("cannot decode from empty memory");
  if (memory.cols() != cfg.memory_dim()) throw ShapeMismatch("memory dim mismatch");
  synthesizer_validate(params, cfg);

  Tape tape;
  auto leaves = nn::make_leaves(tape, params);
  auto mem = tape.leaf(memory);
  Rng rng(prenet_dropout_seed);

  Var h = tape.leaf(Tensor({1, cfg.decoder_hidden}));
  Var c = tape.leaf(Tensor({1, cfg.decoder_hidden}));
  std::vector<Var> frames, stops, att;
  Var prev = tape.leaf(Tensor({1, cfg.n_mels}));  // all-zero "go" frame
  bool stopped = false;
  for (std::size_t s = 0; s < cfg.max_decoder_steps; ++s) {
    auto step = decoder_step(tape, leaves, mem, prev, h, c, cfg, rng);
    frames.push_back(step.mel_frames);
    stops.push_back(step.stop_logit);
    att.push_back(step.weights);
    const double z = step.stop_logit->val.v[0];
    const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    if (p > cfg.stop_threshold) {
      stopped = true;
      break;
    }
    prev = ad::row(tape, step.mel_frames, cfg.reduction - 1);
  }

  DecodeResult out;
  const std::size_t S = frames.size(), L = memory.rows();
  out.mel = Tensor({S * cfg.reduction, cfg.n_mels});
  out.stop_logits = Tensor({S});
  out.attention.weights = Tensor({S, L});
  for (std::size_t s = 0; s < S; ++s) {
    std::copy(frames[s]->val.v.begin(), frames[s]->val.v.end(),
              out.mel.v.begin() + static_cast<long>(s * cfg.reduction * cfg.n_mels));
    out.stop_logits.v[s] = stops[s]->val.v[0];
    std::copy(att[s]->val.v.begin(), att[s]->val.v.end(),
              out.attention.weights.v.begin() + static_cast<long>(s * L));
  }
  out.max_steps_exceeded = !stopped;
  return out;
}

std::vector<double> periodic_mask(const Waveform& w, const MelConfig& mel_cfg,
                                  double voicing_threshold) {
  if (w.samples.size() < mel_cfg.frame_length)
    throw TooShort("waveform shorter than one analysis frame");
  const std::size_t n_frames = mel_cfg.frame_count(w.samples.size());
  const std::size_t lag_min = static_cast<std::size_t>(w.sample_rate * 0.0025);
  const std::size_t lag_max =
      std::min(static_cast<std::size_t>(w.sample_rate * 0.0125), mel_cfg.frame_length - 1);

  std::vector<double> mask(n_frames, 0.0);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const double* x = w.samples.data() + f * mel_cfg.hop_length;
    const std::size_t N = mel_cfg.frame_length;
    double best = 0.0;
    for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
      double num = 0.0, e0 = 0.0, e1 = 0.0;
      for (std::size_t n = 0; n + lag < N; ++n) {
        num += x[n] * x[n + lag];
        e0 += x[n] * x[n];
        e1 += x[n + lag] * x[n + lag];
      }
      const double denom = std::sqrt(e0 * e1);
      if (denom > 1e-12) best = std::max(best, num / denom);
    }
    mask[f] = best >= voicing_threshold ? 1.0 : 0.0;
  }
  return mask;
}

SynthesisLossVars synthesis_loss(Tape& t, const Var& mel_predict, const Tensor& mel_target,
                                 const std::vector<double>& mask, double cyc_weight,
                                 const Var& stop_logits, const Tensor& stop_targets) {
  if (!mel_predict->val.same_shape(mel_target))
    throw ShapeMismatch("predicted and target mel shapes differ");
  if (mask.size() != mel_target.rows())
    throw ShapeMismatch("mask length must equal mel frame count");

  SynthesisLossVars out;
  out.l_synthesis = ad::l1_loss(t, mel_predict, mel_target);
  out.l_cyc = ad::masked_l1_loss(t, mel_predict, mel_target, mask);
  out.l_stop = ad::bce_with_logits(t, stop_logits, stop_targets);
  out.total = ad::add(t, out.l_synthesis, out.l_stop);
  if (cyc_weight != 0.0)
    out.total = ad::add(t, out.total, ad::scale(t, out.l_cyc, cyc_weight));
  return out;
}

SynthTrainResult train_synthesizer(const Manifest& manifest, const nn::ParamSet& encoder_params,
                                   const RunConfig& cfg) {
  if (manifest.rows.empty()) throw ManifestInvalid("empty manifest");

  SpeakerEncoderConfig ecfg = speaker_encoder_config_of(encoder_params);
  if (ecfg.embed_dim != cfg.encoder.embed_dim || ecfg.n_mels != cfg.mel.n_mels)
    throw CheckpointIncompatible("speaker encoder checkpoint does not match configuration");

  SynthesizerConfig scfg = SynthesizerConfig::from(cfg, ecfg.embed_dim);
  scfg.validate();

  struct Item {
    TokenSequence tokens;
    Tensor mel;
    std::vector<double> mask;
    Tensor stop_targets;
    Tensor embedding;
  };
  std::vector<Item> items;
  items.reserve(manifest.rows.size());
  for (const auto& r : manifest.rows) {
    Item it;
    it.tokens = tokenize(r.text);
    Waveform w = load_wav(r.wav_path);
    MelSpectrogram mel = mel_spectrogram(w, cfg.mel);
    it.mel = mel.data;
    it.mask = periodic_mask(w, cfg.mel, cfg.synth.voicing_threshold);
    const std::size_t r_ = scfg.reduction;
    const std::size_t S = (it.mel.rows() + r_ - 1) / r_;
    it.mask.resize(S * r_, 0.0);  // padded frames carry no cyc weight
    it.stop_targets = Tensor({S, 1});
    it.stop_targets.v[S - 1] = 1.0;
    it.embedding = embed_utterance(mel, encoder_params, ecfg);
    items.push_back(std::move(it));
  }

  SynthTrainResult result;
  result.params = synthesizer_init(scfg, cfg.train.seed + 1);
  nn::AdamConfig adam;
  adam.lr = cfg.synth.lr;

  for (std::size_t step = 0; step < cfg.synth.steps; ++step) {
    Rng rng(mix_seed(cfg.train.seed + 1, step));
    const Item& it = items[rng.index(items.size())];

    // pad target like the decoder does
    const std::size_t r_ = scfg.reduction;
    const std::size_t padded = (it.mel.rows() + r_ - 1) / r_ * r_;
    Tensor target({padded, scfg.n_mels});
    for (std::size_t f = 0; f < padded; ++f) {
      const std::size_t src = std::min(f, it.mel.rows() - 1);
      for (std::size_t m = 0; m < scfg.n_mels; ++m) target.at(f, m) = it.mel.at(src, m);
    }

    Tape tape;
    auto leaves = nn::make_leaves(tape, result.params);
    auto emb = tape.leaf(it.embedding);
    auto memory = encode_text_forward(tape, leaves, it.tokens, emb, scfg, true, &rng);
    auto dec = decode_teacher_forced(tape, leaves, memory, it.mel, scfg, rng);
    auto loss = synthesis_loss(tape, dec.mel, target, it.mask, scfg.cyc_weight, dec.stop_logits,
                               it.stop_targets);
    tape.backward(loss.total);
    nn::adam_step(result.params, nn::collect_grads(leaves), result.opt, adam);

    result.log.push_back({step, loss.total->val.v[0], loss.l_synthesis->val.v[0],
                          loss.l_cyc->val.v[0], loss.l_stop->val.v[0]});
  }
  return result;
}

}  // namespace vox
