#include "vox/speaker_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vox/augment.hpp"

namespace vox {

namespace {

using ad::Tape;
using ad::Var;

nn::Cell make_lstm_dir(Tape& tape, const nn::Leaves& leaves, const std::string& prefix,
                       std::size_t batch, std::size_t hidden) {
  auto w = leaves.at(prefix + ".W");
  auto b = leaves.at(prefix + ".b");
  auto state = std::make_shared<std::pair<Var, Var>>(tape.leaf(Tensor({batch, hidden})),
                                                     tape.leaf(Tensor({batch, hidden})));
  return [state, w, b](Tape& t, const Var& x) {
    auto [h, c] = nn::lstm_cell(t, x, state->first, state->second, w, b);
    *state = {h, c};
    return h;
  };
}

}  // namespace

void SpeakerEncoderConfig::validate() const {
  if (n_mels == 0 || lstm_hidden == 0 || fc1_dim == 0 || embed_dim == 0)
    throw ShapeMismatch("speaker encoder dims must be positive");
  if (n_speakers < 2) throw InsufficientSpeakers("need at least 2 speakers");
}

SpeakerEncoderConfig SpeakerEncoderConfig::from(const RunConfig& cfg, std::size_t n_speakers) {
  SpeakerEncoderConfig e;
  e.n_mels = cfg.mel.n_mels;
  e.lstm_hidden = cfg.encoder.lstm_hidden;
  e.fc1_dim = cfg.encoder.fc1_dim;
  e.embed_dim = cfg.encoder.embed_dim;
  e.n_speakers = n_speakers;
  return e;
}

nn::ParamSet speaker_encoder_init(const SpeakerEncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  nn::ParamSet p;
  const std::size_t H = cfg.lstm_hidden;
  for (int layer = 0; layer < 2; ++layer) {
    const std::size_t in = layer == 0 ? cfg.n_mels : 2 * H;
    for (const char* dir : {"f", "b"}) {
      const std::string prefix = "enc.lstm" + std::to_string(layer) + "." + dir;
      p.add(prefix + ".W", nn::uniform_init({in + H, 4 * H}, in + H, rng));
      Tensor b({4 * H});
      for (std::size_t i = H; i < 2 * H; ++i) b.v[i] = 1.0;  // forget-gate bias
      p.add(prefix + ".b", std::move(b));
    }
  }
  p.add("enc.fc1.W", nn::uniform_init({2 * H, cfg.fc1_dim}, 2 * H, rng));
  p.add("enc.fc1.b", Tensor({cfg.fc1_dim}));
  p.add("enc.fc2.W", nn::uniform_init({cfg.fc1_dim, cfg.embed_dim}, cfg.fc1_dim, rng));
  p.add("enc.fc2.b", Tensor({cfg.embed_dim}));
  p.add("enc.cls.W", nn::uniform_init({cfg.embed_dim, cfg.n_speakers}, cfg.embed_dim, rng));
  p.add("enc.cls.b", Tensor({cfg.n_speakers}));
  return p;
}

void speaker_encoder_validate(const nn::ParamSet& params, const SpeakerEncoderConfig& cfg,
                              bool check_head) {
  const std::size_t H = cfg.lstm_hidden;
  params.expect("enc.lstm0.f.W", {cfg.n_mels + H, 4 * H});
  params.expect("enc.lstm1.f.W", {2 * H + H, 4 * H});
  params.expect("enc.fc1.W", {2 * H, cfg.fc1_dim});
  params.expect("enc.fc2.W", {cfg.fc1_dim, cfg.embed_dim});
  if (check_head) params.expect("enc.cls.W", {cfg.embed_dim, cfg.n_speakers});
}

SpeakerEncoderConfig speaker_encoder_config_of(const nn::ParamSet& params) {
  SpeakerEncoderConfig cfg;
  const Tensor& w0 = params.at("enc.lstm0.f.W");
  cfg.lstm_hidden = w0.shape[1] / 4;
  cfg.n_mels = w0.shape[0] - cfg.lstm_hidden;
  cfg.fc1_dim = params.at("enc.fc1.W").shape[1];
  cfg.embed_dim = params.at("enc.fc2.W").shape[1];
  cfg.n_speakers = params.at("enc.cls.W").shape[1];
  return cfg;
}

ad::Var speaker_embed_forward(Tape& t, const nn::Leaves& leaves,
                              const std::vector<Var>& mel_steps,
                              const SpeakerEncoderConfig& cfg) {
  if (mel_steps.empty()) throw EmptyInput("speaker encoder needs at least one frame");
  const std::size_t B = mel_steps[0]->val.rows();
  if (mel_steps[0]->val.cols() != cfg.n_mels)
    throw ShapeMismatch("mel dimension " + std::to_string(mel_steps[0]->val.cols()) +
                        " != n_mels " + std::to_string(cfg.n_mels));
  const std::size_t H = cfg.lstm_hidden;

  std::vector<Var> seq = mel_steps;
  for (int layer = 0; layer < 2; ++layer) {
    const std::string base = "enc.lstm" + std::to_string(layer);
    seq = nn::bidirectional_wrap(
        t, seq, [&] { return make_lstm_dir(t, leaves, base + ".f", B, H); },
        [&] { return make_lstm_dir(t, leaves, base + ".b", B, H); });
  }

  // mean pooling over time
  Var pooled = seq[0];
  for (std::size_t i = 1; i < seq.size(); ++i) pooled = ad::add(t, pooled, seq[i]);
  pooled = ad::scale(t, pooled, 1.0 / static_cast<double>(seq.size()));

  auto fc1 = ad::relu(t, nn::affine(t, pooled, leaves.at("enc.fc1.W"), leaves.at("enc.fc1.b")));
  auto fc2 = nn::affine(t, fc1, leaves.at("enc.fc2.W"), leaves.at("enc.fc2.b"));
  return ad::l2_normalize_rows(t, fc2);
}

ad::Var speaker_logits(Tape& t, const nn::Leaves& leaves, const Var& embedding) {
  return nn::affine(t, embedding, leaves.at("enc.cls.W"), leaves.at("enc.cls.b"));
}

ad::Var speaker_loss(Tape& t, const Var& logits, const std::vector<int>& targets) {
  if (logits->val.rows() != targets.size())
    throw ShapeMismatch("speaker_loss: one target per logit row");
  return ad::softmax_cross_entropy(t, logits, targets);
}

Tensor embed_utterance(const MelSpectrogram& mel, const nn::ParamSet& params,
                       const SpeakerEncoderConfig& cfg) {
  if (mel.frames() == 0) throw EmptyInput("mel spectrogram has no frames");
  speaker_encoder_validate(params, cfg, false);
  Tape tape;
  auto leaves = nn::make_leaves(tape, params);
  std::vector<Var> steps;
  steps.reserve(mel.frames());
  for (std::size_t f = 0; f < mel.frames(); ++f) {
    Tensor frame({1, cfg.n_mels});
    for (std::size_t m = 0; m < cfg.n_mels; ++m) frame.v[m] = mel.data.at(f, m);
    steps.push_back(tape.leaf(std::move(frame)));
  }
  auto emb = speaker_embed_forward(tape, leaves, steps, cfg);
  Tensor out({cfg.embed_dim});
  out.v = emb->val.v;
  return out;
}

Waveform splice_reference_audio(const std::vector<Waveform>& waveforms) {
  if (waveforms.empty()) throw EmptyList("no reference audio given");
  Waveform out;
  out.sample_rate = waveforms[0].sample_rate;
  for (const auto& w : waveforms) {
    if (w.sample_rate != out.sample_rate)
      throw SampleRateMismatch("reference audio sample rates differ");
    out.samples.insert(out.samples.end(), w.samples.begin(), w.samples.end());
  }
  return out;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeMismatch("cosine: size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a.v[i] * b.v[i];
    na += a.v[i] * a.v[i];
    nb += b.v[i] * b.v[i];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 0.0 ? dot / denom : 0.0;
}

EncoderTrainResult train_speaker_encoder(const Manifest& manifest, const RunConfig& cfg,
                                         std::optional<EncoderResume> resume) {
  const auto speakers = manifest.speaker_ids();
  if (speakers.size() < 2) throw InsufficientSpeakers("manifest has " +
                                                      std::to_string(speakers.size()) +
                                                      " speaker(s), need at least 2");
  std::map<std::string, int> spk_index;
  std::map<std::string, std::size_t> spk_count;
  for (std::size_t i = 0; i < speakers.size(); ++i) spk_index[speakers[i]] = static_cast<int>(i);
  for (const auto& r : manifest.rows) spk_count[r.speaker_id]++;
  for (const auto& [spk, count] : spk_count)
    if (count < 2) throw ManifestInvalid("speaker " + spk + " has fewer than 2 utterances");

  SpeakerEncoderConfig ecfg = SpeakerEncoderConfig::from(cfg, speakers.size());
  ecfg.validate();

  std::vector<Waveform> wavs;
  std::vector<int> labels;
  wavs.reserve(manifest.rows.size());
  for (const auto& r : manifest.rows) {
    wavs.push_back(load_wav(r.wav_path));
    labels.push_back(spk_index[r.speaker_id]);
  }

  AugmentSpec aug;
  const bool use_aug = cfg.encoder.augment;
  if (use_aug) {
    if (!cfg.augment.noise_pool.empty()) aug.noise_pool = load_pool(cfg.augment.noise_pool);
    if (!cfg.augment.rir_pool.empty()) aug.rir_pool = load_pool(cfg.augment.rir_pool);
    aug.snr_lo = cfg.augment.snr_lo;
    aug.snr_hi = cfg.augment.snr_hi;
    aug.speed_factors = cfg.speed_factor_list();
    aug.p_noise = cfg.augment.p_noise;
    aug.p_reverb = cfg.augment.p_reverb;
    aug.p_speed = cfg.augment.p_speed;
    aug.validate();
  }

  // Clean mels once; augmented mels are recomputed per draw.
  std::vector<MelSpectrogram> clean_mels;
  clean_mels.reserve(wavs.size());
  for (const auto& w : wavs) clean_mels.push_back(mel_spectrogram(w, cfg.mel));

  EncoderTrainResult result;
  if (resume) {
    result.params = std::move(resume->params);
    result.opt = std::move(resume->opt);
    speaker_encoder_validate(result.params, ecfg, true);
  } else {
    result.params = speaker_encoder_init(ecfg, cfg.train.seed);
  }
  result.speakers = speakers;
  const std::size_t start_step = resume ? resume->start_step : 0;

  nn::AdamConfig adam;
  adam.lr = cfg.encoder.lr;
  const std::size_t B = std::max<std::size_t>(1, cfg.encoder.batch_size);

  for (std::size_t step = start_step; step < cfg.encoder.steps; ++step) {
    Rng rng(mix_seed(cfg.train.seed, step));

    std::vector<std::size_t> picks(B);
    for (auto& p : picks) p = rng.index(wavs.size());

    std::vector<MelSpectrogram> batch_mels;
    batch_mels.reserve(B);
    for (auto p : picks) {
      if (use_aug) {
        auto [aw, rec] = augment(wavs[p], aug, rng);
        batch_mels.push_back(mel_spectrogram(aw, cfg.mel));
      } else {
        batch_mels.push_back(clean_mels[p]);
      }
    }

    std::size_t crop = cfg.encoder.crop_frames;
    for (const auto& m : batch_mels) crop = std::min(crop, m.frames());
    if (crop == 0) throw ManifestInvalid("an utterance produced no mel frames");
    std::vector<std::size_t> starts(B);
    for (std::size_t i = 0; i < B; ++i)
      starts[i] = rng.index(batch_mels[i].frames() - crop + 1);

    Tape tape;
    auto leaves = nn::make_leaves(tape, result.params);
    std::vector<Var> steps_in;
    steps_in.reserve(crop);
    for (std::size_t f = 0; f < crop; ++f) {
      Tensor frame({B, ecfg.n_mels});
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t m = 0; m < ecfg.n_mels; ++m)
          frame.at(i, m) = batch_mels[i].data.at(starts[i] + f, m);
      steps_in.push_back(tape.leaf(std::move(frame)));
    }

    auto emb = speaker_embed_forward(tape, leaves, steps_in, ecfg);
    auto logits = speaker_logits(tape, leaves, emb);
    std::vector<int> targets(B);
    for (std::size_t i = 0; i < B; ++i) targets[i] = labels[picks[i]];
    auto loss = speaker_loss(tape, logits, targets);
    tape.backward(loss);
    nn::adam_step(result.params, nn::collect_grads(leaves), result.opt, adam);

    std::size_t correct = 0;
    const std::size_t C = logits->val.cols();
    for (std::size_t i = 0; i < B; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < C; ++c)
        if (logits->val.at(i, c) > logits->val.at(i, best)) best = c;
      if (static_cast<int>(best) == targets[i]) ++correct;
    }
    result.log.push_back({step, loss->val.v[0], static_cast<double>(correct) / B});
  }

  // Full-set accuracy, no crop, no augmentation.
  std::size_t correct = 0;
  for (std::size_t u = 0; u < clean_mels.size(); ++u) {
    Tape tape;
    auto leaves = nn::make_leaves(tape, result.params);
    std::vector<Var> steps_in;
    for (std::size_t f = 0; f < clean_mels[u].frames(); ++f) {
      Tensor frame({1, ecfg.n_mels});
      for (std::size_t m = 0; m < ecfg.n_mels; ++m) frame.v[m] = clean_mels[u].data.at(f, m);
      steps_in.push_back(tape.leaf(std::move(frame)));
    }
    auto emb = speaker_embed_forward(tape, leaves, steps_in, ecfg);
    auto logits = speaker_logits(tape, leaves, emb);
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits->val.cols(); ++c)
      if (logits->val.v[c] > logits->val.v[best]) best = c;
    if (static_cast<int>(best) == labels[u]) ++correct;
  }
  result.final_accuracy =
      clean_mels.empty() ? 0.0 : static_cast<double>(correct) / clean_mels.size();
  return result;
}

}  // namespace vox
