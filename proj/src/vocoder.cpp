#include "vox/vocoder.hpp"

#include <algorithm>
#include <cmath>

namespace vox {

namespace {

using ad::Tape;
using ad::Var;

// Raw-math helpers for the sequential inference path.
void matvec_add(const Tensor& w, const std::vector<double>& x, std::vector<double>& out) {
  const std::size_t R = w.shape[0], C = w.shape[1];
  for (std::size_t r = 0; r < R; ++r) {
    const double xv = x[r];
    if (xv == 0.0) continue;
    const double* row = &w.v[r * C];
    for (std::size_t c = 0; c < C; ++c) out[c] += xv * row[c];
  }
}

double sigmoid_s(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

void VocoderConfig::validate() const {
  if (quant_channels < 2) throw ShapeMismatch("quant_channels must be >= 2");
  if (hop_length == 0) throw ShapeMismatch("hop_length must be positive");
  if (n_mels == 0 || cond_dim == 0 || gru_hidden == 0 || fc_hidden == 0 || class_embed_dim == 0)
    throw ShapeMismatch("vocoder dims must be positive");
}

VocoderConfig VocoderConfig::from(const RunConfig& cfg) {
  VocoderConfig v;
  v.n_mels = cfg.mel.n_mels;
  v.cond_dim = cfg.vocoder.cond_dim;
  v.gru_hidden = cfg.vocoder.gru_hidden;
  v.fc_hidden = cfg.vocoder.fc_hidden;
  v.quant_channels = cfg.vocoder.quant_channels;
  v.class_embed_dim = cfg.vocoder.class_embed_dim;
  v.hop_length = cfg.mel.hop_length;
  return v;
}

nn::ParamSet vocoder_init(const VocoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  nn::ParamSet p;
  const std::size_t Q = static_cast<std::size_t>(cfg.quant_channels);
  const std::size_t in = cfg.class_embed_dim + cfg.cond_dim;
  const std::size_t H = cfg.gru_hidden;
  p.add("voc.cond.W", nn::uniform_init({cfg.n_mels, cfg.cond_dim}, cfg.n_mels, rng));
  p.add("voc.cond.b", Tensor({cfg.cond_dim}));
  p.add("voc.emb", nn::uniform_init({Q, cfg.class_embed_dim}, cfg.class_embed_dim, rng));
  p.add("voc.gru.Wx", nn::uniform_init({in, 3 * H}, in, rng));
  p.add("voc.gru.bx", Tensor({3 * H}));
  p.add("voc.gru.Wh", nn::uniform_init({H, 2 * H}, H, rng));
  p.add("voc.gru.Un", nn::uniform_init({H, H}, H, rng));
  p.add("voc.fc1.W", nn::uniform_init({H, cfg.fc_hidden}, H, rng));
  p.add("voc.fc1.b", Tensor({cfg.fc_hidden}));
  p.add("voc.out.W", nn::uniform_init({cfg.fc_hidden, Q}, cfg.fc_hidden, rng));
  p.add("voc.out.b", Tensor({Q}));
  return p;
}

void vocoder_validate(const nn::ParamSet& params, const VocoderConfig& cfg) {
  const std::size_t Q = static_cast<std::size_t>(cfg.quant_channels);
  params.expect("voc.cond.W", {cfg.n_mels, cfg.cond_dim});
  params.expect("voc.emb", {Q, cfg.class_embed_dim});
  params.expect("voc.gru.Wx", {cfg.class_embed_dim + cfg.cond_dim, 3 * cfg.gru_hidden});
  params.expect("voc.fc1.W", {cfg.gru_hidden, cfg.fc_hidden});
  params.expect("voc.out.W", {cfg.fc_hidden, Q});
}

ad::Var condition_upsample_forward(Tape& t, const nn::Leaves& leaves, const Var& mel,
                                   const VocoderConfig& cfg) {
  if (mel->val.rows() == 0) throw EmptyInput("mel spectrogram has no frames");
  auto proj = nn::affine(t, mel, leaves.at("voc.cond.W"), leaves.at("voc.cond.b"));
  // repeat each projected frame hop_length times
  std::vector<Var> rows;
  rows.reserve(proj->val.rows());
  for (std::size_t f = 0; f < proj->val.rows(); ++f) {
    auto r = ad::row(t, proj, f);
    for (std::size_t k = 0; k < cfg.hop_length; ++k) rows.push_back(r);
  }
  return ad::concat_rows(t, rows);
}

Tensor condition_upsample(const Tensor& mel, const nn::ParamSet& params, const VocoderConfig& cfg) {
  if (mel.rows() == 0) throw EmptyInput("mel spectrogram has no frames");
  vocoder_validate(params, cfg);
  const Tensor& w = params.at("voc.cond.W");
  const Tensor& b = params.at("voc.cond.b");
  Tensor out({mel.rows() * cfg.hop_length, cfg.cond_dim});
  std::vector<double> proj(cfg.cond_dim);
  std::vector<double> frame(cfg.n_mels);
  for (std::size_t f = 0; f < mel.rows(); ++f) {
    std::copy(&mel.v[f * cfg.n_mels], &mel.v[(f + 1) * cfg.n_mels], frame.begin());
    std::copy(b.v.begin(), b.v.end(), proj.begin());
    matvec_add(w, frame, proj);
    for (std::size_t k = 0; k < cfg.hop_length; ++k)
      std::copy(proj.begin(), proj.end(),
                out.v.begin() + static_cast<long>((f * cfg.hop_length + k) * cfg.cond_dim));
  }
  return out;
}

std::vector<double> vocoder_step(VocoderState& state, const std::vector<double>& conditioning_row,
                                 const nn::ParamSet& params, const VocoderConfig& cfg) {
  const std::size_t H = cfg.gru_hidden, Q = static_cast<std::size_t>(cfg.quant_channels);
  if (state.prev_class < 0 || state.prev_class >= cfg.quant_channels)
    throw IndexOutOfRange("previous class outside [0, Q)");
  if (conditioning_row.size() != cfg.cond_dim) throw ShapeMismatch("conditioning row dim mismatch");
  if (state.hidden.empty()) state.hidden.assign(H, 0.0);
  if (state.hidden.size() != H) throw ShapeMismatch("vocoder hidden size mismatch");

  // input = [class embedding, conditioning]
  std::vector<double> x(cfg.class_embed_dim + cfg.cond_dim);
  const Tensor& emb = params.at("voc.emb");
  std::copy(&emb.v[static_cast<std::size_t>(state.prev_class) * cfg.class_embed_dim],
            &emb.v[(static_cast<std::size_t>(state.prev_class) + 1) * cfg.class_embed_dim],
            x.begin());
  std::copy(conditioning_row.begin(), conditioning_row.end(), x.begin() + static_cast<long>(cfg.class_embed_dim));

  // GRU, reset-before-candidate (matches nn::gru_cell)
  std::vector<double> gx(params.at("voc.gru.bx").v);
  matvec_add(params.at("voc.gru.Wx"), x, gx);
  std::vector<double> gh(2 * H, 0.0);
  matvec_add(params.at("voc.gru.Wh"), state.hidden, gh);
  std::vector<double> rh(H);
  std::vector<double> h_new(H);
  for (std::size_t i = 0; i < H; ++i) {
    const double r = sigmoid_s(gx[H + i] + gh[H + i]);
    rh[i] = r * state.hidden[i];
  }
  std::vector<double> cand(H);
  for (std::size_t i = 0; i < H; ++i) cand[i] = gx[2 * H + i];
  matvec_add(params.at("voc.gru.Un"), rh, cand);
  for (std::size_t i = 0; i < H; ++i) {
    const double z = sigmoid_s(gx[i] + gh[i]);
    const double n = std::tanh(cand[i]);
    h_new[i] = n + z * (state.hidden[i] - n);
  }
  state.hidden = std::move(h_new);

  std::vector<double> fc(params.at("voc.fc1.b").v);
  matvec_add(params.at("voc.fc1.W"), state.hidden, fc);
  for (auto& v : fc) v = std::max(v, 0.0);
  std::vector<double> logits(params.at("voc.out.b").v);
  matvec_add(params.at("voc.out.W"), fc, logits);

  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  double sum = 0.0;
  std::vector<double> dist(Q);
  for (std::size_t i = 0; i < Q; ++i) {
    dist[i] = std::exp(logits[i] - mx);
    sum += dist[i];
  }
  for (auto& d : dist) d /= sum;
  return dist;
}

Waveform generate(const Tensor& mel, const nn::ParamSet& params, const VocoderConfig& cfg,
                  int sample_rate, std::uint64_t seed, SampleMode mode) {
  const Tensor cond = condition_upsample(mel, params, cfg);
  const std::size_t n = cond.rows();
  Rng rng(seed);

  VocoderState state;
  state.prev_class = mu_law_encode(0.0, cfg.quant_channels);

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.resize(n);
  std::vector<double> cond_row(cfg.cond_dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(&cond.v[i * cfg.cond_dim], &cond.v[(i + 1) * cfg.cond_dim], cond_row.begin());
    const auto dist = vocoder_step(state, cond_row, params, cfg);
    int cls = 0;
    if (mode == SampleMode::kArgmax) {
      for (std::size_t q = 1; q < dist.size(); ++q)
        if (dist[q] > dist[static_cast<std::size_t>(cls)]) cls = static_cast<int>(q);
    } else {
      const double u = rng.uniform();
      double acc = 0.0;
      cls = static_cast<int>(dist.size()) - 1;
      for (std::size_t q = 0; q < dist.size(); ++q) {
        acc += dist[q];
        if (u < acc) {
          cls = static_cast<int>(q);
          break;
        }
      }
    }
    out.samples[i] = mu_law_decode(cls, cfg.quant_channels);
    state.prev_class = cls;
  }
  return out;
}

double vocoder_loss(const Tensor& step_distributions, const std::vector<int>& target_classes) {
  const std::size_t R = step_distributions.rows(), Q = step_distributions.cols();
  if (R != target_classes.size()) throw ShapeMismatch("one target class per distribution row");
  if (R == 0) throw EmptyInput("no distributions given");
  double loss = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    const int y = target_classes[r];
    if (y < 0 || static_cast<std::size_t>(y) >= Q)
      throw TargetOutOfRange("target class " + std::to_string(y) + " outside [0, Q)");
    loss -= std::log(std::max(step_distributions.at(r, static_cast<std::size_t>(y)), 1e-300));
  }
  return loss / static_cast<double>(R);
}

double teacher_forced_loss(const Waveform& w, const nn::ParamSet& params, const VocoderConfig& cfg,
                           const MelConfig& mel_cfg) {
  MelSpectrogram mel = mel_spectrogram(w, mel_cfg);
  const Tensor cond = condition_upsample(mel.data, params, cfg);
  const std::size_t n = std::min(cond.rows(), w.samples.size());

  VocoderState state;
  state.prev_class = mu_law_encode(0.0, cfg.quant_channels);
  std::vector<double> cond_row(cfg.cond_dim);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(&cond.v[i * cfg.cond_dim], &cond.v[(i + 1) * cfg.cond_dim], cond_row.begin());
    const auto dist = vocoder_step(state, cond_row, params, cfg);
    const int target = mu_law_encode(w.samples[i], cfg.quant_channels);
    loss -= std::log(std::max(dist[static_cast<std::size_t>(target)], 1e-300));
    state.prev_class = target;  // teacher forcing
  }
  return loss / static_cast<double>(n);
}

VocoderTrainResult train_vocoder(const Manifest& manifest, const RunConfig& cfg) {
  if (manifest.rows.empty()) throw ManifestInvalid("empty manifest");
  VocoderConfig vcfg = VocoderConfig::from(cfg);
  vcfg.validate();

  struct Item {
    Tensor mel;
    std::vector<int> classes;  // mu-law class per usable sample
  };
  std::vector<Item> items;
  for (const auto& r : manifest.rows) {
    Waveform w = load_wav(r.wav_path);
    MelSpectrogram mel = mel_spectrogram(w, cfg.mel);
    Item it;
    it.mel = mel.data;
    const std::size_t usable = std::min(mel.frames() * vcfg.hop_length, w.samples.size());
    it.classes.resize(usable);
    for (std::size_t i = 0; i < usable; ++i)
      it.classes[i] = mu_law_encode(w.samples[i], vcfg.quant_channels);
    items.push_back(std::move(it));
  }

  VocoderTrainResult result;
  result.params = vocoder_init(vcfg, cfg.train.seed + 2);
  nn::AdamConfig adam;
  adam.lr = cfg.vocoder.lr;
  const int go_class = mu_law_encode(0.0, vcfg.quant_channels);

  for (std::size_t step = 0; step < cfg.vocoder.steps; ++step) {
    Rng rng(mix_seed(cfg.train.seed + 2, step));
    const Item& it = items[rng.index(items.size())];
    const std::size_t total = it.classes.size();
    const std::size_t crop = std::min(cfg.vocoder.crop_samples, total);
    const std::size_t s0 = rng.index(total - crop + 1);

    Tape tape;
    auto leaves = nn::make_leaves(tape, result.params);
    auto mel_leaf = tape.leaf(it.mel);
    auto proj = nn::affine(tape, mel_leaf, leaves.at("voc.cond.W"), leaves.at("voc.cond.b"));

    Var h = tape.leaf(Tensor({1, vcfg.gru_hidden}));
    std::vector<Var> h_rows;
    h_rows.reserve(crop);
    std::vector<int> targets(it.classes.begin() + static_cast<long>(s0),
                             it.classes.begin() + static_cast<long>(s0 + crop));
    for (std::size_t i = 0; i < crop; ++i) {
      const std::size_t sample = s0 + i;
      const int prev = sample == 0 ? go_class : it.classes[sample - 1];
      auto x = ad::concat_cols(tape, ad::embedding_lookup(tape, leaves.at("voc.emb"), {prev}),
                               ad::row(tape, proj, sample / vcfg.hop_length));
      h = nn::gru_cell(tape, x, h, leaves.at("voc.gru.Wx"), leaves.at("voc.gru.bx"),
                       leaves.at("voc.gru.Wh"), leaves.at("voc.gru.Un"));
      h_rows.push_back(h);
    }
    // the output head has no recurrence, so run it batched over the crop
    auto hs = ad::concat_rows(tape, h_rows);
    auto fc = ad::relu(tape, nn::affine(tape, hs, leaves.at("voc.fc1.W"), leaves.at("voc.fc1.b")));
    auto logits = nn::affine(tape, fc, leaves.at("voc.out.W"), leaves.at("voc.out.b"));
    auto loss = ad::softmax_cross_entropy(tape, logits, targets);
    tape.backward(loss);
    nn::adam_step(result.params, nn::collect_grads(leaves), result.opt, adam);
    result.log.push_back({step, loss->val.v[0]});
  }
  return result;
}

}  // namespace vox
