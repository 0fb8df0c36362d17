#include "vox/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "vox/autodiff.hpp"

namespace vox {

EerResult compute_eer(const std::vector<TrialScore>& trials) {
  std::vector<double> gen, spf;
  for (const auto& t : trials) {
    if (!std::isfinite(t.score)) throw NonFiniteValue("trial score for " + t.utt_id);
    (t.genuine ? gen : spf).push_back(t.score);
  }
  if (gen.empty() || spf.empty()) throw OneClassOnly("need both genuine and spoof trials");

  std::vector<double> thresholds;
  thresholds.reserve(trials.size() + 1);
  for (const auto& t : trials) thresholds.push_back(t.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(thresholds.back() + 1.0);  // sentinel: reject everything

  auto far_at = [&](double t) {
    std::size_t n = 0;
    for (double s : spf) n += s >= t;
    return static_cast<double>(n) / static_cast<double>(spf.size());
  };
  auto frr_at = [&](double t) {
    std::size_t n = 0;
    for (double s : gen) n += s < t;
    return static_cast<double>(n) / static_cast<double>(gen.size());
  };

  double prev_t = thresholds[0];
  double prev_far = far_at(prev_t), prev_frr = frr_at(prev_t);
  for (double t : thresholds) {
    const double far = far_at(t), frr = frr_at(t);
    const double diff = far - frr;
    if (diff <= 0.0) {
      if (diff == 0.0) return {far, t};
      const double prev_diff = prev_far - prev_frr;
      const double alpha = prev_diff / (prev_diff - diff);
      return {prev_far + alpha * (far - prev_far), prev_t + alpha * (t - prev_t)};
    }
    prev_t = t;
    prev_far = far;
    prev_frr = frr;
  }
  return {0.5, prev_t};  // unreachable: sentinel has diff = -1
}

double compute_dsr(const std::vector<double>& fake_scores, double threshold) {
  if (fake_scores.empty()) throw EmptyTrials("no fake scores");
  std::size_t n = 0;
  for (double s : fake_scores) n += s >= threshold;
  return static_cast<double>(n) / static_cast<double>(fake_scores.size());
}

double compute_wdsr(const std::vector<std::pair<std::string, double>>& dsrs,
                    const std::vector<std::pair<std::string, double>>& weights) {
  if (dsrs.empty()) throw EmptyTrials("no per-detector dsr values");
  std::map<std::string, double> wmap(weights.begin(), weights.end());
  double num = 0.0, den = 0.0;
  for (const auto& [name, dsr] : dsrs) {
    auto it = wmap.find(name);
    if (it == wmap.end()) throw MissingWeight("no weight for detector " + name);
    num += it->second * dsr;
    den += it->second;
  }
  if (den == 0.0) throw ZeroWeightSum("detector weights sum to zero");
  return num / den;
}

std::vector<TrialScore> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path);
  std::vector<TrialScore> trials;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3)
      throw ParseError("line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    TrialScore t;
    t.utt_id = fields[0];
    if (fields[1] == "genuine")
      t.genuine = true;
    else if (fields[1] == "spoof")
      t.genuine = false;
    else
      throw ParseError("line " + std::to_string(lineno) + ": bad label '" + fields[1] + "'");
    try {
      std::size_t pos = 0;
      t.score = std::stod(fields[2], &pos);
      if (pos != fields[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(lineno) + ": bad score '" + fields[2] + "'");
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

void write_scores(const std::vector<TrialScore>& trials, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  char buf[64];
  for (const auto& t : trials) {
    std::snprintf(buf, sizeof buf, "%.17g", t.score);
    out << t.utt_id << '\t' << (t.genuine ? "genuine" : "spoof") << '\t' << buf << '\n';
  }
  if (!out) throw IoFailure("write failed for " + path);
}

std::vector<double> detector_features(const Waveform& w, const MelConfig& mel_cfg) {
  MelSpectrogram mel = mel_spectrogram(w, mel_cfg);
  const std::size_t F = mel.frames(), M = mel_cfg.n_mels;
  std::vector<double> feat(2 * M, 0.0);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t m = 0; m < M; ++m) feat[m] += mel.data.at(f, m);
  for (std::size_t m = 0; m < M; ++m) feat[m] /= static_cast<double>(F);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t m = 0; m < M; ++m) {
      const double d = mel.data.at(f, m) - feat[m];
      feat[M + m] += d * d;
    }
  for (std::size_t m = 0; m < M; ++m) feat[M + m] /= static_cast<double>(F);
  return feat;
}

nn::ParamSet baseline_detector_train(const Manifest& genuine, const Manifest& spoof,
                                     const RunConfig& cfg) {
  if (genuine.rows.empty() || spoof.rows.empty())
    throw OneClassOnly("detector training needs both genuine and spoof audio");
  const std::size_t D = 2 * cfg.mel.n_mels;

  std::vector<std::vector<double>> feats;
  std::vector<double> labels;
  for (const auto& r : genuine.rows) {
    feats.push_back(detector_features(load_wav(r.wav_path), cfg.mel));
    labels.push_back(1.0);
  }
  for (const auto& r : spoof.rows) {
    feats.push_back(detector_features(load_wav(r.wav_path), cfg.mel));
    labels.push_back(0.0);
  }
  const std::size_t N = feats.size();

  Tensor mu({D}), sd({D});
  for (const auto& f : feats)
    for (std::size_t d = 0; d < D; ++d) mu.v[d] += f[d];
  for (auto& v : mu.v) v /= static_cast<double>(N);
  for (const auto& f : feats)
    for (std::size_t d = 0; d < D; ++d) {
      const double diff = f[d] - mu.v[d];
      sd.v[d] += diff * diff;
    }
  for (auto& v : sd.v) v = std::max(std::sqrt(v / static_cast<double>(N)), 1e-8);

  Tensor x({N, D});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t d = 0; d < D; ++d) x.at(n, d) = (feats[n][d] - mu.v[d]) / sd.v[d];
  Tensor y({N, 1});
  y.v = labels;

  nn::ParamSet params;
  params.add("det.W", Tensor({D, 1}));
  params.add("det.b", Tensor({1}));
  params.add("det.mu", mu);
  params.add("det.sd", sd);

  nn::AdamState opt;
  nn::AdamConfig adam;
  adam.lr = cfg.eval.detector_lr;
  for (std::size_t step = 0; step < cfg.eval.detector_steps; ++step) {
    ad::Tape tape;
    auto w = tape.leaf(params.at("det.W"));
    auto b = tape.leaf(params.at("det.b"));
    auto logits = ad::add_rowwise(tape, ad::matmul(tape, tape.leaf(x), w), b);
    auto loss = ad::bce_with_logits(tape, logits, y);
    tape.backward(loss);
    std::map<std::string, Tensor> grads;
    grads["det.W"] = w->grad;
    grads["det.b"] = b->grad;
    nn::adam_step(params, grads, opt, adam);
  }
  return params;
}

double baseline_detector_score(const Waveform& w, const nn::ParamSet& params,
                               const MelConfig& mel_cfg) {
  const Tensor& weight = params.at("det.W");
  const Tensor& mu = params.at("det.mu");
  const Tensor& sd = params.at("det.sd");
  const std::vector<double> feat = detector_features(w, mel_cfg);
  if (feat.size() != weight.shape[0]) throw ShapeMismatch("detector feature dim mismatch");
  double logit = params.at("det.b").v[0];
  for (std::size_t d = 0; d < feat.size(); ++d)
    logit += weight.v[d] * (feat[d] - mu.v[d]) / sd.v[d];
  return logit;
}

std::string render_report(const std::vector<ReportEntry>& entries,
                          const std::vector<std::pair<std::string, double>>& dsrs,
                          std::optional<double> wdsr) {
  std::vector<std::array<std::string, 4>> rows;
  rows.push_back({"Detector", "Dataset", "Method", "EER(%)"});
  char buf[64];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * e.eer);
    rows.push_back({e.detector, e.dataset, e.method, buf});
  }
  std::array<std::size_t, 4> width{};
  for (const auto& r : rows)
    for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], r[c].size());

  std::ostringstream out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      out << rows[i][c] << std::string(width[c] - rows[i][c].size(), ' ');
      out << (c + 1 < 4 ? " | " : "\n");
    }
    if (i == 0) {
      for (std::size_t c = 0; c < 4; ++c)
        out << std::string(width[c], '-') << (c + 1 < 4 ? "-+-" : "\n");
    }
  }
  for (const auto& [name, dsr] : dsrs) {
    std::snprintf(buf, sizeof buf, "%.4f", dsr);
    out << "DSR " << name << " " << buf << "\n";
  }
  if (wdsr) {
    std::snprintf(buf, sizeof buf, "%.4f", *wdsr);
    out << "WDSR " << buf << "\n";
  }
  return out.str();
}

}  // namespace vox
