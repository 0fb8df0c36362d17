#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vox/audio.hpp"
#include "vox/config.hpp"
#include "vox/manifest.hpp"
#include "vox/nn.hpp"

namespace vox {

struct TrialScore {
  std::string utt_id;
  bool genuine = false;
  double score = 0.0;  // higher = more genuine
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Threshold sweep over the distinct scores; FAR = spoof scored >= t,
// FRR = genuine scored < t, linear interpolation at the crossing.
EerResult compute_eer(const std::vector<TrialScore>& trials);

// Fraction of fakes accepted as genuine at the given threshold.
double compute_dsr(const std::vector<double>& fake_scores, double threshold);

// Weighted mean of per-detector DSRs; weights looked up by name.
double compute_wdsr(const std::vector<std::pair<std::string, double>>& dsrs,
                    const std::vector<std::pair<std::string, double>>& weights);

std::vector<TrialScore> read_scores(const std::string& path);
void write_scores(const std::vector<TrialScore>& trials, const std::string& path);

// Logistic regression on per-bin mel mean and variance (2 * n_mels features,
// standardized with training-set statistics). Stand-in for an external
// countermeasure; score is the pre-sigmoid logit.
nn::ParamSet baseline_detector_train(const Manifest& genuine, const Manifest& spoof,
                                     const RunConfig& cfg);
double baseline_detector_score(const Waveform& w, const nn::ParamSet& params,
                               const MelConfig& mel_cfg);

std::vector<double> detector_features(const Waveform& w, const MelConfig& mel_cfg);

struct ReportEntry {
  std::string detector;
  std::string dataset;
  std::string method;
  double eer = 0.0;  // fraction
};

// Text table with columns Detector | Dataset | Method | EER(%), followed by
// per-detector DSR lines and an optional WDSR summary line.
std::string render_report(const std::vector<ReportEntry>& entries,
                          const std::vector<std::pair<std::string, double>>& dsrs,
                          std::optional<double> wdsr);

}  // namespace vox
