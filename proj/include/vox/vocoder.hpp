#pragma once

#include <string>
#include <vector>

#include "vox/audio.hpp"
#include "vox/config.hpp"
#include "vox/manifest.hpp"
#include "vox/nn.hpp"

namespace vox {

struct VocoderConfig {
  std::size_t n_mels = 80;
  std::size_t cond_dim = 128;
  std::size_t gru_hidden = 256;
  std::size_t fc_hidden = 256;
  int quant_channels = 256;
  std::size_t class_embed_dim = 64;
  std::size_t hop_length = 200;  // must match MelConfig

  void validate() const;
  static VocoderConfig from(const RunConfig& cfg);
};

struct VocoderState {
  std::vector<double> hidden;  // gru hidden
  int prev_class = 0;
};

nn::ParamSet vocoder_init(const VocoderConfig& cfg, std::uint64_t seed);
void vocoder_validate(const nn::ParamSet& params, const VocoderConfig& cfg);

// Affine projection of each mel frame to cond_dim, each projected frame
// repeated hop_length times. Returns (frames * hop_length) x cond_dim.
ad::Var condition_upsample_forward(ad::Tape& t, const nn::Leaves& leaves, const ad::Var& mel,
                                   const VocoderConfig& cfg);
Tensor condition_upsample(const Tensor& mel, const nn::ParamSet& params, const VocoderConfig& cfg);

// One autoregressive step: embed previous class, concat conditioning row,
// gru, fc+relu, affine, softmax. Updates state.hidden; the caller decides
// the next class. Returns the class distribution.
std::vector<double> vocoder_step(VocoderState& state, const std::vector<double>& conditioning_row,
                                 const nn::ParamSet& params, const VocoderConfig& cfg);

enum class SampleMode { kSample, kArgmax };

// Free-running generation over the upsampled conditioning; initial previous
// class is mu_law_encode(0). Output length = frames * hop_length.
Waveform generate(const Tensor& mel, const nn::ParamSet& params, const VocoderConfig& cfg,
                  int sample_rate, std::uint64_t seed, SampleMode mode);

// Mean categorical cross entropy of per-step distributions (rows) against
// ground-truth mu-law classes.
double vocoder_loss(const Tensor& step_distributions, const std::vector<int>& target_classes);

// Teacher-forced cross entropy of the model on one waveform (no gradient).
double teacher_forced_loss(const Waveform& w, const nn::ParamSet& params, const VocoderConfig& cfg,
                           const MelConfig& mel_cfg);

struct VocoderTrainLog {
  std::size_t step;
  double loss;
};

struct VocoderTrainResult {
  nn::ParamSet params;
  nn::AdamState opt;
  std::vector<VocoderTrainLog> log;
};

VocoderTrainResult train_vocoder(const Manifest& manifest, const RunConfig& cfg);

}  // namespace vox
