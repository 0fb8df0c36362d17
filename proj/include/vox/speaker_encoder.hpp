#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vox/audio.hpp"
#include "vox/config.hpp"
#include "vox/manifest.hpp"
#include "vox/nn.hpp"

namespace vox {

struct SpeakerEncoderConfig {
  std::size_t n_mels = 80;
  std::size_t lstm_hidden = 128;  // per direction
  std::size_t fc1_dim = 256;
  std::size_t embed_dim = 128;
  std::size_t n_speakers = 2;

  void validate() const;
  static SpeakerEncoderConfig from(const RunConfig& cfg, std::size_t n_speakers);
};

nn::ParamSet speaker_encoder_init(const SpeakerEncoderConfig& cfg, std::uint64_t seed);

// Throws CheckpointIncompatible if the loaded shapes do not match `cfg`
// (n_speakers is not checked when check_head is false, so inference works
// against any training roster).
void speaker_encoder_validate(const nn::ParamSet& params, const SpeakerEncoderConfig& cfg,
                              bool check_head);

// Infer the hyperparameters a stored encoder was trained with.
SpeakerEncoderConfig speaker_encoder_config_of(const nn::ParamSet& params);

// 2 stacked bi-LSTM layers -> mean over time -> FC+relu -> FC -> l2 norm.
// `mel_steps` holds one B x n_mels Var per frame. Returns B x embed_dim.
ad::Var speaker_embed_forward(ad::Tape& t, const nn::Leaves& leaves,
                              const std::vector<ad::Var>& mel_steps,
                              const SpeakerEncoderConfig& cfg);

ad::Var speaker_logits(ad::Tape& t, const nn::Leaves& leaves, const ad::Var& embedding);

// Batch-mean cross entropy of softmax logits against speaker ids.
ad::Var speaker_loss(ad::Tape& t, const ad::Var& logits, const std::vector<int>& targets);

// Unit-norm embedding of one utterance, deterministic.
Tensor embed_utterance(const MelSpectrogram& mel, const nn::ParamSet& params,
                       const SpeakerEncoderConfig& cfg);

Waveform splice_reference_audio(const std::vector<Waveform>& waveforms);

double cosine_similarity(const Tensor& a, const Tensor& b);

struct EncoderTrainLog {
  std::size_t step;
  double loss;
  double accuracy;  // batch accuracy
};

struct EncoderResume {
  nn::ParamSet params;
  nn::AdamState opt;
  std::size_t start_step = 0;
};

struct EncoderTrainResult {
  nn::ParamSet params;
  nn::AdamState opt;
  std::vector<EncoderTrainLog> log;
  double final_accuracy = 0.0;  // full training set, no dropout
  std::vector<std::string> speakers;
};

EncoderTrainResult train_speaker_encoder(const Manifest& manifest, const RunConfig& cfg,
                                         std::optional<EncoderResume> resume = std::nullopt);

}  // namespace vox
