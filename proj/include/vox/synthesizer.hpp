#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vox/audio.hpp"
#include "vox/config.hpp"
#include "vox/manifest.hpp"
#include "vox/nn.hpp"

namespace vox {

// Character-level tokens over a fixed printable-ASCII charset with
// dedicated PAD (0) and EOS (1) ids.
struct TokenSequence {
  std::vector<int> ids;  // EOS appended exactly once at the end
};

constexpr int kPadToken = 0;
constexpr int kEosToken = 1;
constexpr std::size_t kVocabSize = 97;  // PAD + EOS + ASCII 32..126

TokenSequence tokenize(const std::string& text);

struct SynthesizerConfig {
  std::size_t vocab_size = kVocabSize;
  std::size_t n_mels = 80;
  std::size_t speaker_embed_dim = 128;
  std::size_t embed_dim = 256;
  std::size_t prenet1 = 256;
  std::size_t prenet2 = 128;
  std::size_t bank_k = 8;
  std::size_t bank_channels = 128;
  std::size_t highway_layers = 4;
  std::size_t gru_hidden = 128;  // per direction
  std::size_t attention_dim = 128;
  std::size_t decoder_hidden = 256;
  std::size_t reduction = 2;
  std::size_t max_decoder_steps = 1000;
  double stop_threshold = 0.5;
  double cyc_weight = 1.0;
  double dropout_keep = 0.5;

  std::size_t memory_dim() const { return 2 * gru_hidden + speaker_embed_dim; }
  void validate() const;
  static SynthesizerConfig from(const RunConfig& cfg, std::size_t speaker_embed_dim);
};

nn::ParamSet synthesizer_init(const SynthesizerConfig& cfg, std::uint64_t seed);
void synthesizer_validate(const nn::ParamSet& params, const SynthesizerConfig& cfg);

// PreNet + CBHG encoder; the unit-norm speaker embedding is concatenated
// onto every output frame. Returns tokens.size() x memory_dim().
ad::Var encode_text_forward(ad::Tape& t, const nn::Leaves& leaves, const TokenSequence& tokens,
                            const ad::Var& speaker_embedding, const SynthesizerConfig& cfg,
                            bool train, Rng* dropout_rng);
Tensor encode_text(const TokenSequence& tokens, const Tensor& speaker_embedding,
                   const nn::ParamSet& params, const SynthesizerConfig& cfg);

// Additive attention: score_j = v^T tanh(Wq q + Wm m_j).
// Returns (context 1 x memory_dim, weights 1 x L).
std::pair<ad::Var, ad::Var> attention_step(ad::Tape& t, const nn::Leaves& leaves,
                                           const ad::Var& query, const ad::Var& memory);

struct AttentionState {
  Tensor weights;  // decoder steps x encoder length
};

struct DecodeResult {
  Tensor mel;          // frames x n_mels
  Tensor stop_logits;  // one per decoder step
  AttentionState attention;
  bool max_steps_exceeded = false;
};

struct DecodeVars {
  ad::Var mel;          // frames x n_mels
  ad::Var stop_logits;  // steps x 1
  std::vector<ad::Var> attention_rows;
};

// Teacher-forced decode; target frame count is padded up to a multiple of
// the reduction factor (by repeating the last frame).
DecodeVars decode_teacher_forced(ad::Tape& t, const nn::Leaves& leaves, const ad::Var& memory,
                                 const Tensor& teacher_mel, const SynthesizerConfig& cfg,
                                 Rng& dropout_rng);

// Free-running decode; stops when sigmoid(stop logit) > stop_threshold or
// at max_decoder_steps (flagged, not fatal).
DecodeResult decode(const Tensor& memory, const nn::ParamSet& params, const SynthesizerConfig& cfg,
                    std::uint64_t prenet_dropout_seed);

// Voiced/unvoiced mask over mel frames: peak normalized autocorrelation of
// the time-aligned waveform frame over 2.5-12.5 ms lags against a threshold.
std::vector<double> periodic_mask(const Waveform& w, const MelConfig& mel_cfg,
                                  double voicing_threshold);

struct SynthesisLossVars {
  ad::Var total;
  ad::Var l_synthesis;
  ad::Var l_cyc;
  ad::Var l_stop;
};

// total = L_synthesis + lambda * L_cyc + L_stop. With lambda == 0 the cyc
// term is still reported but excluded from the gradient path.
SynthesisLossVars synthesis_loss(ad::Tape& t, const ad::Var& mel_predict, const Tensor& mel_target,
                                 const std::vector<double>& mask, double cyc_weight,
                                 const ad::Var& stop_logits, const Tensor& stop_targets);

struct SynthTrainLog {
  std::size_t step;
  double total, l_synthesis, l_cyc, l_stop;
};

struct SynthTrainResult {
  nn::ParamSet params;
  nn::AdamState opt;
  std::vector<SynthTrainLog> log;
};

SynthTrainResult train_synthesizer(const Manifest& manifest, const nn::ParamSet& encoder_params,
                                   const RunConfig& cfg);

}  // namespace vox
