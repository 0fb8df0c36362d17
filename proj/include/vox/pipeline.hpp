#pragma once

#include <string>
#include <vector>

#include "vox/audio.hpp"
#include "vox/config.hpp"
#include "vox/manifest.hpp"
#include "vox/nn.hpp"
#include "vox/vocoder.hpp"

namespace vox {

// Deterministic verification corpus. Speaker k speaks at a fundamental of
// 120 + 40k Hz through a resonance centered on its fifth harmonic, so
// speakers separate cleanly in the spectrum. Each utterance is 3-8 digit
// tokens; a token is a 0.1 s harmonic segment whose pitch is nudged by the
// digit. Writes <out_dir>/<utt_id>.wav files plus manifest.tsv and returns
// the manifest with resolved paths.
Manifest generate_toy_corpus(const std::string& out_dir, std::size_t n_speakers,
                             std::size_t utterances_per_speaker, std::uint64_t seed);

struct SynthesisOutput {
  Waveform wav;
  std::size_t token_count = 0;
  std::size_t mel_frames = 0;
  std::string stop_reason;  // "stop_token" or "max_steps"
};

// Full chain: splice references -> speaker embedding -> text encoder +
// attention decoder -> neural vocoder.
SynthesisOutput synthesize(const std::string& text, const std::vector<Waveform>& references,
                           const nn::ParamSet& encoder, const nn::ParamSet& synthesizer,
                           const nn::ParamSet& vocoder, const RunConfig& cfg, SampleMode mode,
                           std::uint64_t sample_seed);

}  // namespace vox
