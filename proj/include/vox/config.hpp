#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vox/audio.hpp"
#include "vox/error.hpp"

namespace vox {

// Flat `section.key = value` configuration. Every key is registered with a
// default; unknown keys are rejected and a dumped config reloads to an
// identical configuration.
struct RunConfig {
  MelConfig mel;

  struct Encoder {
    std::size_t lstm_hidden = 128;
    std::size_t fc1_dim = 256;
    std::size_t embed_dim = 128;
    std::size_t steps = 300;
    double lr = 1e-3;
    std::size_t batch_size = 8;
    std::size_t crop_frames = 40;
    bool augment = false;
  } encoder;

  struct Synth {
    std::size_t embed_dim = 256;
    std::size_t prenet1 = 256;
    std::size_t prenet2 = 128;
    std::size_t bank_k = 8;
    std::size_t bank_channels = 128;
    std::size_t highway_layers = 4;
    std::size_t gru_hidden = 128;
    std::size_t attention_dim = 128;
    std::size_t decoder_hidden = 256;
    std::size_t reduction = 2;
    std::size_t max_decoder_steps = 1000;
    double stop_threshold = 0.5;
    double cyc_weight = 1.0;
    double dropout_keep = 0.5;
    std::size_t steps = 500;
    double lr = 1e-3;
    double voicing_threshold = 0.45;
  } synth;

  struct Vocoder {
    std::size_t cond_dim = 128;
    std::size_t gru_hidden = 256;
    std::size_t fc_hidden = 256;
    int quant_channels = 256;
    std::size_t class_embed_dim = 64;
    std::size_t steps = 1000;
    double lr = 1e-3;
    std::size_t crop_samples = 4000;
  } vocoder;

  struct Augment {
    double snr_lo = 5.0;
    double snr_hi = 20.0;
    std::string speed_factors = "0.9,1.0,1.1";
    double p_noise = 0.5;
    double p_reverb = 0.5;
    double p_speed = 0.5;
    std::string noise_pool;  // pool manifest path, one wav path per line
    std::string rir_pool;
  } augment;

  struct Eval {
    std::size_t detector_steps = 500;
    double detector_lr = 0.05;
  } eval;

  struct Train {
    std::uint64_t seed = 1;
  } train;

  std::vector<double> speed_factor_list() const;
};

RunConfig parse_config(const std::string& path);
void apply_config_line(RunConfig& cfg, const std::string& line, std::size_t lineno);
std::string dump_config(const RunConfig& cfg);

}  // namespace vox
