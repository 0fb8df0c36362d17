#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vox/audio.hpp"
#include "vox/rng.hpp"

namespace vox {

struct AugmentSpec {
  std::vector<Waveform> noise_pool;
  std::vector<Waveform> rir_pool;
  double snr_lo = 5.0;
  double snr_hi = 20.0;
  std::vector<double> speed_factors = {0.9, 1.0, 1.1};
  double p_noise = 0.5;
  double p_reverb = 0.5;
  double p_speed = 0.5;

  void validate() const;
};

// Applied-ops record for one utterance; replays bit-identically.
struct AugmentRecord {
  bool noise = false;
  std::size_t noise_index = 0;
  std::size_t noise_offset = 0;  // crop offset when the noise is longer
  double snr_db = 0.0;
  bool reverb = false;
  std::size_t rir_index = 0;
  bool speed = false;
  double speed_factor = 1.0;

  std::string serialize() const;  // one text line
  static AugmentRecord parse(const std::string& line);
};

// Scale noise so 10*log10(P_clean / P_noise_scaled) = snr_db (powers are
// mean squared amplitude). Noise is tiled or cropped (at `noise_offset`)
// to the clean length; output is peak-normalized only if it clips.
Waveform add_noise(const Waveform& clean, const Waveform& noise, double snr_db,
                   std::size_t noise_offset = 0);

// Full linear convolution truncated to the dry length, rescaled to the dry
// signal's RMS.
Waveform add_reverb(const Waveform& dry, const Waveform& rir);

// Each augmentation applies independently with its probability, in fixed
// order noise -> reverb -> speed.
std::pair<Waveform, AugmentRecord> augment(const Waveform& w, const AugmentSpec& spec, Rng& rng);

// Re-apply a recorded trace exactly.
Waveform apply_record(const Waveform& w, const AugmentSpec& spec, const AugmentRecord& rec);

// Pool manifest: one wav path per line (relative to the manifest file).
std::vector<Waveform> load_pool(const std::string& pool_manifest_path);

}  // namespace vox
