#pragma once

#include <string>
#include <vector>

#include "vox/error.hpp"

namespace vox {

struct ManifestRow {
  std::string utt_id;
  std::string speaker_id;
  std::string wav_path;  // resolved relative to the manifest's directory
  std::string text;
};

struct Manifest {
  std::vector<ManifestRow> rows;

  std::vector<std::string> speaker_ids() const;  // unique, in first-seen order
  std::size_t n_speakers() const { return speaker_ids().size(); }
};

// UTF-8, one row per line, tab-separated: utt_id, speaker_id, wav_path,
// text. '#' lines are comments; blank lines are skipped. Referenced wav
// files must exist.
Manifest parse_manifest(const std::string& path);

void write_manifest(const Manifest& m, const std::string& path);

}  // namespace vox
