#include "vox/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace vox {

namespace fs = std::filesystem;

std::vector<std::string> Manifest::speaker_ids() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : rows)
    if (seen.insert(r.speaker_id).second) out.push_back(r.speaker_id);
  return out;
}

Manifest parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();

  Manifest m;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4)
      throw ParseError("manifest line " + std::to_string(lineno) + ": expected 4 tab-separated fields, got " +
                       std::to_string(fields.size()));
    ManifestRow row{fields[0], fields[1], fields[2], fields[3]};
    if (row.utt_id.empty() || row.speaker_id.empty())
      throw ParseError("manifest line " + std::to_string(lineno) + ": empty utt or speaker id");
    if (!ids.insert(row.utt_id).second) throw DuplicateUttId(row.utt_id);
    fs::path wav = fs::path(row.wav_path);
    if (wav.is_relative()) wav = base / wav;
    if (!fs::exists(wav)) throw MissingFile(wav.string() + " (manifest line " + std::to_string(lineno) + ")");
    row.wav_path = wav.string();
    m.rows.push_back(std::move(row));
  }
  return m;
}

void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  const fs::path base = fs::path(path).parent_path();
  for (const auto& r : m.rows) {
    // store wav paths relative to the manifest when possible
    std::string wav = r.wav_path;
    std::error_code ec;
    auto rel = fs::relative(r.wav_path, base, ec);
    if (!ec && !rel.empty()) wav = rel.string();
    out << r.utt_id << '\t' << r.speaker_id << '\t' << wav << '\t' << r.text << '\n';
  }
  if (!out) throw IoFailure("write failed: " + path);
}

}  // namespace vox
