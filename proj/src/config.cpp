#include "vox/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <functional>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

namespace vox {

namespace {

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_num(const std::string& s, const std::string& key);

template <>
double parse_num<double>(const std::string& s, const std::string& key) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw ConfigInvalid("bad numeric value '" + s + "' for " + key);
  return v;
}

template <>
std::size_t parse_num<std::size_t>(const std::string& s, const std::string& key) {
  char* end = nullptr;
  unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw ConfigInvalid("bad integer value '" + s + "' for " + key);
  return static_cast<std::size_t>(v);
}

template <>
int parse_num<int>(const std::string& s, const std::string& key) {
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw ConfigInvalid("bad integer value '" + s + "' for " + key);
  return static_cast<int>(v);
}

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    auto num = [&k](const std::string& name, auto accessor) {
      using Field = std::remove_reference_t<decltype(accessor(std::declval<RunConfig&>()))>;
      k.push_back(Key{
          name,
          [accessor, name](RunConfig& c, const std::string& s) {
            accessor(c) = parse_num<Field>(s, name);
          },
          [accessor](const RunConfig& c) {
            Field v = accessor(const_cast<RunConfig&>(c));
            if constexpr (std::is_same_v<Field, double>) return fmt_double(v);
            else return std::to_string(v);
          }});
    };
    auto str = [&k](const std::string& name, auto accessor) {
      k.push_back(Key{name,
                      [accessor](RunConfig& c, const std::string& s) { accessor(c) = s; },
                      [accessor](const RunConfig& c) { return accessor(const_cast<RunConfig&>(c)); }});
    };
    auto boolean = [&k](const std::string& name, auto accessor) {
      k.push_back(Key{name,
                      [accessor, name](RunConfig& c, const std::string& s) {
                        if (s == "true") accessor(c) = true;
                        else if (s == "false") accessor(c) = false;
                        else throw ConfigInvalid("bad boolean value '" + s + "' for " + name);
                      },
                      [accessor](const RunConfig& c) {
                        return std::string(accessor(const_cast<RunConfig&>(c)) ? "true" : "false");
                      }});
    };

    num("mel.sample_rate", [](RunConfig& c) -> int& { return c.mel.sample_rate; });
    num("mel.frame_length", [](RunConfig& c) -> std::size_t& { return c.mel.frame_length; });
    num("mel.hop_length", [](RunConfig& c) -> std::size_t& { return c.mel.hop_length; });
    num("mel.fft_size", [](RunConfig& c) -> std::size_t& { return c.mel.fft_size; });
    num("mel.n_mels", [](RunConfig& c) -> std::size_t& { return c.mel.n_mels; });
    num("mel.fmin", [](RunConfig& c) -> double& { return c.mel.fmin; });
    num("mel.fmax", [](RunConfig& c) -> double& { return c.mel.fmax; });
    num("mel.preemphasis", [](RunConfig& c) -> double& { return c.mel.preemphasis; });
    num("mel.log_floor", [](RunConfig& c) -> double& { return c.mel.log_floor; });

    num("encoder.lstm_hidden", [](RunConfig& c) -> std::size_t& { return c.encoder.lstm_hidden; });
    num("encoder.fc1_dim", [](RunConfig& c) -> std::size_t& { return c.encoder.fc1_dim; });
    num("encoder.embed_dim", [](RunConfig& c) -> std::size_t& { return c.encoder.embed_dim; });
    num("encoder.steps", [](RunConfig& c) -> std::size_t& { return c.encoder.steps; });
    num("encoder.lr", [](RunConfig& c) -> double& { return c.encoder.lr; });
    num("encoder.batch_size", [](RunConfig& c) -> std::size_t& { return c.encoder.batch_size; });
    num("encoder.crop_frames", [](RunConfig& c) -> std::size_t& { return c.encoder.crop_frames; });
    boolean("encoder.augment", [](RunConfig& c) -> bool& { return c.encoder.augment; });

    num("synth.embed_dim", [](RunConfig& c) -> std::size_t& { return c.synth.embed_dim; });
    num("synth.prenet1", [](RunConfig& c) -> std::size_t& { return c.synth.prenet1; });
    num("synth.prenet2", [](RunConfig& c) -> std::size_t& { return c.synth.prenet2; });
    num("synth.bank_k", [](RunConfig& c) -> std::size_t& { return c.synth.bank_k; });
    num("synth.bank_channels", [](RunConfig& c) -> std::size_t& { return c.synth.bank_channels; });
    num("synth.highway_layers", [](RunConfig& c) -> std::size_t& { return c.synth.highway_layers; });
    num("synth.gru_hidden", [](RunConfig& c) -> std::size_t& { return c.synth.gru_hidden; });
    num("synth.attention_dim", [](RunConfig& c) -> std::size_t& { return c.synth.attention_dim; });
    num("synth.decoder_hidden", [](RunConfig& c) -> std::size_t& { return c.synth.decoder_hidden; });
    num("synth.reduction", [](RunConfig& c) -> std::size_t& { return c.synth.reduction; });
    num("synth.max_decoder_steps", [](RunConfig& c) -> std::size_t& { return c.synth.max_decoder_steps; });
    num("synth.stop_threshold", [](RunConfig& c) -> double& { return c.synth.stop_threshold; });
    num("synth.cyc_weight", [](RunConfig& c) -> double& { return c.synth.cyc_weight; });
    num("synth.dropout_keep", [](RunConfig& c) -> double& { return c.synth.dropout_keep; });
    num("synth.steps", [](RunConfig& c) -> std::size_t& { return c.synth.steps; });
    num("synth.lr", [](RunConfig& c) -> double& { return c.synth.lr; });
    num("synth.voicing_threshold", [](RunConfig& c) -> double& { return c.synth.voicing_threshold; });

    num("vocoder.cond_dim", [](RunConfig& c) -> std::size_t& { return c.vocoder.cond_dim; });
    num("vocoder.gru_hidden", [](RunConfig& c) -> std::size_t& { return c.vocoder.gru_hidden; });
    num("vocoder.fc_hidden", [](RunConfig& c) -> std::size_t& { return c.vocoder.fc_hidden; });
    num("vocoder.quant_channels", [](RunConfig& c) -> int& { return c.vocoder.quant_channels; });
    num("vocoder.class_embed_dim", [](RunConfig& c) -> std::size_t& { return c.vocoder.class_embed_dim; });
    num("vocoder.steps", [](RunConfig& c) -> std::size_t& { return c.vocoder.steps; });
    num("vocoder.lr", [](RunConfig& c) -> double& { return c.vocoder.lr; });
    num("vocoder.crop_samples", [](RunConfig& c) -> std::size_t& { return c.vocoder.crop_samples; });

    num("augment.snr_lo", [](RunConfig& c) -> double& { return c.augment.snr_lo; });
    num("augment.snr_hi", [](RunConfig& c) -> double& { return c.augment.snr_hi; });
    str("augment.speed_factors", [](RunConfig& c) -> std::string& { return c.augment.speed_factors; });
    num("augment.p_noise", [](RunConfig& c) -> double& { return c.augment.p_noise; });
    num("augment.p_reverb", [](RunConfig& c) -> double& { return c.augment.p_reverb; });
    num("augment.p_speed", [](RunConfig& c) -> double& { return c.augment.p_speed; });
    str("augment.noise_pool", [](RunConfig& c) -> std::string& { return c.augment.noise_pool; });
    str("augment.rir_pool", [](RunConfig& c) -> std::string& { return c.augment.rir_pool; });

    num("eval.detector_steps", [](RunConfig& c) -> std::size_t& { return c.eval.detector_steps; });
    num("eval.detector_lr", [](RunConfig& c) -> double& { return c.eval.detector_lr; });

    num("train.seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; });
    return k;
  }();
  return keys;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::vector<double> RunConfig::speed_factor_list() const {
  std::vector<double> out;
  std::stringstream ss(augment.speed_factors);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_num<double>(item, "augment.speed_factors"));
  }
  return out;
}

void apply_config_line(RunConfig& cfg, const std::string& raw, std::size_t lineno) {
  std::string line = raw;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string t = trim(line);
  if (t.empty() || t[0] == '#') return;
  auto eq = t.find('=');
  if (eq == std::string::npos)
    throw ConfigInvalid("line " + std::to_string(lineno) + ": expected key = value");
  std::string key = trim(t.substr(0, eq));
  std::string value = trim(t.substr(eq + 1));
  for (const auto& k : registry()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigInvalid("unknown key '" + key + "' at line " + std::to_string(lineno));
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open config " + path);
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) apply_config_line(cfg, line, ++lineno);
  return cfg;
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : registry()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace vox
