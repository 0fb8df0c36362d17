#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vox/augment.hpp"
#include "vox/eval.hpp"
#include "vox/pipeline.hpp"
#include "vox/speaker_encoder.hpp"
#include "vox/synthesizer.hpp"
#include "vox/vocoder.hpp"

namespace {

vox::RunConfig load_config(const std::string& path) {
  return path.empty() ? vox::RunConfig{} : vox::parse_config(path);
}

std::vector<vox::TrialScore> score_manifest(const vox::Manifest& m, bool genuine,
                                            const vox::nn::ParamSet& det,
                                            const vox::MelConfig& mel_cfg) {
  std::vector<vox::TrialScore> trials;
  for (const auto& r : m.rows) {
    vox::TrialScore t;
    t.utt_id = r.utt_id;
    t.genuine = genuine;
    t.score = vox::baseline_detector_score(vox::load_wav(r.wav_path), det, mel_cfg);
    trials.push_back(std::move(t));
  }
  return trials;
}

int run(int argc, char** argv) {
  CLI::App app{"desk-scale multi-speaker speech synthesis and spoofing-evaluation toolkit"};
  app.require_subcommand(1);
  std::string workdir;
  app.add_option("--workdir", workdir, "resolve relative paths from this directory");

  std::string cfg_path, manifest_path, out_path, encoder_path, synth_path, vocoder_path;
  std::uint64_t seed_flag = 0;
  bool seed_given = false;

  auto* toy = app.add_subcommand("toy-data", "generate the synthetic verification corpus");
  std::size_t n_speakers = 4, n_utts = 20;
  std::uint64_t toy_seed = 7;
  toy->add_option("--out", out_path, "output directory")->required();
  toy->add_option("--speakers", n_speakers, "number of speakers");
  toy->add_option("--utts", n_utts, "utterances per speaker");
  toy->add_option("--seed", toy_seed, "corpus seed");

  auto* tenc = app.add_subcommand("train-encoder", "train the speaker encoder");
  tenc->add_option("--config", cfg_path, "config file");
  tenc->add_option("--manifest", manifest_path, "training manifest")->required();
  tenc->add_option("--out", out_path, "checkpoint path")->required();

  auto* tsyn = app.add_subcommand("train-synth", "train the text-to-mel synthesizer");
  tsyn->add_option("--config", cfg_path, "config file");
  tsyn->add_option("--manifest", manifest_path, "training manifest")->required();
  tsyn->add_option("--encoder", encoder_path, "speaker encoder checkpoint")->required();
  tsyn->add_option("--out", out_path, "checkpoint path")->required();

  auto* tvoc = app.add_subcommand("train-vocoder", "train the neural vocoder");
  tvoc->add_option("--config", cfg_path, "config file");
  tvoc->add_option("--manifest", manifest_path, "training manifest")->required();
  tvoc->add_option("--out", out_path, "checkpoint path")->required();

  auto* syn = app.add_subcommand("synthesize", "text + reference audio -> waveform");
  std::string text, mode_str = "argmax";
  std::vector<std::string> refs;
  syn->add_option("--config", cfg_path, "config file");
  syn->add_option("--text", text, "text to speak")->required();
  syn->add_option("--ref", refs, "reference wav(s) for the target speaker")->required();
  syn->add_option("--encoder", encoder_path, "speaker encoder checkpoint")->required();
  syn->add_option("--synth", synth_path, "synthesizer checkpoint")->required();
  syn->add_option("--vocoder", vocoder_path, "vocoder checkpoint")->required();
  syn->add_option("--out", out_path, "output wav")->required();
  syn->add_option("--mode", mode_str, "argmax or sample")
      ->check(CLI::IsMember({"argmax", "sample"}));
  syn->add_option("--seed", seed_flag, "sampling seed")->each([&](const std::string&) {
    seed_given = true;
  });

  auto* aug = app.add_subcommand("augment", "apply the augmentation recipe to one wav");
  std::string in_path;
  aug->add_option("--config", cfg_path, "config file");
  aug->add_option("--in", in_path, "input wav")->required();
  aug->add_option("--out", out_path, "output wav")->required();
  aug->add_option("--seed", seed_flag, "draw seed")->each([&](const std::string&) {
    seed_given = true;
  });

  auto* ev = app.add_subcommand("evaluate", "EER/DSR of a score file or of the baseline detector");
  std::string scores_path, genuine_path, spoof_path, fake_path, out_scores;
  ev->add_option("--config", cfg_path, "config file");
  ev->add_option("--scores", scores_path, "existing trial score file");
  ev->add_option("--genuine", genuine_path, "genuine training/trial manifest");
  ev->add_option("--spoof", spoof_path, "spoof training/trial manifest");
  ev->add_option("--fake", fake_path, "generated-audio manifest for DSR");
  ev->add_option("--out-scores", out_scores, "write the scored trials here");

  auto* rep = app.add_subcommand("report", "tabulate EERs and DSR/WDSR from score files");
  std::vector<std::string> entries, weights;
  rep->add_option("--entry", entries, "detector:dataset:method:score_file")->required();
  rep->add_option("--weight", weights, "detector=weight (default 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (!workdir.empty()) std::filesystem::current_path(workdir);

  if (*toy) {
    vox::Manifest m = vox::generate_toy_corpus(out_path, n_speakers, n_utts, toy_seed);
    std::printf("wrote %zu utterances for %zu speakers to %s\n", m.rows.size(), m.n_speakers(),
                out_path.c_str());
  } else if (*tenc) {
    vox::RunConfig cfg = load_config(cfg_path);
    auto result = vox::train_speaker_encoder(vox::parse_manifest(manifest_path), cfg);
    result.params.save(out_path);
    result.opt.save(out_path + ".opt");
    std::printf("final_loss %.6f\n", result.log.empty() ? 0.0 : result.log.back().loss);
    std::printf("train_accuracy %.4f\n", result.final_accuracy);
  } else if (*tsyn) {
    vox::RunConfig cfg = load_config(cfg_path);
    auto enc = vox::nn::ParamSet::load(encoder_path);
    auto result = vox::train_synthesizer(vox::parse_manifest(manifest_path), enc, cfg);
    result.params.save(out_path);
    result.opt.save(out_path + ".opt");
    if (!result.log.empty()) {
      const auto& l = result.log.back();
      std::printf("final_loss %.6f l_synthesis %.6f l_cyc %.6f l_stop %.6f\n", l.total,
                  l.l_synthesis, l.l_cyc, l.l_stop);
    }
  } else if (*tvoc) {
    vox::RunConfig cfg = load_config(cfg_path);
    auto result = vox::train_vocoder(vox::parse_manifest(manifest_path), cfg);
    result.params.save(out_path);
    result.opt.save(out_path + ".opt");
    std::printf("final_loss %.6f\n", result.log.empty() ? 0.0 : result.log.back().loss);
  } else if (*syn) {
    vox::RunConfig cfg = load_config(cfg_path);
    std::vector<vox::Waveform> ref_wavs;
    for (const auto& p : refs) ref_wavs.push_back(vox::load_wav(p));
    const auto mode =
        mode_str == "argmax" ? vox::SampleMode::kArgmax : vox::SampleMode::kSample;
    const std::uint64_t seed = seed_given ? seed_flag : cfg.train.seed;
    auto out = vox::synthesize(text, ref_wavs, vox::nn::ParamSet::load(encoder_path),
                               vox::nn::ParamSet::load(synth_path),
                               vox::nn::ParamSet::load(vocoder_path), cfg, mode, seed);
    vox::save_wav(out.wav, out_path);
    std::printf("tokens %zu\nframes %zu\nsamples %zu\nstop_reason %s\n", out.token_count,
                out.mel_frames, out.wav.samples.size(), out.stop_reason.c_str());
  } else if (*aug) {
    vox::RunConfig cfg = load_config(cfg_path);
    vox::AugmentSpec spec;
    spec.snr_lo = cfg.augment.snr_lo;
    spec.snr_hi = cfg.augment.snr_hi;
    spec.speed_factors = cfg.speed_factor_list();
    spec.p_noise = cfg.augment.p_noise;
    spec.p_reverb = cfg.augment.p_reverb;
    spec.p_speed = cfg.augment.p_speed;
    if (!cfg.augment.noise_pool.empty()) spec.noise_pool = vox::load_pool(cfg.augment.noise_pool);
    if (!cfg.augment.rir_pool.empty()) spec.rir_pool = vox::load_pool(cfg.augment.rir_pool);
    vox::Rng rng(seed_given ? seed_flag : cfg.train.seed);
    auto [w, rec] = vox::augment(vox::load_wav(in_path), spec, rng);
    vox::save_wav(w, out_path);
    std::printf("record %s\n", rec.serialize().c_str());
  } else if (*ev) {
    vox::RunConfig cfg = load_config(cfg_path);
    std::vector<vox::TrialScore> trials;
    vox::EerResult eer;
    if (!scores_path.empty()) {
      trials = vox::read_scores(scores_path);
      eer = vox::compute_eer(trials);
    } else {
      if (genuine_path.empty() || spoof_path.empty())
        throw CLI::RequiredError("--scores or both --genuine and --spoof");
      auto gen_m = vox::parse_manifest(genuine_path);
      auto spf_m = vox::parse_manifest(spoof_path);
      auto det = vox::baseline_detector_train(gen_m, spf_m, cfg);
      trials = score_manifest(gen_m, true, det, cfg.mel);
      auto spoof_trials = score_manifest(spf_m, false, det, cfg.mel);
      trials.insert(trials.end(), spoof_trials.begin(), spoof_trials.end());
      eer = vox::compute_eer(trials);
      if (!fake_path.empty()) {
        auto fake_m = vox::parse_manifest(fake_path);
        std::vector<double> fake_scores;
        for (const auto& r : fake_m.rows)
          fake_scores.push_back(
              vox::baseline_detector_score(vox::load_wav(r.wav_path), det, cfg.mel));
        std::printf("DSR %.4f\n", vox::compute_dsr(fake_scores, eer.threshold));
      }
    }
    if (!out_scores.empty()) vox::write_scores(trials, out_scores);
    std::printf("EER %.4f\n", eer.eer);
    std::printf("THRESHOLD %.6f\n", eer.threshold);
  } else if (*rep) {
    std::vector<vox::ReportEntry> report_entries;
    std::map<std::string, std::vector<double>> per_detector_dsr;
    for (const auto& spec : entries) {
      std::vector<std::string> f;
      std::size_t start = 0;
      for (int i = 0; i < 3; ++i) {
        const std::size_t colon = spec.find(':', start);
        if (colon == std::string::npos)
          throw vox::ParseError("entry '" + spec + "' is not detector:dataset:method:path");
        f.push_back(spec.substr(start, colon - start));
        start = colon + 1;
      }
      f.push_back(spec.substr(start));
      auto trials = vox::read_scores(f[3]);
      const auto eer = vox::compute_eer(trials);
      report_entries.push_back({f[0], f[1], f[2], eer.eer});
      std::vector<double> fake_scores;
      for (const auto& t : trials)
        if (!t.genuine) fake_scores.push_back(t.score);
      per_detector_dsr[f[0]].push_back(vox::compute_dsr(fake_scores, eer.threshold));
    }
    std::vector<std::pair<std::string, double>> dsrs, wlist;
    for (const auto& [name, values] : per_detector_dsr) {
      double sum = 0.0;
      for (double v : values) sum += v;
      dsrs.emplace_back(name, sum / static_cast<double>(values.size()));
      wlist.emplace_back(name, 1.0);
    }
    for (const auto& w : weights) {
      const std::size_t eq = w.find('=');
      if (eq == std::string::npos)
        throw vox::ParseError("weight '" + w + "' is not detector=value");
      const std::string name = w.substr(0, eq);
      bool found = false;
      for (auto& [n, val] : wlist)
        if (n == name) {
          val = std::stod(w.substr(eq + 1));
          found = true;
        }
      if (!found) throw vox::MissingWeight("weight names unknown detector " + name);
    }
    std::cout << vox::render_report(report_entries, dsrs, vox::compute_wdsr(dsrs, wlist));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::Error& e) {
    std::cerr << "error: Usage: " << e.what() << "\n";
    return 2;
  } catch (const vox::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 1;
  }
}
