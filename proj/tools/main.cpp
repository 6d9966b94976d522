// SPDX-License-Identifier: Apache-2.0
// stdet: command-line front end for the technique detection toolkit.
//
// Exit status: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stdet/annotation.hpp"
#include "stdet/detector.hpp"
#include "stdet/dsp.hpp"
#include "stdet/evaluation.hpp"
#include "stdet/experiment.hpp"
#include "stdet/simd.hpp"
#include "stdet/runtime.hpp"
#include "stdet/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

json read_json_file(const fs::path &path) {
  try {
    return json::parse(stdet::read_text_file(path));
  } catch (const json::parse_error &e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

stdet::PitchSource pitch_option(const std::string &name) {
  const auto p = stdet::parse_pitch_source(name);
  if (!p)
    throw CLI::ValidationError("--pitch", "expected gt, est or none");
  return *p;
}

std::vector<stdet::Technique> class_option(const std::string &list) {
  if (list.empty())
    return stdet::detection_classes();
  std::vector<stdet::Technique> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto t = stdet::parse_technique(item);
    if (t == stdet::Technique::unknown)
      throw CLI::ValidationError("--classes", "unknown class '" + item + "'");
    out.push_back(t);
  }
  return out;
}

void print_json(const nlohmann::ordered_json &j) { std::cout << j.dump(2) << '\n'; }

// --- stats ----------------------------------------------------------------

struct StatsArgs {
  std::string manifest;
  std::string format = "text";
  bool json = false;
};

int run_stats(const StatsArgs &a) {
  const auto format = stdet::parse_report_format(a.json ? "json" : a.format);
  if (!format)
    throw CLI::ValidationError("--format", "expected text, json or csv");
  const auto corpus = stdet::load_corpus(a.manifest);
  std::cout << stdet::render_report(stdet::corpus_stats(corpus), *format);
  return 0;
}

// --- featurize ------------------------------------------------------------

struct FeaturizeArgs {
  std::string manifest, out, pitch = "none", dsp;
  bool json = false;
};

int run_featurize(const FeaturizeArgs &a) {
  const auto pitch = pitch_option(a.pitch);
  stdet::dsp::DspConfig config;
  if (!a.dsp.empty())
    config = stdet::dsp::dsp_config_from_json(read_json_file(a.dsp));
  const auto corpus = stdet::load_corpus(a.manifest);
  fs::create_directories(a.out);
  nlohmann::ordered_json written = nlohmann::ordered_json::array();
  for (const auto &track : corpus.tracks) {
    const auto features = stdet::featurize_track(track, pitch, config);
    const auto path = fs::path(a.out) / (track.track_id + ".stfe");
    json header = {{"track_id", track.track_id},
                   {"pitch", std::string(stdet::pitch_source_name(pitch))},
                   {"dsp", stdet::dsp::to_json(config)}};
    stdet::dsp::write_feature_cache(path, features, header);
    written.push_back({{"track_id", track.track_id},
                       {"path", path.string()},
                       {"shape", features.shape()}});
    if (!a.json)
      std::cout << path.string() << "  [" << features.dim(0) << " x "
                << features.dim(1) << " x " << features.dim(2) << "]\n";
  }
  if (a.json)
    print_json({{"features", written}});
  return 0;
}

// --- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string spec, out;
  bool json = false;
};

int run_synth(const SynthArgs &a) {
  const auto spec = stdet::synth_spec_from_json(read_json_file(a.spec));
  const auto corpus = stdet::synth_corpus(spec, a.out);
  std::size_t events = 0;
  for (const auto &t : corpus.tracks)
    events += t.events.size();
  const auto manifest = fs::path(a.out) / "manifest.json";
  if (a.json)
    print_json({{"manifest", manifest.string()},
                {"tracks", corpus.tracks.size()},
                {"events", events}});
  else
    std::cout << "wrote " << corpus.tracks.size() << " tracks, " << events
              << " events: " << manifest.string() << '\n';
  return 0;
}

// --- split ----------------------------------------------------------------

struct SplitArgs {
  std::string manifest, out;
  std::size_t k = 7;
  std::uint64_t seed = 0;
};

int run_split(const SplitArgs &a) {
  const auto corpus = stdet::load_corpus(a.manifest);
  const auto text = stdet::to_json(stdet::make_folds(corpus, a.k, a.seed)).dump(2) + "\n";
  if (a.out.empty())
    std::cout << text;
  else
    stdet::write_text_file(a.out, text);
  return 0;
}

// --- train ----------------------------------------------------------------

// Config keys: corpus, out_dir, pitch, validation_singers, exclude_singers,
// dsp, model, train. Without validation_singers the training tracks double
// as the validation set.
struct TrainArgs {
  std::string config;
  bool json = false, quiet = false;
};

int run_train(const TrainArgs &a) {
  const fs::path config_path(a.config);
  const json j = read_json_file(config_path);
  static const std::set<std::string> allowed = {
      "corpus", "out_dir", "pitch", "validation_singers", "exclude_singers",
      "dsp", "model", "train"};
  for (const auto &[key, value] : j.items())
    if (!allowed.count(key))
      throw std::runtime_error("unknown train config key '" + key + "'");
  if (!j.contains("corpus") || !j.contains("out_dir"))
    throw std::runtime_error("train config needs 'corpus' and 'out_dir'");
  const auto base = config_path.parent_path();
  auto resolve = [&](const std::string &p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  const auto pitch_name = j.value("pitch", std::string("none"));
  const auto parsed_pitch = stdet::parse_pitch_source(pitch_name);
  if (!parsed_pitch)
    throw std::runtime_error("unknown pitch source '" + pitch_name + "'");
  const auto pitch = *parsed_pitch;
  stdet::dsp::DspConfig dsp;
  if (j.contains("dsp"))
    dsp = stdet::dsp::dsp_config_from_json(j["dsp"]);
  stdet::ModelConfig mc;
  if (j.contains("model"))
    mc = stdet::model_config_from_json(j["model"]);
  mc.input_channels = pitch == stdet::PitchSource::none ? 1 : 2;
  stdet::TrainConfig tc;
  if (j.contains("train"))
    tc = stdet::train_config_from_json(j["train"]);
  const auto val_list = j.value("validation_singers", std::vector<std::string>{});
  const auto excl_list = j.value("exclude_singers", std::vector<std::string>{});
  const std::set<std::string> val(val_list.begin(), val_list.end());
  const std::set<std::string> excluded(excl_list.begin(), excl_list.end());

  const auto corpus = stdet::load_corpus(resolve(j["corpus"].get<std::string>()));
  const fs::path out_dir = resolve(j["out_dir"].get<std::string>());

  std::vector<std::pair<const stdet::TrackAnnotation *, stdet::dsp::FeatureTensor>>
      train_set, val_set;
  for (const auto &t : corpus.tracks) {
    if (excluded.count(t.singer_id))
      continue;
    auto &dest = val.count(t.singer_id) ? val_set : train_set;
    dest.emplace_back(&t, stdet::featurize_track(t, pitch, dsp));
  }
  if (train_set.empty())
    throw std::runtime_error("no training tracks");
  std::vector<const stdet::dsp::FeatureTensor *> fit;
  for (const auto &[t, f] : train_set)
    fit.push_back(&f);
  const auto norm = stdet::Normalizer::fit(fit);
  const auto layout = stdet::clip_layout(tc.clip_len_s, dsp.hop_s);
  auto to_clips = [&](auto &set) {
    std::vector<stdet::Clip> clips;
    for (auto &[t, f] : set) {
      norm.apply(f);
      const auto roll = stdet::rasterize(t->events, f.dim(2), dsp.hop_s, mc.class_order);
      auto c = stdet::segment_clips(t->track_id, f, roll, layout);
      std::move(c.begin(), c.end(), std::back_inserter(clips));
    }
    return clips;
  };
  const auto train_clips = to_clips(train_set);
  const auto val_clips = val_set.empty() ? train_clips : to_clips(val_set);

  auto model = stdet::build_model(mc, tc.seed);
  const auto result = stdet::train(model, train_clips, val_clips, tc,
                                   [&](const stdet::EpochRecord &r) {
                                     if (!a.quiet)
                                       std::fprintf(stderr, "epoch %zu train %.5f val %.5f\n",
                                                    r.epoch, r.train_loss, r.val_loss);
                                   });
  fs::create_directories(out_dir);
  const auto weights = out_dir / "model.stdk";
  stdet::save_model(weights, model, norm,
                    {{"pitch", std::string(stdet::pitch_source_name(pitch))},
                     {"dsp", stdet::dsp::to_json(dsp)},
                     {"clip_len_s", tc.clip_len_s}});
  nlohmann::ordered_json history = nlohmann::ordered_json::array();
  for (const auto &r : result.history)
    history.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss},
                       {"val_loss", r.val_loss}});
  nlohmann::ordered_json manifest;
  manifest["weights"] = weights.string();
  manifest["pitch"] = std::string(stdet::pitch_source_name(pitch));
  manifest["model"] = stdet::to_json(mc);
  manifest["train"] = stdet::to_json(tc);
  manifest["dsp"] = stdet::dsp::to_json(dsp);
  manifest["train_clips"] = train_clips.size();
  manifest["validation_clips"] = val_clips.size();
  manifest["best_epoch"] = result.best_epoch;
  manifest["best_val_loss"] = result.best_val_loss;
  manifest["steps"] = result.steps;
  manifest["stopped_early"] = result.stopped_early;
  manifest["history"] = history;
  stdet::write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  if (a.json)
    print_json(manifest);
  else
    std::cout << "best epoch " << result.best_epoch << " (val loss "
              << result.best_val_loss << "), weights: " << weights.string() << '\n';
  return 0;
}

// --- predict --------------------------------------------------------------

struct PredictArgs {
  std::string weights, manifest, out;
  stdet::DecodeConfig decode;
  bool json = false;
};

int run_predict(const PredictArgs &a) {
  if (a.decode.median_width > 1 && a.decode.median_width % 2 == 0)
    throw CLI::ValidationError("--median", "width must be odd");
  const auto saved = stdet::load_model(a.weights);
  const auto &h = saved.header;
  const auto pitch =
      stdet::parse_pitch_source(h.value("pitch", std::string("none")))
          .value_or(stdet::PitchSource::none);
  const auto dsp = h.contains("dsp") ? stdet::dsp::dsp_config_from_json(h["dsp"])
                                     : stdet::dsp::DspConfig{};
  const auto layout = stdet::clip_layout(h.value("clip_len_s", 10.0), dsp.hop_s);
  const auto corpus = stdet::load_corpus(a.manifest);
  fs::create_directories(a.out);
  nlohmann::ordered_json written = nlohmann::ordered_json::array();
  for (const auto &t : corpus.tracks) {
    auto features = stdet::featurize_track(t, pitch, dsp);
    saved.normalizer.apply(features);
    const auto probs = stdet::predict_track(saved.model, features, dsp.hop_s, layout);
    const auto events = stdet::decode_events(probs, a.decode);
    const auto path = fs::path(a.out) / (t.track_id + ".events.csv");
    stdet::write_text_file(path, stdet::serialize_events(events));
    written.push_back({{"track_id", t.track_id}, {"path", path.string()},
                       {"events", events.size()}});
    if (!a.json)
      std::cout << path.string() << "  " << events.size() << " events\n";
  }
  if (a.json)
    print_json({{"predictions", written}});
  return 0;
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string manifest, pred_dir, classes, classwise;
  bool json = false;
};

int run_eval(const EvalArgs &a) {
  const auto class_order = class_option(a.classes);
  const auto corpus = stdet::load_corpus(a.manifest);
  auto scores = stdet::empty_scores(class_order);
  for (const auto &t : corpus.tracks) {
    const auto path = fs::path(a.pred_dir) / (t.track_id + ".events.csv");
    if (!fs::exists(path))
      throw std::runtime_error("missing prediction file " + path.string());
    std::vector<stdet::TechniqueEvent> pred;
    try {
      pred = stdet::parse_events(stdet::read_text_file(path));
    } catch (const stdet::ParseError &e) {
      throw std::runtime_error(path.string() + ": " + e.what());
    }
    scores += stdet::score_track(t.events, pred, t.duration_s, class_order);
  }
  const auto report = stdet::aggregate(scores);
  if (!a.classwise.empty())
    stdet::write_text_file(a.classwise, stdet::classwise_report(report));
  if (a.json)
    print_json(stdet::to_json(report));
  else
    std::cout << stdet::metrics_text(report);
  return 0;
}

// --- experiment -----------------------------------------------------------

struct ExperimentArgs {
  std::string config;
  std::size_t jobs = 0;
  bool json = false, quiet = false;
};

int run_experiment_cmd(const ExperimentArgs &a) {
  const fs::path path(a.config);
  auto config = stdet::experiment_config_from_json(read_json_file(path), path.parent_path());
  if (a.jobs > 0)
    config.jobs = a.jobs;
  if (config.corpus.empty())
    throw std::runtime_error("experiment config needs 'corpus'");
  const auto corpus = stdet::load_corpus(config.corpus);
  const auto plan = stdet::make_folds(corpus, config.k, config.fold_seed);
  stdet::ProgressCallback progress;
  if (!a.quiet)
    progress = [](const std::string &msg) { std::fprintf(stderr, "%s\n", msg.c_str()); };
  const auto results = stdet::run_experiment(corpus, plan, config, progress);
  if (a.json) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto &c : results.conditions) {
      nlohmann::ordered_json folds = nlohmann::ordered_json::array();
      for (const auto &f : c.folds)
        folds.push_back({{"fold", f.fold}, {"best_epoch", f.training.best_epoch},
                         {"metrics", stdet::to_json(f.metrics)}});
      rows.push_back({{"condition", c.condition.name},
                      {"macro_f", c.macro_f},
                      {"micro_f", c.micro_f},
                      {"precision", c.precision},
                      {"recall", c.recall},
                      {"pooled", stdet::to_json(c.pooled)},
                      {"folds", folds}});
    }
    print_json({{"results", rows}});
  } else {
    std::cout << stdet::results_csv(results) << '\n' << stdet::classwise_csv(results);
    for (const auto &c : results.conditions)
      std::cout << '\n' << c.condition.name << " (pooled)\n" << stdet::metrics_text(c.pooled);
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  stdet::configure_allocator();
  CLI::App app{"Singing technique detection toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "stdet 1.0 (kernels: " +
                                        std::string(stdet::simd::isa_name(stdet::simd::active_isa())) + ")");

  StatsArgs stats;
  auto *c_stats = app.add_subcommand("stats", "Print corpus statistics");
  c_stats->add_option("manifest", stats.manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
  c_stats->add_option("--format", stats.format, "text, json or csv");
  c_stats->add_flag("--json", stats.json, "Same as --format json");

  FeaturizeArgs feat;
  auto *c_feat = app.add_subcommand("featurize", "Write feature caches for every track");
  c_feat->add_option("manifest", feat.manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
  c_feat->add_option("--out", feat.out, "Output directory")->required();
  c_feat->add_option("--pitch", feat.pitch, "Pitch channel: none, gt or est");
  c_feat->add_option("--dsp", feat.dsp, "DSP config JSON")->check(CLI::ExistingFile);
  c_feat->add_flag("--json", feat.json, "Machine-readable summary");

  SynthArgs synth;
  auto *c_synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  c_synth->add_option("spec", synth.spec, "Synth spec JSON")->required()->check(CLI::ExistingFile);
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_flag("--json", synth.json, "Machine-readable summary");

  SplitArgs split;
  auto *c_split = app.add_subcommand("split", "Plan singer-disjoint folds");
  c_split->add_option("manifest", split.manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
  c_split->add_option("-k", split.k, "Number of folds")->check(CLI::PositiveNumber);
  c_split->add_option("--seed", split.seed, "Shuffle seed");
  c_split->add_option("--out", split.out, "Write the plan here instead of stdout");

  TrainArgs trn;
  auto *c_train = app.add_subcommand("train", "Train one detector");
  c_train->add_option("config", trn.config, "Train config JSON")->required()->check(CLI::ExistingFile);
  c_train->add_flag("--json", trn.json, "Print the run manifest as JSON");
  c_train->add_flag("--quiet", trn.quiet, "No per-epoch progress");

  PredictArgs pred;
  auto *c_pred = app.add_subcommand("predict", "Write predicted events for every track");
  c_pred->add_option("weights", pred.weights, "Weights file")->required()->check(CLI::ExistingFile);
  c_pred->add_option("manifest", pred.manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
  c_pred->add_option("--out", pred.out, "Output directory")->required();
  c_pred->add_option("--threshold", pred.decode.threshold, "Activation threshold");
  c_pred->add_option("--median", pred.decode.median_width, "Median filter width (odd, 0 = off)");
  c_pred->add_option("--min-duration", pred.decode.min_duration_s, "Shortest kept event in seconds");
  c_pred->add_flag("--json", pred.json, "Machine-readable summary");

  EvalArgs ev;
  auto *c_eval = app.add_subcommand("eval", "Score predictions against a reference corpus");
  c_eval->add_option("manifest", ev.manifest, "Reference manifest")->required()->check(CLI::ExistingFile);
  c_eval->add_option("pred_dir", ev.pred_dir, "Directory of <track>.events.csv")->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--classes", ev.classes, "Comma-separated class list (default: the nine detection classes)");
  c_eval->add_option("--classwise", ev.classwise, "Also write a class-wise CSV here");
  c_eval->add_flag("--json", ev.json, "Machine-readable metrics");

  ExperimentArgs ex;
  auto *c_exp = app.add_subcommand("experiment", "Run the cross-validated condition grid");
  c_exp->add_option("config", ex.config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  c_exp->add_option("--jobs", ex.jobs, "Parallel condition/fold workers (overrides config)");
  c_exp->add_flag("--json", ex.json, "Machine-readable results");
  c_exp->add_flag("--quiet", ex.quiet, "No progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_stats) return run_stats(stats);
    if (*c_feat) return run_featurize(feat);
    if (*c_synth) return run_synth(synth);
    if (*c_split) return run_split(split);
    if (*c_train) return run_train(trn);
    if (*c_pred) return run_predict(pred);
    if (*c_eval) return run_eval(ev);
    if (*c_exp) return run_experiment_cmd(ex);
  } catch (const CLI::ValidationError &e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
