// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "../json_keys.hpp"
#include "stdet/experiment.hpp"
#include "stdet/nn/rng.hpp"

namespace stdet {

const std::vector<Condition> &condition_grid() {
  static const std::vector<Condition> grid = {
      {"BCE", nn::LossKind::bce, PitchSource::none},
      {"Focal", nn::LossKind::focal, PitchSource::none},
      {"BCE-GT", nn::LossKind::bce, PitchSource::ground_truth},
      {"BCE-EST", nn::LossKind::bce, PitchSource::estimated},
      {"Focal-GT", nn::LossKind::focal, PitchSource::ground_truth},
      {"Focal-EST", nn::LossKind::focal, PitchSource::estimated}};
  return grid;
}

std::optional<Condition> find_condition(std::string_view name) {
  for (const auto &c : condition_grid())
    if (c.name == name)
      return c;
  return std::nullopt;
}

const ConditionOutcome *ExperimentResults::find(std::string_view name) const {
  for (const auto &c : conditions)
    if (c.condition.name == name)
      return &c;
  return nullptr;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json &j,
                                             const std::filesystem::path &base_dir) {
  detail::reject_unknown_keys<ExperimentError>(
      j,
      {"corpus", "out_dir", "k", "fold_seed", "conditions", "dsp", "model",
       "train", "decode", "jobs", "save_models", "folds"},
      "experiment config");
  ExperimentConfig c;
  auto resolve = [&](const std::string &p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  if (j.contains("corpus"))
    c.corpus = resolve(j["corpus"].get<std::string>());
  if (j.contains("out_dir"))
    c.out_dir = resolve(j["out_dir"].get<std::string>());
  c.k = j.value("k", c.k);
  c.fold_seed = j.value("fold_seed", c.fold_seed);
  c.jobs = j.value("jobs", c.jobs);
  c.save_models = j.value("save_models", c.save_models);
  c.folds = j.value("folds", c.folds);
  if (j.contains("conditions")) {
    c.conditions.clear();
    for (const auto &name : j["conditions"]) {
      const auto cond = find_condition(name.get<std::string>());
      if (!cond)
        throw ExperimentError("unknown condition '" + name.get<std::string>() + "'");
      c.conditions.push_back(*cond);
    }
    if (c.conditions.empty())
      throw ExperimentError("experiment config lists no conditions");
  }
  if (j.contains("dsp"))
    c.dsp = dsp::dsp_config_from_json(j["dsp"]);
  if (j.contains("model"))
    c.model = model_config_from_json(j["model"]);
  if (j.contains("train"))
    c.train = train_config_from_json(j["train"]);
  if (j.contains("decode"))
    c.decode = decode_config_from_json(j["decode"]);
  if (c.k == 0)
    throw ExperimentError("k must be positive");
  return c;
}

nlohmann::json to_json(const ExperimentConfig &c) {
  nlohmann::json conditions = nlohmann::json::array();
  for (const auto &cond : c.conditions)
    conditions.push_back(cond.name);
  return {{"corpus", c.corpus.string()},
          {"out_dir", c.out_dir.string()},
          {"k", c.k},
          {"fold_seed", c.fold_seed},
          {"conditions", conditions},
          {"dsp", dsp::to_json(c.dsp)},
          {"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"decode", to_json(c.decode)},
          {"jobs", c.jobs},
          {"save_models", c.save_models},
          {"folds", c.folds}};
}

namespace {

/// Runs fn(0..n-1) on up to `jobs` threads. The first exception (by index)
/// is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)> &fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back(worker);
    for (auto &t : pool)
      t.join();
  }
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}

std::uint64_t fold_seed(std::uint64_t base, std::size_t fold) {
  return nn::SplitMix64(base ^ (0xA0761D6478BD642FULL * (fold + 1)))();
}

struct TrackData {
  const TrackAnnotation *track = nullptr;
  FrameRoll targets;
  std::map<PitchSource, dsp::FeatureTensor> features;
};

std::vector<const TrackData *> select(const std::vector<TrackData> &data,
                                      const std::vector<std::string> &singers) {
  const std::set<std::string> wanted(singers.begin(), singers.end());
  std::vector<const TrackData *> out;
  for (const auto &d : data)
    if (wanted.count(d.track->singer_id))
      out.push_back(&d);
  // Track order within a split must not matter.
  std::sort(out.begin(), out.end(), [](const TrackData *a, const TrackData *b) {
    return a->track->track_id < b->track->track_id;
  });
  return out;
}

std::vector<Clip> make_clips(const std::vector<const TrackData *> &tracks,
                             PitchSource pitch, const Normalizer &norm,
                             const ClipLayout &layout) {
  std::vector<Clip> clips;
  for (const auto *d : tracks) {
    auto features = d->features.at(pitch);
    norm.apply(features);
    auto c = segment_clips(d->track->track_id, features, d->targets, layout);
    std::move(c.begin(), c.end(), std::back_inserter(clips));
  }
  return clips;
}

FoldOutcome run_fold(const std::vector<TrackData> &data, const Fold &fold,
                     const Condition &cond, const ExperimentConfig &config,
                     const ProgressCallback &progress) {
  const auto train_tracks = select(data, fold.train);
  const auto val_tracks = select(data, fold.validation);
  const auto test_tracks = select(data, fold.test);
  if (train_tracks.empty() || val_tracks.empty() || test_tracks.empty())
    throw ExperimentError("a split has no tracks");

  std::vector<const dsp::FeatureTensor *> fit_set;
  for (const auto *d : train_tracks)
    fit_set.push_back(&d->features.at(cond.pitch));
  const Normalizer norm = Normalizer::fit(fit_set);

  const auto layout = clip_layout(config.train.clip_len_s, config.dsp.hop_s);
  const auto train_clips = make_clips(train_tracks, cond.pitch, norm, layout);
  const auto val_clips = make_clips(val_tracks, cond.pitch, norm, layout);

  ModelConfig mc = config.model;
  mc.input_channels = cond.pitch == PitchSource::none ? 1 : 2;
  TrainConfig tc = config.train;
  tc.loss.kind = cond.loss;
  tc.seed = fold_seed(config.train.seed, fold.index);
  auto model = build_model(mc, tc.seed);

  const std::string tag = cond.name + " fold " + std::to_string(fold.index);
  FoldOutcome out;
  out.fold = fold.index;
  out.training = train(model, train_clips, val_clips, tc, [&](const EpochRecord &r) {
    if (progress) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s epoch %zu train %.5f val %.5f",
                    tag.c_str(), r.epoch, r.train_loss, r.val_loss);
      progress(buf);
    }
  });

  const auto fold_dir = config.out_dir.empty()
                            ? std::filesystem::path()
                            : config.out_dir / cond.name / ("fold" + std::to_string(fold.index));
  if (!fold_dir.empty())
    std::filesystem::create_directories(fold_dir / "predictions");

  out.scores = empty_scores(mc.class_order);
  for (const auto *d : test_tracks) {
    auto features = d->features.at(cond.pitch);
    norm.apply(features);
    const auto probs = predict_track(model, features, config.dsp.hop_s, layout);
    const auto events = decode_events(probs, config.decode);
    out.scores += score_track(d->track->events, events, d->track->duration_s,
                              mc.class_order);
    if (!fold_dir.empty())
      write_text_file(fold_dir / "predictions" / (d->track->track_id + ".events.csv"),
                      serialize_events(events));
  }
  out.metrics = aggregate(out.scores);

  if (!fold_dir.empty()) {
    nlohmann::ordered_json history = nlohmann::ordered_json::array();
    for (const auto &r : out.training.history)
      history.push_back({{"epoch", r.epoch},
                         {"train_loss", r.train_loss},
                         {"val_loss", r.val_loss}});
    nlohmann::ordered_json manifest;
    manifest["condition"] = cond.name;
    manifest["fold"] = fold.index;
    manifest["test"] = fold.test;
    manifest["validation"] = fold.validation;
    manifest["train"] = fold.train;
    manifest["loss"] = std::string(nn::loss_name(cond.loss));
    manifest["pitch"] = std::string(pitch_source_name(cond.pitch));
    manifest["train_config"] = to_json(tc);
    manifest["model"] = to_json(mc);
    manifest["decode"] = to_json(config.decode);
    manifest["best_epoch"] = out.training.best_epoch;
    manifest["best_val_loss"] = out.training.best_val_loss;
    manifest["steps"] = out.training.steps;
    manifest["stopped_early"] = out.training.stopped_early;
    manifest["history"] = history;
    manifest["metrics"] = to_json(out.metrics);
    write_text_file(fold_dir / "manifest.json", manifest.dump(2) + "\n");
    if (config.save_models)
      save_model(fold_dir / "model.stdk", model, norm,
                 {{"condition", cond.name}, {"fold", fold.index}});
  }
  if (progress) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s done: macro-F %.4f micro-F %.4f",
                  tag.c_str(), out.metrics.macro_f, out.metrics.micro_f);
    progress(buf);
  }
  return out;
}

}  // namespace

ExperimentResults run_experiment(const Corpus &corpus, const FoldPlan &plan,
                                 const ExperimentConfig &config,
                                 const ProgressCallback &user_progress) {
  if (config.conditions.empty())
    throw ExperimentError("no conditions to run");
  if (plan.folds.empty())
    throw ExperimentError("fold plan has no folds");
  config.dsp.validate();
  config.model.validate();
  config.train.validate();

  std::mutex progress_mutex;
  ProgressCallback progress;
  if (user_progress)
    progress = [&](const std::string &msg) {
      std::lock_guard lock(progress_mutex);
      user_progress(msg);
    };

  std::set<PitchSource> sources;
  for (const auto &c : config.conditions)
    sources.insert(c.pitch);

  std::vector<TrackData> data(corpus.tracks.size());
  parallel_for(data.size(), config.jobs, [&](std::size_t i) {
    auto &d = data[i];
    d.track = &corpus.tracks[i];
    try {
      for (auto s : sources)
        d.features[s] = featurize_track(*d.track, s, config.dsp);
    } catch (const std::exception &e) {
      throw ExperimentError("featurizing '" + d.track->track_id + "': " + e.what());
    }
    const std::size_t frames = d.features.begin()->second.dim(2);
    d.targets = rasterize(d.track->events, frames, config.dsp.hop_s,
                          config.model.class_order);
  });
  if (progress)
    progress("featurized " + std::to_string(data.size()) + " tracks");

  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    write_text_file(config.out_dir / "folds.json", to_json(plan).dump(2) + "\n");
    write_text_file(config.out_dir / "config.json", to_json(config).dump(2) + "\n");
  }

  std::vector<const Fold *> folds;
  for (const auto &f : plan.folds)
    if (config.folds.empty() ||
        std::find(config.folds.begin(), config.folds.end(), f.index) != config.folds.end())
      folds.push_back(&f);
  for (auto i : config.folds)
    if (i >= plan.folds.size())
      throw ExperimentError("fold " + std::to_string(i) + " is not in the plan");
  const std::size_t n_folds = folds.size();
  ExperimentResults results;
  results.conditions.resize(config.conditions.size());
  for (std::size_t c = 0; c < config.conditions.size(); ++c) {
    results.conditions[c].condition = config.conditions[c];
    results.conditions[c].folds.resize(n_folds);
  }
  parallel_for(config.conditions.size() * n_folds, config.jobs, [&](std::size_t task) {
    const std::size_t c = task / n_folds, f = task % n_folds;
    const auto &cond = config.conditions[c];
    try {
      results.conditions[c].folds[f] = run_fold(data, *folds[f], cond, config, progress);
    } catch (const std::exception &e) {
      throw ExperimentError("condition " + cond.name + ", fold " +
                            std::to_string(folds[f]->index) + ": " + e.what());
    }
  });

  for (auto &outcome : results.conditions) {
    SegmentScores pooled = empty_scores(config.model.class_order);
    for (const auto &f : outcome.folds) {
      outcome.macro_f += f.metrics.macro_f;
      outcome.micro_f += f.metrics.micro_f;
      outcome.precision += f.metrics.micro_p;
      outcome.recall += f.metrics.micro_r;
      pooled += f.scores;
    }
    const auto n = static_cast<double>(n_folds);
    outcome.macro_f /= n;
    outcome.micro_f /= n;
    outcome.precision /= n;
    outcome.recall /= n;
    outcome.pooled = aggregate(pooled);
  }

  if (!config.out_dir.empty()) {
    write_text_file(config.out_dir / "results.csv", results_csv(results));
    write_text_file(config.out_dir / "classwise.csv", classwise_csv(results));
  }
  return results;
}

std::string results_csv(const ExperimentResults &results) {
  std::ostringstream os;
  os << "condition,macro_f,micro_f,precision,recall,pooled_macro_f,pooled_micro_f\n";
  char buf[256];
  for (const auto &c : results.conditions) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  c.condition.name.c_str(), c.macro_f, c.micro_f, c.precision,
                  c.recall, c.pooled.macro_f, c.pooled.micro_f);
    os << buf;
  }
  return os.str();
}

std::string classwise_csv(const ExperimentResults &results) {
  std::ostringstream os;
  os << "condition";
  if (results.conditions.empty())
    return os.str() + "\n";
  for (const auto &m : results.conditions.front().pooled.classes)
    os << ',' << technique_name(m.technique);
  os << '\n';
  char buf[32];
  for (const auto &c : results.conditions) {
    os << c.condition.name;
    for (const auto &m : c.pooled.classes) {
      std::snprintf(buf, sizeof buf, ",%.6f", m.f);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace stdet
