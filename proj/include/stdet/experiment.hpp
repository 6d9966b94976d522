// SPDX-License-Identifier: Apache-2.0
/**
 * @file   experiment.hpp
 * @brief  Singer-disjoint fold planning, the synthetic surrogate corpus, and
 *         the cross-validated condition grid.
 */
#ifndef STDET_EXPERIMENT_HPP_
#define STDET_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stdet/annotation.hpp"
#include "stdet/detector.hpp"
#include "stdet/dsp.hpp"
#include "stdet/evaluation.hpp"

namespace stdet {

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- folds ----------------------------------------------------------------

struct Fold {
  std::size_t index = 0;
  std::vector<std::string> test;
  std::vector<std::string> validation;
  std::vector<std::string> train;
};

struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::string>> groups;  ///< singer ids per group
  std::vector<Fold> folds;
  /// [groups x vocabulary()] event counts, for auditing the balance.
  std::vector<std::vector<std::size_t>> balance;
};

/// Singers are shuffled with the seed, stably sorted by total event count
/// (descending) and placed one by one into the group that minimizes the sum
/// over classes of (max - min) group count, ties going to the smaller group
/// and then the lower index. Once the singers left equal the empty groups,
/// each goes to an empty group. Fold i tests on group i and validates on
/// group (i + 1) mod k; for k < 3 there is no disjoint third group and the
/// validation singers are the training singers.
FoldPlan make_folds(const Corpus &corpus, std::size_t k, std::uint64_t seed);

nlohmann::ordered_json to_json(const FoldPlan &plan);

// --- synthetic corpus ------------------------------------------------------

struct SynthSpec {
  std::size_t n_singers = 14;
  std::size_t tracks_per_singer = 3;
  double track_len_s = 30.0;
  /// Expected events per track for each surrogate class (vibrato, scooping,
  /// drop, breathy, falsetto). Classes not listed get rate 0.
  std::map<Technique, double> rates;
  std::uint64_t seed = 0;
  std::uint32_t sample_rate = 44100;

  void validate() const;
};

/// The surrogate classes in a fixed order.
const std::vector<Technique> &surrogate_classes();

/// Rates used by the acceptance corpus.
std::map<Technique, double> default_synth_rates();

nlohmann::json to_json(const SynthSpec &spec);
SynthSpec synth_spec_from_json(const nlohmann::json &j);

struct SynthTrack {
  TrackAnnotation annotation;  ///< audio_path unset
  std::vector<float> samples;
};

/// Generates one track. `singer` selects the register; `rng_seed` drives
/// everything else.
SynthTrack synth_track(const SynthSpec &spec, std::size_t singer,
                       std::size_t track, std::uint64_t rng_seed);

/// Generates the whole corpus into `dir` (WAV + CSV files + manifest.json)
/// and returns it with absolute audio paths.
Corpus synth_corpus(const SynthSpec &spec, const std::filesystem::path &dir);

// --- condition grid --------------------------------------------------------

struct Condition {
  std::string name;  ///< BCE, Focal, BCE-GT, BCE-EST, Focal-GT, Focal-EST
  nn::LossKind loss = nn::LossKind::bce;
  PitchSource pitch = PitchSource::none;
};

/// The six conditions in table order.
const std::vector<Condition> &condition_grid();
std::optional<Condition> find_condition(std::string_view name);

struct ExperimentConfig {
  std::filesystem::path corpus;  ///< manifest (used by the CLI)
  std::filesystem::path out_dir;
  std::size_t k = 7;
  std::uint64_t fold_seed = 0;
  std::vector<Condition> conditions = condition_grid();
  dsp::DspConfig dsp{};
  ModelConfig model{};  ///< input_channels is set per condition
  TrainConfig train{};
  DecodeConfig decode{};
  std::size_t jobs = 1;
  bool save_models = true;
  /// Fold indices to run; empty runs every fold of the plan.
  std::vector<std::size_t> folds;
};

/// `base_dir` resolves relative paths in the config.
ExperimentConfig experiment_config_from_json(const nlohmann::json &j,
                                             const std::filesystem::path &base_dir);
nlohmann::json to_json(const ExperimentConfig &config);

struct FoldOutcome {
  std::size_t fold = 0;
  TrainResult training;
  SegmentScores scores;
  MetricsReport metrics;
};

struct ConditionOutcome {
  Condition condition;
  std::vector<FoldOutcome> folds;
  /// Mean over folds of each fold's pooled metrics (the results table).
  double macro_f = 0.0, micro_f = 0.0, precision = 0.0, recall = 0.0;
  /// Counts pooled over every fold's test tracks.
  MetricsReport pooled;
};

struct ExperimentResults {
  std::vector<ConditionOutcome> conditions;
  const ConditionOutcome *find(std::string_view name) const;
};

using ProgressCallback = std::function<void(const std::string &)>;

/// Featurizes, trains, predicts full tracks clip-wise, decodes and scores
/// every (condition, fold) pair. When out_dir is set, writes results.csv,
/// classwise.csv, folds.json and per-fold manifests, predictions and
/// weights. Deterministic for fixed seeds regardless of `jobs`.
ExperimentResults run_experiment(const Corpus &corpus, const FoldPlan &plan,
                                 const ExperimentConfig &config,
                                 const ProgressCallback &progress = {});

std::string results_csv(const ExperimentResults &results);
std::string classwise_csv(const ExperimentResults &results);

}  // namespace stdet

#endif  // STDET_EXPERIMENT_HPP_
