// SPDX-License-Identifier: Apache-2.0
/**
 * @file   detector.hpp
 * @brief  CRNN technique detector: model definition, clip segmentation,
 *         training with early stopping, frame prediction and event decoding.
 *
 * Network, per clip of T frames:
 *
 *   [C x 64 x T] -> 3 x (conv 3x3 same, ReLU, max-pool over frequency)
 *               -> [32 x 4 x T] -> [T x 128] -> BiGRU -> [T x 2H]
 *               -> linear + sigmoid -> [T x n_classes]
 *
 * The time axis is never pooled, so output frame i is aligned with input
 * frame i. A clip is always run on its valid prefix only; padded frames
 * never reach the network.
 */
#ifndef STDET_DETECTOR_HPP_
#define STDET_DETECTOR_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stdet/annotation.hpp"
#include "stdet/dsp.hpp"
#include "stdet/nn/adam.hpp"
#include "stdet/nn/gradcheck.hpp"
#include "stdet/nn/layers.hpp"
#include "stdet/nn/loss.hpp"
#include "stdet/nn/params.hpp"
#include "stdet/tensor.hpp"

namespace stdet {

class DetectorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConvLayerConfig {
  std::size_t out_channels = 32;
  std::size_t kernel_f = 3;
  std::size_t kernel_t = 3;
  std::size_t pool_f = 4;

  bool operator==(const ConvLayerConfig &) const = default;
};

struct ModelConfig {
  std::size_t input_channels = 1;
  std::size_t n_mels = 64;
  std::vector<ConvLayerConfig> conv = {
      {32, 3, 3, 4}, {32, 3, 3, 2}, {32, 3, 3, 2}};
  std::size_t gru_hidden = 64;
  std::vector<Technique> class_order = detection_classes();

  std::size_t n_classes() const { return class_order.size(); }
  /// Frequency extent after all pooling stages.
  std::size_t pooled_bins() const;
  /// Features per frame entering the GRU.
  std::size_t gru_input() const;
  /// Throws DetectorError when pooling does not divide n_mels, etc.
  void validate() const;

  bool operator==(const ModelConfig &) const = default;
};

nlohmann::json to_json(const ModelConfig &config);
/// Missing keys keep defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json &j);

/// Per-clip activations kept for the backward pass.
template <class T> struct CrnnCache {
  struct ConvStage {
    nn::Conv2dCache<T> conv;
    Tensor<T> activated;  ///< post-ReLU, pre-pool
    nn::PoolCache pool;
  };
  std::vector<ConvStage> stages;
  Shape pooled_shape;  ///< [channels x bins x T] before flattening
  nn::BiGruCache<T> gru;
  nn::LinearCache<T> fc;
};

template <class T> class Crnn {
 public:
  Crnn() = default;
  /// Allocates parameters and fills them with Glorot-uniform weights and
  /// zero biases drawn from SplitMix64(seed) in sorted-name order.
  Crnn(ModelConfig config, std::uint64_t seed);

  const ModelConfig &config() const noexcept { return config_; }
  nn::ParamSet<T> &params() noexcept { return params_; }
  const nn::ParamSet<T> &params() const noexcept { return params_; }

  /// [C x n_mels x T] -> [T x n_classes] probabilities.
  Tensor<T> forward(const Tensor<T> &input, CrnnCache<T> *cache = nullptr) const;

  /// Accumulates parameter gradients from dL/d(output). Returns dL/d(input)
  /// when requested, otherwise an empty tensor.
  Tensor<T> backward(const Tensor<T> &grad_output, const CrnnCache<T> &cache,
                     bool need_input_grad = false);

  template <class U> Crnn<U> cast() const {
    Crnn<U> out;
    out.config_ = config_;
    out.params_ = params_.template cast<U>();
    return out;
  }

 private:
  template <class> friend class Crnn;

  static std::string conv_name(std::size_t layer, const char *what);

  ModelConfig config_;
  nn::ParamSet<T> params_;
};

/// Builds the model; the parameter count is a function of the config only.
Crnn<float> build_model(const ModelConfig &config, std::uint64_t seed);

/// Finite-difference check of the full stack in 64-bit on a random input of
/// the model's input shape with `frames` frames, against a masked BCE loss.
nn::GradCheckResult grad_check_crnn(const ModelConfig &config,
                                    std::size_t frames, std::uint64_t seed);

// --- features -------------------------------------------------------------

enum class PitchSource { none, ground_truth, estimated };

std::string_view pitch_source_name(PitchSource source);
std::optional<PitchSource> parse_pitch_source(std::string_view name);

/// Reads the track's audio and assembles [1 or 2 x n_mels x T] features.
/// Throws when the track has no audio or the requested contour is missing.
dsp::FeatureTensor featurize_track(const TrackAnnotation &track,
                                   PitchSource pitch,
                                   const dsp::DspConfig &config);

/// Per-mel-bin z-scoring of channel 0. Other channels pass through.
struct Normalizer {
  std::vector<float> mean;
  std::vector<float> stddev;

  /// Statistics over every frame of the given feature tensors.
  static Normalizer fit(std::span<const dsp::FeatureTensor *const> features);
  void apply(dsp::FeatureTensor &features) const;
  bool empty() const { return mean.empty(); }
  bool operator==(const Normalizer &) const = default;
};

// --- clips ----------------------------------------------------------------

struct Clip {
  std::string track_id;
  double start_s = 0.0;
  dsp::FeatureTensor features;  ///< [C x n_mels x clip_frames], zero-padded
  FrameRoll targets;            ///< [classes x clip_frames], zero-padded
  std::size_t valid_frames = 0;
};

struct ClipLayout {
  std::size_t stride = 1000;  ///< frames between clip starts
  std::size_t length = 1001;  ///< frames per clip (stride + 1)
};

/// stride = round(clip_len_s / hop_s), length = stride + 1.
ClipLayout clip_layout(double clip_len_s, double hop_s);

/// Clip k covers track frames [k*stride, k*stride + length); the last clip
/// is zero-padded. A track of T frames yields max(1, ceil((T-1)/stride))
/// clips. Targets are the track roll sliced the same way, which truncates
/// events at clip boundaries.
std::vector<Clip> segment_clips(const std::string &track_id,
                                const dsp::FeatureTensor &features,
                                const FrameRoll &targets,
                                const ClipLayout &layout);

// --- training -------------------------------------------------------------

struct TrainConfig {
  std::size_t batch_size = 16;
  nn::AdamConfig adam{};
  std::size_t patience = 10;
  std::size_t max_epochs = 200;
  nn::LossConfig loss{};
  double clip_len_s = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig &) const = default;
};

nlohmann::json to_json(const TrainConfig &config);
TrainConfig train_config_from_json(const nlohmann::json &j);

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool operator==(const EpochRecord &) const = default;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t steps = 0;
  bool stopped_early = false;
};

/// Network input for a clip: the valid prefix of its features, and the
/// matching [valid x classes] target and mask tensors.
Tensor<float> clip_input(const Clip &clip);
Tensor<float> clip_targets(const Clip &clip);

/// One optimizer step on a batch. The loss is normalized by the total number
/// of valid (frame, class) cells in the batch. Returns that loss.
double train_step(Crnn<float> &model, nn::Adam<float> &optimizer,
                  std::span<const Clip *const> batch,
                  const nn::LossConfig &loss);

/// Mean loss over all valid cells of the clips.
double evaluate_loss(const Crnn<float> &model, std::span<const Clip> clips,
                     const nn::LossConfig &loss);

using EpochCallback = std::function<void(const EpochRecord &)>;

/// Shuffled minibatch Adam with early stopping on validation loss. On return
/// the model holds the best-validation parameters. A non-finite loss aborts
/// with DetectorError.
TrainResult train(Crnn<float> &model, std::span<const Clip> train_clips,
                  std::span<const Clip> val_clips, const TrainConfig &config,
                  const EpochCallback &on_epoch = {});

// --- inference ------------------------------------------------------------

/// Runs the network on the whole tensor. Returns [classes x T] probabilities.
FrameRoll predict_frames(const Crnn<float> &model,
                         const dsp::FeatureTensor &features, double hop_s);

/// Clip-wise inference over a full track, concatenated back to T frames.
/// Where consecutive clips share a frame the later clip's output is kept.
FrameRoll predict_track(const Crnn<float> &model,
                        const dsp::FeatureTensor &features, double hop_s,
                        const ClipLayout &layout);

struct DecodeConfig {
  double threshold = 0.5;
  std::size_t median_width = 0;  ///< 0 or 1 disables; must be odd otherwise
  double min_duration_s = 0.05;
  bool operator==(const DecodeConfig &) const = default;
};

nlohmann::json to_json(const DecodeConfig &config);
DecodeConfig decode_config_from_json(const nlohmann::json &j);

/// Binary running median with zero padding past either end.
std::vector<float> median_filter_binary(std::span<const float> row,
                                        std::size_t width);

/// Cells strictly above the threshold are active; then the optional median
/// filter; then roll_to_events with min_duration_s.
std::vector<TechniqueEvent> decode_events(const FrameRoll &probs,
                                          const DecodeConfig &config = {});

// --- persistence ----------------------------------------------------------

/// Weights file: magic "STDK1", u32 JSON length, JSON header, then for each
/// tensor in sorted-name order: u32 name length, name, u32 rank, rank x u32
/// extents, float32 data; all little-endian. The normalizer is stored as the
/// tensors "norm.mean" and "norm.std".
struct SavedModel {
  Crnn<float> model;
  Normalizer normalizer;
  nlohmann::json header;  ///< includes "model"
};

void save_model(const std::filesystem::path &path, const Crnn<float> &model,
                const Normalizer &normalizer, nlohmann::json header = {});
SavedModel load_model(const std::filesystem::path &path);

}  // namespace stdet

#endif  // STDET_DETECTOR_HPP_
