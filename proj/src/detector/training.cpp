// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "../json_keys.hpp"
#include "stdet/detector.hpp"
#include "stdet/nn/rng.hpp"
#include "stdet/wav.hpp"

namespace stdet {

// --- features -------------------------------------------------------------

std::string_view pitch_source_name(PitchSource source) {
  switch (source) {
    case PitchSource::none: return "none";
    case PitchSource::ground_truth: return "gt";
    case PitchSource::estimated: return "est";
  }
  return "none";
}

std::optional<PitchSource> parse_pitch_source(std::string_view name) {
  if (name == "none")
    return PitchSource::none;
  if (name == "gt" || name == "ground_truth")
    return PitchSource::ground_truth;
  if (name == "est" || name == "estimated")
    return PitchSource::estimated;
  return std::nullopt;
}

dsp::FeatureTensor featurize_track(const TrackAnnotation &track,
                                   PitchSource pitch,
                                   const dsp::DspConfig &config) {
  if (!track.audio_path)
    throw DetectorError("track '" + track.track_id + "' has no audio file");
  const Audio audio = read_wav(*track.audio_path);
  const auto mel = dsp::mel_spectrogram(audio.samples, audio.sample_rate, config);
  if (pitch == PitchSource::none)
    return dsp::assemble_features(mel);
  const PitchContour *contour = &track.pitch;
  if (pitch == PitchSource::estimated) {
    if (!track.estimated_pitch)
      throw DetectorError("track '" + track.track_id +
                          "' has no estimated pitch contour");
    contour = &*track.estimated_pitch;
  }
  const auto pg = dsp::pitch_to_pitchgram(*contour, config, mel.num_frames());
  return dsp::assemble_features(mel, &pg);
}

Normalizer Normalizer::fit(std::span<const dsp::FeatureTensor *const> features) {
  if (features.empty())
    throw DetectorError("normalizer: no training features");
  const std::size_t bins = features.front()->dim(1);
  std::vector<double> sum(bins, 0.0), sq(bins, 0.0);
  std::size_t count = 0;
  for (const auto *f : features) {
    if (f->rank() != 3 || f->dim(1) != bins)
      throw DetectorError("normalizer: inconsistent feature shapes");
    const std::size_t T = f->dim(2);
    for (std::size_t b = 0; b < bins; ++b) {
      const float *row = f->data() + b * T;
      for (std::size_t t = 0; t < T; ++t) {
        sum[b] += row[t];
        sq[b] += static_cast<double>(row[t]) * row[t];
      }
    }
    count += T;
  }
  Normalizer n;
  n.mean.resize(bins);
  n.stddev.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double m = sum[b] / static_cast<double>(count);
    const double var = std::max(sq[b] / static_cast<double>(count) - m * m, 0.0);
    const double sd = std::sqrt(var);
    n.mean[b] = static_cast<float>(m);
    n.stddev[b] = sd > 1e-6 ? static_cast<float>(sd) : 1.0f;
  }
  return n;
}

void Normalizer::apply(dsp::FeatureTensor &features) const {
  if (features.rank() != 3 || features.dim(1) != mean.size())
    throw DetectorError("normalizer: expected " + std::to_string(mean.size()) +
                        " mel bins, got shape " +
                        shape_string(features.shape()));
  const std::size_t T = features.dim(2);
  for (std::size_t b = 0; b < mean.size(); ++b) {
    float *row = features.data() + b * T;
    const float m = mean[b], inv = 1.0f / stddev[b];
    for (std::size_t t = 0; t < T; ++t)
      row[t] = (row[t] - m) * inv;
  }
}

// --- clips ----------------------------------------------------------------

ClipLayout clip_layout(double clip_len_s, double hop_s) {
  if (!(clip_len_s > 0.0) || !(hop_s > 0.0))
    throw DetectorError("clip length and hop must be positive");
  const auto stride = static_cast<std::size_t>(std::llround(clip_len_s / hop_s));
  if (stride == 0)
    throw DetectorError("clip shorter than one frame");
  return {stride, stride + 1};
}

std::vector<Clip> segment_clips(const std::string &track_id,
                                const dsp::FeatureTensor &features,
                                const FrameRoll &targets,
                                const ClipLayout &layout) {
  if (features.rank() != 3)
    throw DetectorError("segment_clips: features must be [C x F x T]");
  const std::size_t C = features.dim(0), F = features.dim(1),
                    T = features.dim(2);
  if (targets.num_frames() != T)
    throw DetectorError("segment_clips: " + std::to_string(T) +
                        " feature frames but " +
                        std::to_string(targets.num_frames()) + " target frames");
  const std::size_t n =
      T <= 1 ? 1 : std::max<std::size_t>(1, (T - 1 + layout.stride - 1) / layout.stride);
  std::vector<Clip> clips;
  clips.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t start = k * layout.stride;
    Clip clip;
    clip.track_id = track_id;
    clip.start_s = static_cast<double>(start) * targets.hop_s();
    clip.valid_frames = std::min(layout.length, T - start);
    clip.features = dsp::FeatureTensor({C, F, layout.length});
    for (std::size_t row = 0; row < C * F; ++row)
      std::copy_n(features.data() + row * T + start, clip.valid_frames,
                  clip.features.data() + row * layout.length);
    clip.targets = FrameRoll(targets.class_order(), layout.length, targets.hop_s());
    for (std::size_t c = 0; c < targets.num_classes(); ++c)
      std::copy_n(targets.row(c).data() + start, clip.valid_frames,
                  clip.targets.row(c).data());
    clips.push_back(std::move(clip));
  }
  return clips;
}

// --- configuration --------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size == 0)
    throw DetectorError("train: batch_size must be positive");
  if (patience == 0)
    throw DetectorError("train: patience must be at least 1");
  if (max_epochs == 0)
    throw DetectorError("train: max_epochs must be positive");
  if (!(clip_len_s > 0.0))
    throw DetectorError("train: clip_len_s must be positive");
  adam.validate();
  loss.validate();
}

nlohmann::json to_json(const TrainConfig &c) {
  nlohmann::ordered_json j;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["epsilon"] = c.adam.epsilon;
  j["patience"] = c.patience;
  j["max_epochs"] = c.max_epochs;
  j["loss"] = std::string(nn::loss_name(c.loss.kind));
  j["alpha"] = c.loss.alpha;
  j["gamma"] = c.loss.gamma;
  j["clip_len_s"] = c.clip_len_s;
  j["seed"] = c.seed;
  return nlohmann::json::parse(j.dump());
}

TrainConfig train_config_from_json(const nlohmann::json &j) {
  TrainConfig c;
  if (j.is_null())
    return c;
  detail::reject_unknown_keys<DetectorError>(
      j,
      {"batch_size", "lr", "beta1", "beta2", "epsilon", "patience",
       "max_epochs", "loss", "alpha", "gamma", "clip_len_s", "seed"},
      "train config");
  c.batch_size = j.value("batch_size", c.batch_size);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.epsilon = j.value("epsilon", c.adam.epsilon);
  c.patience = j.value("patience", c.patience);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  if (j.contains("loss")) {
    const auto kind = nn::parse_loss_kind(j["loss"].get<std::string>());
    if (!kind)
      throw DetectorError("train: unknown loss '" +
                          j["loss"].get<std::string>() + "'");
    c.loss.kind = *kind;
  }
  c.loss.alpha = j.value("alpha", c.loss.alpha);
  c.loss.gamma = j.value("gamma", c.loss.gamma);
  c.clip_len_s = j.value("clip_len_s", c.clip_len_s);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

// --- training -------------------------------------------------------------

Tensor<float> clip_input(const Clip &clip) {
  const std::size_t C = clip.features.dim(0), F = clip.features.dim(1),
                    L = clip.features.dim(2), V = clip.valid_frames;
  if (V == 0 || V > L)
    throw DetectorError("clip '" + clip.track_id + "' has no valid frames");
  Tensor<float> x({C, F, V});
  for (std::size_t row = 0; row < C * F; ++row)
    std::copy_n(clip.features.data() + row * L, V, x.data() + row * V);
  return x;
}

Tensor<float> clip_targets(const Clip &clip) {
  const std::size_t V = clip.valid_frames, K = clip.targets.num_classes();
  Tensor<float> y({V, K});
  for (std::size_t c = 0; c < K; ++c)
    for (std::size_t t = 0; t < V; ++t)
      y[t * K + c] = clip.targets.at(c, t);
  return y;
}

namespace {

std::size_t cell_count(std::span<const Clip *const> clips) {
  std::size_t n = 0;
  for (const auto *c : clips)
    n += c->valid_frames * c->targets.num_classes();
  return n;
}

}  // namespace

double train_step(Crnn<float> &model, nn::Adam<float> &optimizer,
                  std::span<const Clip *const> batch,
                  const nn::LossConfig &loss) {
  const std::size_t cells = cell_count(batch);
  if (cells == 0)
    throw DetectorError("train_step: empty batch");
  const float scale = static_cast<float>(1.0 / static_cast<double>(cells));
  model.params().zero_grad();
  double total = 0.0;
  for (const auto *clip : batch) {
    CrnnCache<float> cache;
    const auto out = model.forward(clip_input(*clip), &cache);
    Tensor<float> grad(out.shape());
    total += nn::loss_sum<float>(out, clip_targets(*clip), nullptr, loss, &grad, scale).sum;
    model.backward(grad, cache);
  }
  const double mean = total / static_cast<double>(cells);
  if (!std::isfinite(mean))
    throw DetectorError("training diverged: non-finite loss");
  optimizer.step(model.params());
  return mean;
}

double evaluate_loss(const Crnn<float> &model, std::span<const Clip> clips,
                     const nn::LossConfig &loss) {
  double total = 0.0;
  std::size_t cells = 0;
  for (const auto &clip : clips) {
    const auto out = model.forward(clip_input(clip));
    const auto s = nn::loss_sum<float>(out, clip_targets(clip), nullptr, loss);
    total += s.sum;
    cells += s.count;
  }
  if (cells == 0)
    throw DetectorError("evaluate_loss: no valid cells");
  return total / static_cast<double>(cells);
}

TrainResult train(Crnn<float> &model, std::span<const Clip> train_clips,
                  std::span<const Clip> val_clips, const TrainConfig &config,
                  const EpochCallback &on_epoch) {
  config.validate();
  if (train_clips.empty() || val_clips.empty())
    throw DetectorError("train: training and validation splits must be non-empty");
  nn::SplitMix64 rng(config.seed);
  nn::Adam<float> optimizer(config.adam);
  std::vector<std::size_t> order(train_clips.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  nn::ParamSet<float> best = model.params();
  std::size_t since_best = 0;
  std::vector<const Clip *> batch;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    nn::shuffle(std::span<std::size_t>(order), rng);
    double weighted = 0.0;
    std::size_t cells = 0;
    for (std::size_t i = 0; i < order.size(); i += config.batch_size) {
      batch.clear();
      for (std::size_t j = i; j < std::min(order.size(), i + config.batch_size); ++j)
        batch.push_back(&train_clips[order[j]]);
      double loss;
      try {
        loss = train_step(model, optimizer, batch, config.loss);
      } catch (const DetectorError &e) {
        throw DetectorError(std::string(e.what()) + " at epoch " +
                            std::to_string(epoch) + ", step " +
                            std::to_string(result.steps + 1));
      }
      const std::size_t n = cell_count(batch);
      weighted += loss * static_cast<double>(n);
      cells += n;
      ++result.steps;
    }
    EpochRecord record{epoch, weighted / static_cast<double>(cells),
                       evaluate_loss(model, val_clips, config.loss)};
    if (!std::isfinite(record.val_loss))
      throw DetectorError("training diverged: non-finite validation loss at "
                          "epoch " + std::to_string(epoch));
    result.history.push_back(record);
    if (on_epoch)
      on_epoch(record);
    if (record.val_loss < result.best_val_loss) {
      result.best_val_loss = record.val_loss;
      result.best_epoch = epoch;
      best = model.params();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  model.params() = std::move(best);
  model.params().zero_grad();
  return result;
}

}  // namespace stdet
