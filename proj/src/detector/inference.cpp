// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstring>
#include <map>

#include "../json_keys.hpp"
#include "stdet/binary_io.hpp"
#include "stdet/detector.hpp"

namespace stdet {

FrameRoll predict_frames(const Crnn<float> &model,
                         const dsp::FeatureTensor &features, double hop_s) {
  const auto &cfg = model.config();
  if (features.rank() != 3 || features.dim(0) != cfg.input_channels)
    throw DetectorError("model expects " + std::to_string(cfg.input_channels) +
                        " feature channel(s), got shape " +
                        shape_string(features.shape()));
  const auto out = model.forward(features);
  const std::size_t T = out.dim(0), K = out.dim(1);
  FrameRoll roll(cfg.class_order, T, hop_s);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < K; ++c)
      roll.at(c, t) = out[t * K + c];
  return roll;
}

FrameRoll predict_track(const Crnn<float> &model,
                        const dsp::FeatureTensor &features, double hop_s,
                        const ClipLayout &layout) {
  if (features.rank() != 3)
    throw DetectorError("predict_track: features must be [C x F x T]");
  const std::size_t C = features.dim(0), F = features.dim(1),
                    T = features.dim(2);
  FrameRoll roll(model.config().class_order, T, hop_s);
  for (std::size_t start = 0;; start += layout.stride) {
    const std::size_t len = std::min(layout.length, T - start);
    dsp::FeatureTensor clip({C, F, len});
    for (std::size_t row = 0; row < C * F; ++row)
      std::copy_n(features.data() + row * T + start, len, clip.data() + row * len);
    const auto part = predict_frames(model, clip, hop_s);
    for (std::size_t c = 0; c < roll.num_classes(); ++c)
      std::copy_n(part.row(c).data(), len, roll.row(c).data() + start);
    if (start + len >= T)
      break;
  }
  return roll;
}

nlohmann::json to_json(const DecodeConfig &c) {
  return {{"threshold", c.threshold},
          {"median_width", c.median_width},
          {"min_duration_s", c.min_duration_s}};
}

DecodeConfig decode_config_from_json(const nlohmann::json &j) {
  DecodeConfig c;
  if (j.is_null())
    return c;
  detail::reject_unknown_keys<DetectorError>(
      j, {"threshold", "median_width", "min_duration_s"}, "decode config");
  c.threshold = j.value("threshold", c.threshold);
  c.median_width = j.value("median_width", c.median_width);
  c.min_duration_s = j.value("min_duration_s", c.min_duration_s);
  if (c.median_width > 1 && c.median_width % 2 == 0)
    throw DetectorError("median filter width must be odd");
  return c;
}

std::vector<float> median_filter_binary(std::span<const float> row,
                                        std::size_t width) {
  if (width > 1 && width % 2 == 0)
    throw DetectorError("median filter width must be odd, got " +
                        std::to_string(width));
  std::vector<float> out(row.begin(), row.end());
  if (width <= 1 || row.empty())
    return out;
  const std::size_t r = width / 2, n = row.size();
  // Sliding count of active cells in [i - r, i + r].
  std::size_t count = 0;
  for (std::size_t j = 0; j < std::min(n, r + 1); ++j)
    count += row[j] > 0.5f;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = count > r ? 1.0f : 0.0f;
    if (i + r + 1 < n)
      count += row[i + r + 1] > 0.5f;
    if (i >= r)
      count -= row[i - r] > 0.5f;
  }
  return out;
}

std::vector<TechniqueEvent> decode_events(const FrameRoll &probs,
                                          const DecodeConfig &config) {
  if (config.median_width > 1 && config.median_width % 2 == 0)
    throw DetectorError("median filter width must be odd, got " +
                        std::to_string(config.median_width));
  FrameRoll binary(probs.class_order(), probs.num_frames(), probs.hop_s());
  for (std::size_t i = 0; i < probs.values().size(); ++i)
    binary.values()[i] = probs.values()[i] > config.threshold ? 1.0f : 0.0f;
  if (config.median_width > 1)
    for (std::size_t c = 0; c < binary.num_classes(); ++c) {
      const auto filtered = median_filter_binary(binary.row(c), config.median_width);
      std::copy(filtered.begin(), filtered.end(), binary.row(c).begin());
    }
  return roll_to_events(binary, config.min_duration_s);
}

// --- persistence ----------------------------------------------------------

namespace {

constexpr char kMagic[5] = {'S', 'T', 'D', 'K', '1'};

}  // namespace

void save_model(const std::filesystem::path &path, const Crnn<float> &model,
                const Normalizer &normalizer, nlohmann::json header) {
  if (!header.is_object())
    header = nlohmann::json::object();
  header["model"] = to_json(model.config());
  std::map<std::string, Tensor<float>> tensors;
  for (const auto &[name, p] : model.params())
    tensors.emplace(name, p.value);
  if (!normalizer.empty()) {
    tensors.emplace("norm.mean", Tensor<float>({normalizer.mean.size()}, normalizer.mean));
    tensors.emplace("norm.std", Tensor<float>({normalizer.stddev.size()}, normalizer.stddev));
  }
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  BinaryWriter w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.string32(header.dump());
  for (const auto &[name, t] : tensors) {
    w.string32(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape())
      w.u32(static_cast<std::uint32_t>(d));
    w.floats(t.span());
  }
  w.close();
}

SavedModel load_model(const std::filesystem::path &path) {
  BinaryReader r(path);
  char magic[5];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw BinaryFormatError(path.string() + ": not a weights file");
  SavedModel saved;
  try {
    saved.header = nlohmann::json::parse(r.string32());
  } catch (const nlohmann::json::exception &e) {
    throw BinaryFormatError(path.string() + ": bad header: " + e.what());
  }
  if (!saved.header.contains("model"))
    throw BinaryFormatError(path.string() + ": header lacks a model config");
  saved.model = Crnn<float>(model_config_from_json(saved.header["model"]), 0);
  std::size_t loaded = 0;
  while (!r.at_end()) {
    const std::string name = r.string32();
    Shape shape(r.u32());
    for (auto &d : shape)
      d = r.u32();
    Tensor<float> t(shape);
    r.floats(t.span());
    if (name == "norm.mean") {
      saved.normalizer.mean = t.values();
    } else if (name == "norm.std") {
      saved.normalizer.stddev = t.values();
    } else {
      if (!saved.model.params().contains(name))
        throw BinaryFormatError(path.string() + ": unexpected tensor " + name);
      auto &p = saved.model.params()[name];
      if (p.value.shape() != shape)
        throw BinaryFormatError(path.string() + ": tensor " + name + " has shape " +
                                shape_string(shape) + ", expected " +
                                shape_string(p.value.shape()));
      p.value = std::move(t);
      ++loaded;
    }
  }
  if (loaded != saved.model.params().size())
    throw BinaryFormatError(path.string() + ": missing parameter tensors");
  if (saved.normalizer.mean.size() != saved.normalizer.stddev.size())
    throw BinaryFormatError(path.string() + ": incomplete normalizer");
  return saved;
}

}  // namespace stdet
