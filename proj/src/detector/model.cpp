// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "stdet/detector.hpp"
#include "stdet/nn/rng.hpp"
#include "../json_keys.hpp"

namespace stdet {

namespace {

void reject_unknown_keys(const nlohmann::json &j,
                         std::initializer_list<std::string_view> allowed,
                         std::string_view what) {
  detail::reject_unknown_keys<DetectorError>(j, allowed, what);
}

}  // namespace

std::size_t ModelConfig::pooled_bins() const {
  std::size_t f = n_mels;
  for (const auto &layer : conv)
    f = layer.pool_f ? f / layer.pool_f : 0;
  return f;
}

std::size_t ModelConfig::gru_input() const {
  return conv.empty() ? input_channels * n_mels
                      : conv.back().out_channels * pooled_bins();
}

void ModelConfig::validate() const {
  if (input_channels == 0)
    throw DetectorError("model: input_channels must be positive");
  if (n_mels == 0 || gru_hidden == 0)
    throw DetectorError("model: n_mels and gru_hidden must be positive");
  if (class_order.empty())
    throw DetectorError("model: class_order is empty");
  std::size_t f = n_mels;
  for (std::size_t l = 0; l < conv.size(); ++l) {
    const auto &c = conv[l];
    if (c.out_channels == 0)
      throw DetectorError("model: conv layer " + std::to_string(l + 1) +
                          " has no output channels");
    if (c.kernel_f % 2 == 0 || c.kernel_t % 2 == 0)
      throw DetectorError("model: conv kernels must be odd-sized");
    if (c.pool_f == 0 || f % c.pool_f != 0)
      throw DetectorError("model: pooling " + std::to_string(c.pool_f) +
                          " at conv layer " + std::to_string(l + 1) +
                          " does not divide frequency extent " +
                          std::to_string(f));
    f /= c.pool_f;
  }
}

nlohmann::json to_json(const ModelConfig &c) {
  nlohmann::ordered_json conv = nlohmann::ordered_json::array();
  for (const auto &l : c.conv)
    conv.push_back({{"out_channels", l.out_channels},
                    {"kernel_f", l.kernel_f},
                    {"kernel_t", l.kernel_t},
                    {"pool_f", l.pool_f}});
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (auto t : c.class_order)
    classes.push_back(std::string(technique_name(t)));
  nlohmann::ordered_json j;
  j["input_channels"] = c.input_channels;
  j["n_mels"] = c.n_mels;
  j["conv"] = conv;
  j["gru_hidden"] = c.gru_hidden;
  j["class_order"] = classes;
  return nlohmann::json::parse(j.dump());
}

ModelConfig model_config_from_json(const nlohmann::json &j) {
  ModelConfig c;
  if (j.is_null())
    return c;
  reject_unknown_keys(j, {"input_channels", "n_mels", "conv", "gru_hidden",
                          "class_order"},
                      "model config");
  if (j.contains("input_channels"))
    c.input_channels = j["input_channels"].get<std::size_t>();
  if (j.contains("n_mels"))
    c.n_mels = j["n_mels"].get<std::size_t>();
  if (j.contains("gru_hidden"))
    c.gru_hidden = j["gru_hidden"].get<std::size_t>();
  if (j.contains("conv")) {
    c.conv.clear();
    for (const auto &l : j["conv"]) {
      reject_unknown_keys(l, {"out_channels", "kernel_f", "kernel_t", "pool_f"},
                          "conv layer");
      ConvLayerConfig layer;
      layer.out_channels = l.value("out_channels", layer.out_channels);
      layer.kernel_f = l.value("kernel_f", layer.kernel_f);
      layer.kernel_t = l.value("kernel_t", layer.kernel_t);
      layer.pool_f = l.value("pool_f", layer.pool_f);
      c.conv.push_back(layer);
    }
  }
  if (j.contains("class_order")) {
    c.class_order.clear();
    for (const auto &name : j["class_order"]) {
      const auto t = parse_technique(name.get<std::string>());
      if (t == Technique::unknown)
        throw DetectorError("model: unknown class '" + name.get<std::string>() +
                            "'");
      c.class_order.push_back(t);
    }
  }
  c.validate();
  return c;
}

template <class T>
std::string Crnn<T>::conv_name(std::size_t layer, const char *what) {
  return "conv" + std::to_string(layer + 1) + "." + what;
}

template <class T>
Crnn<T>::Crnn(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  std::size_t cin = config_.input_channels;
  for (std::size_t l = 0; l < config_.conv.size(); ++l) {
    const auto &c = config_.conv[l];
    params_.add(conv_name(l, "weight"), {c.out_channels, cin, c.kernel_f, c.kernel_t});
    params_.add(conv_name(l, "bias"), {c.out_channels});
    cin = c.out_channels;
  }
  const std::size_t H = config_.gru_hidden, D = config_.gru_input();
  for (const char *dir : {"gru.fw.", "gru.bw."}) {
    params_.add(std::string(dir) + "w_input", {3 * H, D});
    params_.add(std::string(dir) + "w_hidden", {3 * H, H});
    params_.add(std::string(dir) + "bias", {3 * H});
  }
  params_.add("fc.weight", {config_.n_classes(), 2 * H});
  params_.add("fc.bias", {config_.n_classes()});

  nn::SplitMix64 rng(seed);
  for (auto &[name, p] : params_) {
    const Shape &s = p.value.shape();
    if (s.size() == 1)
      continue;  // biases start at zero
    const std::size_t receptive = s.size() == 4 ? s[2] * s[3] : 1;
    const double fan_in = static_cast<double>(s[1] * receptive);
    const double fan_out = static_cast<double>(s[0] * receptive);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto &v : p.value.values())
      v = static_cast<T>(rng.uniform(-limit, limit));
  }
}

template <class T>
Tensor<T> Crnn<T>::forward(const Tensor<T> &input, CrnnCache<T> *cache) const {
  if (input.rank() != 3 || input.dim(0) != config_.input_channels ||
      input.dim(1) != config_.n_mels || input.dim(2) == 0)
    throw DetectorError("model expects input [" +
                        std::to_string(config_.input_channels) + " x " +
                        std::to_string(config_.n_mels) + " x T], got " +
                        shape_string(input.shape()));
  if (cache)
    cache->stages.assign(config_.conv.size(), {});
  const Tensor<T> *x = &input;
  Tensor<T> current;
  for (std::size_t l = 0; l < config_.conv.size(); ++l) {
    auto *stage = cache ? &cache->stages[l] : nullptr;
    Tensor<T> y = nn::conv2d(*x, params_[conv_name(l, "weight")].value,
                             params_[conv_name(l, "bias")].value,
                             stage ? &stage->conv : nullptr);
    nn::relu_inplace(y);
    current = nn::maxpool_freq(y, config_.conv[l].pool_f,
                               stage ? &stage->pool : nullptr);
    if (stage)
      stage->activated = std::move(y);
    x = &current;
  }
  Tensor<T> flat = *x;
  if (cache)
    cache->pooled_shape = flat.shape();
  const std::size_t frames = flat.dim(2);
  flat.reshape({flat.size() / frames, frames});
  const Tensor<T> seq = nn::transpose2d(flat);

  const nn::GruWeights<T> fw{params_["gru.fw.w_input"].value,
                             params_["gru.fw.w_hidden"].value,
                             params_["gru.fw.bias"].value};
  const nn::GruWeights<T> bw{params_["gru.bw.w_input"].value,
                             params_["gru.bw.w_hidden"].value,
                             params_["gru.bw.bias"].value};
  const Tensor<T> h = nn::bigru(seq, fw, bw, cache ? &cache->gru : nullptr);
  return nn::linear_sigmoid(h, params_["fc.weight"].value,
                            params_["fc.bias"].value,
                            cache ? &cache->fc : nullptr);
}

template <class T>
Tensor<T> Crnn<T>::backward(const Tensor<T> &grad_output,
                            const CrnnCache<T> &cache, bool need_input_grad) {
  auto &fc_w = params_["fc.weight"];
  auto &fc_b = params_["fc.bias"];
  Tensor<T> g = nn::linear_sigmoid_backward(grad_output, fc_w.value, cache.fc,
                                            fc_w.grad, fc_b.grad);
  auto &fw_w = params_["gru.fw.w_input"], &fw_u = params_["gru.fw.w_hidden"],
       &fw_b = params_["gru.fw.bias"];
  auto &bw_w = params_["gru.bw.w_input"], &bw_u = params_["gru.bw.w_hidden"],
       &bw_b = params_["gru.bw.bias"];
  g = nn::bigru_backward(
      g, nn::GruWeights<T>{fw_w.value, fw_u.value, fw_b.value},
      nn::GruWeights<T>{bw_w.value, bw_u.value, bw_b.value}, cache.gru,
      nn::GruGrads<T>{fw_w.grad, fw_u.grad, fw_b.grad},
      nn::GruGrads<T>{bw_w.grad, bw_u.grad, bw_b.grad});
  g = nn::transpose2d(g);
  g.reshape(cache.pooled_shape);
  for (std::size_t l = config_.conv.size(); l-- > 0;) {
    const auto &stage = cache.stages[l];
    g = nn::maxpool_freq_backward(g, stage.pool);
    nn::relu_backward_inplace(stage.activated, g);
    auto &w = params_[conv_name(l, "weight")];
    auto &b = params_[conv_name(l, "bias")];
    g = nn::conv2d_backward(g, w.value, stage.conv, w.grad, b.grad,
                            l > 0 || need_input_grad);
  }
  return need_input_grad ? g : Tensor<T>{};
}

template class Crnn<float>;
template class Crnn<double>;

Crnn<float> build_model(const ModelConfig &config, std::uint64_t seed) {
  return Crnn<float>(config, seed);
}

nn::GradCheckResult grad_check_crnn(const ModelConfig &config,
                                    std::size_t frames, std::uint64_t seed) {
  Crnn<double> model(config, seed);
  nn::SplitMix64 rng(seed ^ 0x5eedULL);
  Tensor<double> input({config.input_channels, config.n_mels, frames});
  for (auto &v : input.values())
    v = rng.uniform(-1.0, 1.0);
  Tensor<double> target({frames, config.n_classes()});
  for (auto &v : target.values())
    v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  const nn::LossConfig bce{nn::LossKind::bce, 1.0, 0.0};

  CrnnCache<double> cache;
  const auto out = model.forward(input, &cache);
  Tensor<double> grad;
  nn::loss_mean<double>(out, target, nullptr, bce, &grad);
  model.params().zero_grad();
  const auto grad_input = model.backward(grad, cache, true);

  std::vector<nn::GradTarget> targets;
  targets.push_back({"input", &input, &grad_input});
  for (auto &[name, p] : model.params())
    targets.push_back({name, &p.value, &p.grad});
  auto loss = [&] {
    return nn::loss_mean<double>(model.forward(input), target, nullptr, bce);
  };
  return nn::grad_check(loss, targets);
}

}  // namespace stdet
