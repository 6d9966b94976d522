// SPDX-License-Identifier: Apache-2.0
#include "stdet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "stdet/binary_io.hpp"
#include "stdet/simd.hpp"

namespace stdet::dsp {

namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex &plan_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(plan_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(plan_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft &) = delete;
  RealFft &operator=(const RealFft &) = delete;

  double *input() { return in_; }
  void execute() { fftw_execute(plan_); }
  double power(std::size_t k) const {
    return out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  std::size_t n_;
  double *in_ = nullptr;
  fftw_complex *out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

// numpy-style "reflect" (edge sample not repeated), folded for any offset.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1)
    return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0)
    m += period;
  if (m >= static_cast<std::ptrdiff_t>(n))
    m = period - m;
  return static_cast<std::size_t>(m);
}

void check_input(std::span<const float> samples, double sample_rate_hz,
                 const DspConfig &config) {
  config.validate();
  if (sample_rate_hz != config.sample_rate_hz)
    throw DspError("sample rate " + std::to_string(sample_rate_hz) +
                   " Hz does not match configured " +
                   std::to_string(config.sample_rate_hz) +
                   " Hz (resampling is not supported)");
  if (samples.empty())
    throw DspError("empty signal");
}

// Calls fn(frame_index, fft) after computing the windowed FFT of each frame.
template <class Fn>
void for_each_frame(std::span<const float> samples, const DspConfig &config,
                    Fn &&fn) {
  const std::size_t n = config.fft_size;
  const std::size_t hop = config.hop_samples();
  const std::size_t frames = config.num_frames(samples.size());
  const auto window = hann_window(n);
  const auto half = static_cast<std::ptrdiff_t>(n / 2);
  RealFft fft(n);
  double *buf = fft.input();
  for (std::size_t t = 0; t < frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * hop) - half;
    for (std::size_t j = 0; j < n; ++j) {
      const auto idx = start + static_cast<std::ptrdiff_t>(j);
      const std::size_t src =
          (idx >= 0 && idx < static_cast<std::ptrdiff_t>(samples.size()))
              ? static_cast<std::size_t>(idx)
              : reflect_index(idx, samples.size());
      buf[j] = static_cast<double>(samples[src]) * window[j];
    }
    fft.execute();
    fn(t, fft);
  }
}

struct SparseBand {
  std::size_t first = 0;
  std::vector<double> weights;
};

std::vector<SparseBand> sparse_filterbank(const DspConfig &config) {
  const auto fb = mel_filterbank(config);
  const std::size_t bins = config.num_bins();
  std::vector<SparseBand> bands(config.n_mels);
  for (std::size_t m = 0; m < config.n_mels; ++m) {
    const double *row = fb.data() + m * bins;
    std::size_t lo = 0;
    while (lo < bins && row[lo] == 0.0)
      ++lo;
    std::size_t hi = bins;
    while (hi > lo && row[hi - 1] == 0.0)
      --hi;
    bands[m].first = lo;
    bands[m].weights.assign(row + lo, row + hi);
  }
  return bands;
}

}  // namespace

std::size_t DspConfig::hop_samples() const {
  return static_cast<std::size_t>(std::llround(hop_s * sample_rate_hz));
}

void DspConfig::validate() const {
  if (!(sample_rate_hz > 0.0))
    throw DspError("sample rate must be positive");
  if (fft_size < 2 || fft_size % 2 != 0)
    throw DspError("fft_size must be even and >= 2");
  if (!(hop_s > 0.0) || hop_samples() == 0)
    throw DspError("hop must be at least one sample");
  if (n_mels == 0)
    throw DspError("n_mels must be positive");
  if (!(fmin_hz >= 0.0) || !(fmin_hz < fmax_hz) ||
      fmax_hz > sample_rate_hz / 2.0)
    throw DspError("need 0 <= fmin < fmax <= sample_rate / 2");
  if (!(log_floor > 0.0))
    throw DspError("log_floor must be positive");
}

nlohmann::json to_json(const DspConfig &c) {
  return {{"sample_rate_hz", c.sample_rate_hz}, {"fft_size", c.fft_size},
          {"hop_s", c.hop_s},                   {"n_mels", c.n_mels},
          {"fmin_hz", c.fmin_hz},               {"fmax_hz", c.fmax_hz},
          {"log_floor", c.log_floor},           {"window", "hann"}};
}

DspConfig dsp_config_from_json(const nlohmann::json &j) {
  DspConfig c;
  if (j.is_null())
    return c;
  if (!j.is_object())
    throw DspError("dsp config must be a JSON object");
  for (const auto &[key, value] : j.items()) {
    if (key == "sample_rate_hz")
      c.sample_rate_hz = value.get<double>();
    else if (key == "fft_size")
      c.fft_size = value.get<std::size_t>();
    else if (key == "hop_s")
      c.hop_s = value.get<double>();
    else if (key == "n_mels")
      c.n_mels = value.get<std::size_t>();
    else if (key == "fmin_hz")
      c.fmin_hz = value.get<double>();
    else if (key == "fmax_hz")
      c.fmax_hz = value.get<double>();
    else if (key == "log_floor")
      c.log_floor = value.get<double>();
    else if (key == "window") {
      if (value != "hann")
        throw DspError("only the Hann window is supported");
    } else
      throw DspError("unknown dsp config key '" + key + "'");
  }
  c.validate();
  return c;
}

double hz_to_mel(double hz) {
  if (!(hz >= 0.0))
    throw DspError("hz_to_mel: negative frequency");
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
  if (!(mel >= 0.0))
    throw DspError("mel_to_hz: negative mel value");
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  return w;
}

Tensor<double> stft_magnitude(std::span<const float> samples,
                              double sample_rate_hz, const DspConfig &config) {
  check_input(samples, sample_rate_hz, config);
  const std::size_t bins = config.num_bins();
  const std::size_t frames = config.num_frames(samples.size());
  Tensor<double> mag({bins, frames});
  for_each_frame(samples, config, [&](std::size_t t, const RealFft &fft) {
    for (std::size_t k = 0; k < bins; ++k)
      mag.at(k, t) = std::sqrt(fft.power(k));
  });
  return mag;
}

Tensor<double> mel_filterbank(const DspConfig &config) {
  config.validate();
  const std::size_t bins = config.num_bins();
  const std::size_t n_mels = config.n_mels;
  const double mel_lo = hz_to_mel(config.fmin_hz);
  const double mel_hi = hz_to_mel(config.fmax_hz);
  std::vector<double> edges_hz(n_mels + 2);
  for (std::size_t i = 0; i < n_mels + 2; ++i)
    edges_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                         static_cast<double>(n_mels + 1));
  Tensor<double> fb({n_mels, bins});
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = edges_hz[m];
    const double center = edges_hz[m + 1];
    const double right = edges_hz[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate_hz /
                       static_cast<double>(config.fft_size);
      double w = 0.0;
      if (f > left && f <= center)
        w = (f - left) / (center - left);
      else if (f > center && f < right)
        w = (right - f) / (right - center);
      fb.at(m, k) = w;
    }
  }
  return fb;
}

std::vector<double> mel_band_centers(const DspConfig &config) {
  config.validate();
  const double mel_lo = hz_to_mel(config.fmin_hz);
  const double mel_hi = hz_to_mel(config.fmax_hz);
  std::vector<double> centers(config.n_mels);
  for (std::size_t m = 0; m < config.n_mels; ++m)
    centers[m] = mel_lo + (mel_hi - mel_lo) * static_cast<double>(m + 1) /
                              static_cast<double>(config.n_mels + 1);
  return centers;
}

std::size_t nearest_mel_band(double f0_hz, const DspConfig &config) {
  const double mel = hz_to_mel(f0_hz);
  const auto centers = mel_band_centers(config);
  std::size_t best = 0;
  for (std::size_t m = 1; m < centers.size(); ++m)
    if (std::abs(centers[m] - mel) < std::abs(centers[best] - mel))
      best = m;
  return best;
}

MelSpec mel_spectrogram(std::span<const float> samples, double sample_rate_hz,
                        const DspConfig &config) {
  check_input(samples, sample_rate_hz, config);
  const std::size_t frames = config.num_frames(samples.size());
  const auto bands = sparse_filterbank(config);
  const double floor = config.log_floor;
  MelSpec mel{Tensor<float>({config.n_mels, frames}), config};
  std::vector<double> power(config.num_bins());
  for_each_frame(samples, config, [&](std::size_t t, const RealFft &fft) {
    for (std::size_t k = 0; k < power.size(); ++k)
      power[k] = fft.power(k);
    for (std::size_t m = 0; m < bands.size(); ++m) {
      const auto &b = bands[m];
      const double e =
          simd::dot(b.weights.data(), power.data() + b.first, b.weights.size());
      mel.values.at(m, t) = static_cast<float>(std::log(e + floor));
    }
  });
  return mel;
}

Pitchgram pitch_to_pitchgram(const PitchContour &contour,
                             const DspConfig &config, std::size_t num_frames,
                             double confidence_min) {
  config.validate();
  Pitchgram pg{Tensor<float>({config.n_mels, num_frames}), config};
  const auto &pts = contour.points;
  if (pts.empty())
    return pg;
  const double hop = config.hop_s;
  const double half = 0.5 * hop;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < num_frames; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * hop;
    while (cursor + 1 < pts.size() && pts[cursor + 1].time_s <= center)
      ++cursor;
    // Candidates: the last point at or before the center and the next one.
    std::optional<std::size_t> best;
    double best_dist = 0.0;
    for (std::size_t c = cursor; c < std::min(cursor + 2, pts.size()); ++c) {
      const double d = std::abs(pts[c].time_s - center);
      if (d <= half && (!best || d < best_dist)) {
        best = c;
        best_dist = d;
      }
    }
    if (!best)
      continue;
    const auto &p = pts[*best];
    if (p.confidence > confidence_min && p.f0_hz > 0.0)
      pg.values.at(nearest_mel_band(p.f0_hz, config), i) = 1.0f;
  }
  return pg;
}

FeatureTensor assemble_features(const MelSpec &mel, const Pitchgram *pitchgram) {
  const std::size_t bands = mel.values.dim(0);
  const std::size_t frames = mel.values.dim(1);
  const std::size_t channels = pitchgram ? 2 : 1;
  if (pitchgram && pitchgram->values.shape() != mel.values.shape())
    throw ShapeError("pitchgram shape " + shape_string(pitchgram->values.shape()) +
                     " does not match mel shape " +
                     shape_string(mel.values.shape()));
  FeatureTensor out({channels, bands, frames});
  std::copy(mel.values.values().begin(), mel.values.values().end(), out.data());
  if (pitchgram)
    std::copy(pitchgram->values.values().begin(),
              pitchgram->values.values().end(), out.data() + bands * frames);
  return out;
}

void write_feature_cache(const std::filesystem::path &path,
                         const FeatureTensor &features,
                         const nlohmann::json &header) {
  nlohmann::json h = header;
  h["shape"] = features.shape();
  BinaryWriter w(path);
  w.bytes("STFE1", 5);
  w.string32(h.dump());
  w.floats(features.span());
  w.close();
}

FeatureTensor read_feature_cache(const std::filesystem::path &path,
                                 nlohmann::json *header) {
  BinaryReader r(path);
  char magic[5];
  r.bytes(magic, 5);
  if (std::memcmp(magic, "STFE1", 5) != 0)
    throw DspError(path.string() + ": not a feature cache (bad magic)");
  const auto h = nlohmann::json::parse(r.string32());
  const auto shape = h.at("shape").get<Shape>();
  FeatureTensor t(shape);
  r.floats(t.span());
  if (header)
    *header = h;
  return t;
}

}  // namespace stdet::dsp
