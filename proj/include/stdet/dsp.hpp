// SPDX-License-Identifier: Apache-2.0
/**
 * @file   dsp.hpp
 * @brief  Feature front-end: centered STFT, HTK mel filterbank, natural-log
 *         compression, one-hot mel-band pitchgram and channel stacking.
 *
 * Framing: the signal is reflection-padded by fft_size/2 on both sides and
 * frame t starts at padded sample t*hop, so frame t is centered on input
 * sample t*hop and there are 1 + floor(N / hop) frames.
 */
#ifndef STDET_DSP_HPP_
#define STDET_DSP_HPP_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stdet/annotation.hpp"
#include "stdet/tensor.hpp"

namespace stdet::dsp {

class DspError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DspConfig {
  double sample_rate_hz = 44100.0;
  std::size_t fft_size = 2048;
  double hop_s = 0.010;
  std::size_t n_mels = 64;
  double fmin_hz = 0.0;
  double fmax_hz = 22050.0;
  double log_floor = 1e-10;

  std::size_t hop_samples() const;
  std::size_t num_bins() const { return fft_size / 2 + 1; }
  std::size_t num_frames(std::size_t num_samples) const {
    return 1 + num_samples / hop_samples();
  }
  void validate() const;

  bool operator==(const DspConfig &) const = default;
};

nlohmann::json to_json(const DspConfig &config);
/// Missing keys keep their defaults; unknown keys are rejected.
DspConfig dsp_config_from_json(const nlohmann::json &j);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/// Magnitude spectrogram [num_bins x frames].
Tensor<double> stft_magnitude(std::span<const float> samples,
                              double sample_rate_hz, const DspConfig &config);

/// Triangular filters [n_mels x num_bins], peak 1, band k spanning mel edges
/// k..k+2 of n_mels+2 edges equally spaced between fmin and fmax.
Tensor<double> mel_filterbank(const DspConfig &config);

/// Mel value at the peak of each band (edges 1..n_mels).
std::vector<double> mel_band_centers(const DspConfig &config);

/// Index of the band whose center is nearest hz_to_mel(f0_hz).
std::size_t nearest_mel_band(double f0_hz, const DspConfig &config);

struct MelSpec {
  Tensor<float> values;  ///< [n_mels x frames], log power
  DspConfig config;
  std::size_t num_frames() const { return values.dim(1); }
};

struct Pitchgram {
  Tensor<float> values;  ///< [n_mels x frames], one-hot or empty columns
  DspConfig config;
  std::size_t num_frames() const { return values.dim(1); }
};

MelSpec mel_spectrogram(std::span<const float> samples, double sample_rate_hz,
                        const DspConfig &config);

/// For frame i (covering [i*hop, (i+1)*hop)), the contour point nearest the
/// frame center within half a hop activates the nearest mel band when its
/// confidence exceeds `confidence_min`.
Pitchgram pitch_to_pitchgram(const PitchContour &contour,
                             const DspConfig &config, std::size_t num_frames,
                             double confidence_min = 0.5);

/// [channels x n_mels x frames]; channel 0 is always the log-mel.
using FeatureTensor = Tensor<float>;

FeatureTensor assemble_features(const MelSpec &mel,
                                const Pitchgram *pitchgram = nullptr);

/// Feature cache: magic "STFE1", u32 little-endian JSON length, JSON header
/// (carries "shape" and "dsp"), then row-major little-endian float32 data.
void write_feature_cache(const std::filesystem::path &path,
                         const FeatureTensor &features,
                         const nlohmann::json &header);
FeatureTensor read_feature_cache(const std::filesystem::path &path,
                                 nlohmann::json *header = nullptr);

}  // namespace stdet::dsp

#endif  // STDET_DSP_HPP_
