// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "stdet/dsp.hpp"
#include "stdet/nn/rng.hpp"
#include "test_util.hpp"

namespace stdet::dsp {
namespace {

std::vector<float> sine(double hz, double seconds, double sr = 44100.0, double amp = 0.5) {
  std::vector<float> x(static_cast<std::size_t>(std::llround(seconds * sr)));
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * i / sr));
  return x;
}

std::size_t argmax_column(const Tensor<double> &m, std::size_t col) {
  std::size_t best = 0;
  for (std::size_t r = 1; r < m.dim(0); ++r)
    if (m.at(r, col) > m.at(best, col))
      best = r;
  return best;
}

TEST(Mel, KnownValues) {
  EXPECT_EQ(hz_to_mel(0.0), 0.0);
  EXPECT_NEAR(hz_to_mel(700.0), 781.17, 0.01);
  EXPECT_NEAR(hz_to_mel(1000.0), 999.99, 0.01);
  EXPECT_THROW(hz_to_mel(-1.0), DspError);
}

TEST(Mel, InverseRoundTrip) {
  nn::SplitMix64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double f = rng.uniform(1e-3, 22050.0);
    EXPECT_NEAR(mel_to_hz(hz_to_mel(f)), f, 1e-6 * f);
  }
}

TEST(Stft, FrameCount) {
  const DspConfig cfg;
  EXPECT_EQ(cfg.hop_samples(), 441u);
  const std::vector<float> x(441000, 0.0f);
  EXPECT_EQ(stft_magnitude(x, 44100, cfg).dim(1), 1001u);
  EXPECT_EQ(stft_magnitude(x, 44100, cfg).dim(0), 1025u);
}

TEST(Stft, SilenceIsZero) {
  const auto m = stft_magnitude(std::vector<float>(10000, 0.0f), 44100, DspConfig{});
  for (double v : m.values())
    EXPECT_EQ(v, 0.0);
}

TEST(Stft, SineArgmaxIsBin20) {
  const auto x = sine(440.0, 1.0);
  const auto m = stft_magnitude(x, 44100, DspConfig{});
  for (std::size_t t = 1; t + 1 < m.dim(1); ++t)
    EXPECT_EQ(argmax_column(m, t), 20u) << "frame " << t;
}

TEST(Stft, SineEdgeFramesFollowTheReflection) {
  // Frames centred on the first and last sample see the sine mirrored with a
  // phase flip, which moves the peak down one bin. The direct DFT agrees.
  const auto x = sine(440.0, 1.0);
  const auto m = stft_magnitude(x, 44100, DspConfig{});
  for (std::size_t t : {std::size_t{0}, m.dim(1) - 1}) {
    const auto ref = oracle::dft_frame(x, t, 441, 2048);
    const auto peak = std::max_element(ref.begin(), ref.end()) - ref.begin();
    EXPECT_EQ(argmax_column(m, t), static_cast<std::size_t>(peak));
    EXPECT_EQ(argmax_column(m, t), 19u);
  }
}

TEST(Stft, MatchesDirectDft) {
  nn::SplitMix64 rng(9);
  std::vector<float> x(5000);
  for (auto &v : x)
    v = static_cast<float>(rng.uniform(-1, 1));
  DspConfig cfg;
  cfg.fft_size = 256;
  const auto m = stft_magnitude(x, 44100, cfg);
  for (std::size_t frame : {std::size_t{0}, std::size_t{3}, m.dim(1) - 1}) {
    const auto ref = oracle::dft_frame(x, frame, cfg.hop_samples(), cfg.fft_size);
    for (std::size_t k = 0; k < ref.size(); ++k)
      EXPECT_NEAR(m.at(k, frame), ref[k], 1e-9 * (1.0 + ref[k])) << frame << "," << k;
  }
}

TEST(Stft, RejectsWrongRateAndEmptyInput) {
  EXPECT_THROW(stft_magnitude(std::vector<float>(100, 0.0f), 22050, DspConfig{}), DspError);
  EXPECT_THROW(stft_magnitude(std::vector<float>{}, 44100, DspConfig{}), DspError);
}

TEST(Stft, Locality) {
  // Frames far enough from the end do not see the appended copy.
  nn::SplitMix64 rng(4);
  std::vector<float> x(20000);
  for (auto &v : x)
    v = static_cast<float>(rng.uniform(-1, 1));
  auto xx = x;
  xx.insert(xx.end(), x.begin(), x.end());
  const DspConfig cfg;
  const auto a = stft_magnitude(x, 44100, cfg);
  const auto b = stft_magnitude(xx, 44100, cfg);
  const std::size_t edge = (cfg.fft_size / 2 + cfg.hop_samples() - 1) / cfg.hop_samples();
  for (std::size_t t = 0; t + edge < a.dim(1); ++t)
    for (std::size_t k = 0; k < a.dim(0); ++k)
      ASSERT_EQ(a.at(k, t), b.at(k, t)) << t << "," << k;
}

TEST(MelFilterbank, TriangularSupport) {
  const DspConfig cfg;
  const auto fb = mel_filterbank(cfg);
  ASSERT_EQ(fb.dim(0), 64u);
  ASSERT_EQ(fb.dim(1), 1025u);
  const double top = hz_to_mel(cfg.fmax_hz), bottom = hz_to_mel(cfg.fmin_hz);
  const double step = (top - bottom) / (cfg.n_mels + 1);
  for (std::size_t k = 0; k < 64; ++k)
    for (std::size_t b = 0; b < 1025; ++b) {
      const double v = fb.at(k, b);
      EXPECT_GE(v, 0.0);
      const double mel = hz_to_mel(b * cfg.sample_rate_hz / cfg.fft_size);
      if (v > 0.0) {
        EXPECT_GT(mel, bottom + k * step - 1e-9);
        EXPECT_LT(mel, bottom + (k + 2) * step + 1e-9);
      }
    }
}

TEST(MelFilterbank, InteriorBinsCovered) {
  const DspConfig cfg;
  const auto fb = mel_filterbank(cfg);
  const auto centers = mel_band_centers(cfg);
  for (std::size_t b = 0; b < 1025; ++b) {
    const double mel = hz_to_mel(b * cfg.sample_rate_hz / cfg.fft_size);
    if (mel <= centers.front() || mel >= centers.back())
      continue;
    double sum = 0.0;
    for (std::size_t k = 0; k < 64; ++k)
      sum += fb.at(k, b);
    EXPECT_GT(sum, 0.0) << b;
  }
}

TEST(MelSpectrogram, SilenceHitsTheFloor) {
  const DspConfig cfg;
  const auto mel = mel_spectrogram(std::vector<float>(4410, 0.0f), 44100, cfg);
  for (float v : mel.values.values())
    EXPECT_EQ(v, static_cast<float>(std::log(cfg.log_floor)));
}

TEST(MelSpectrogram, SineArgmaxIsNearestBand) {
  const DspConfig cfg;
  const auto mel = mel_spectrogram(sine(440.0, 0.5), 44100, cfg);
  const auto centers = mel_band_centers(cfg);
  const double target = hz_to_mel(440.0);
  std::size_t nearest = 0;
  for (std::size_t k = 0; k < centers.size(); ++k)
    if (std::abs(centers[k] - target) < std::abs(centers[nearest] - target))
      nearest = k;
  EXPECT_EQ(nearest_mel_band(440.0, cfg), nearest);
  for (std::size_t t = 2; t + 2 < mel.num_frames(); ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 64; ++k)
      if (mel.values.at(k, t) > mel.values.at(best, t))
        best = k;
    EXPECT_EQ(best, nearest) << t;
  }
}

TEST(MelSpectrogram, BitDeterministic) {
  nn::SplitMix64 rng(2);
  std::vector<float> x(44100);
  for (auto &v : x)
    v = static_cast<float>(rng.uniform(-1, 1));
  const DspConfig cfg;
  EXPECT_EQ(mel_spectrogram(x, 44100, cfg).values, mel_spectrogram(x, 44100, cfg).values);
}

TEST(Pitchgram, EmptyContour) {
  const auto pg = pitch_to_pitchgram({}, DspConfig{}, 50);
  for (float v : pg.values.values())
    EXPECT_EQ(v, 0.0f);
}

TEST(Pitchgram, SinglePointActivatesOneCell) {
  const DspConfig cfg;
  PitchContour c;
  c.points = {{0.105, 440.0, 0.9}};
  const auto pg = pitch_to_pitchgram(c, cfg, 30);
  const auto band = nearest_mel_band(440.0, cfg);
  for (std::size_t k = 0; k < 64; ++k)
    for (std::size_t t = 0; t < 30; ++t)
      EXPECT_EQ(pg.values.at(k, t), (t == 10 && k == band) ? 1.0f : 0.0f);
}

TEST(Pitchgram, LowConfidenceIsGated) {
  PitchContour c;
  c.points = {{0.105, 440.0, 0.4}, {0.205, 440.0, 0.5}};
  const auto pg = pitch_to_pitchgram(c, DspConfig{}, 30);
  for (float v : pg.values.values())
    EXPECT_EQ(v, 0.0f);
}

TEST(Pitchgram, ColumnsSumToAtMostOne) {
  nn::SplitMix64 rng(6);
  PitchContour c;
  for (double t = 0.0; t < 3.0; t += rng.uniform(0.001, 0.02))
    c.points.push_back({t, rng.uniform(60, 2000), rng.uniform()});
  const auto pg = pitch_to_pitchgram(c, DspConfig{}, 300);
  for (std::size_t t = 0; t < 300; ++t) {
    float sum = 0.0f;
    for (std::size_t k = 0; k < 64; ++k)
      sum += pg.values.at(k, t);
    EXPECT_LE(sum, 1.0f);
  }
}

TEST(AssembleFeatures, Channels) {
  const DspConfig cfg;
  const auto mel = mel_spectrogram(sine(220, 0.2), 44100, cfg);
  EXPECT_EQ(assemble_features(mel).shape(), (Shape{1, 64, mel.num_frames()}));
  const auto pg = pitch_to_pitchgram({}, cfg, mel.num_frames());
  const auto f = assemble_features(mel, &pg);
  EXPECT_EQ(f.shape(), (Shape{2, 64, mel.num_frames()}));
  EXPECT_EQ(f.at(0, 5, 3), mel.values.at(5, 3));
  const auto bad = pitch_to_pitchgram({}, cfg, mel.num_frames() + 1);
  EXPECT_ANY_THROW(assemble_features(mel, &bad));
}

TEST(FeatureCache, RoundTrip) {
  testing::TempDir dir;
  Tensor<float> f({2, 3, 4});
  for (std::size_t i = 0; i < f.size(); ++i)
    f[i] = static_cast<float>(i) * 0.25f - 1.0f;
  write_feature_cache(dir / "x.stfe", f, {{"track_id", "x"}});
  nlohmann::json header;
  EXPECT_EQ(read_feature_cache(dir / "x.stfe", &header), f);
  EXPECT_EQ(header["track_id"], "x");
  write_text_file(dir / "bad.stfe", "NOPE!");
  EXPECT_THROW(read_feature_cache(dir / "bad.stfe"), std::exception);
}

TEST(DspConfig, JsonRoundTripAndValidation) {
  DspConfig c;
  c.n_mels = 40;
  EXPECT_EQ(dsp_config_from_json(to_json(c)), c);
  EXPECT_THROW(dsp_config_from_json({{"bogus", 1}}), DspError);
  DspConfig bad;
  bad.fmax_hz = 30000;
  EXPECT_THROW(bad.validate(), DspError);
}

}  // namespace
}  // namespace stdet::dsp
