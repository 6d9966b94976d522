// SPDX-License-Identifier: Apache-2.0
/**
 * @file   wav.hpp
 * @brief  RIFF/WAVE reader and writer (PCM 16-bit and IEEE float 32-bit).
 */
#ifndef STDET_WAV_HPP_
#define STDET_WAV_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace stdet {

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class WavEncoding { pcm16, float32 };

struct WavInfo {
  std::uint32_t sample_rate = 0;
  std::uint16_t channels = 0;
  WavEncoding encoding = WavEncoding::pcm16;
  std::uint64_t frames = 0;

  double duration_s() const {
    return sample_rate ? static_cast<double>(frames) / sample_rate : 0.0;
  }
};

/// Mono samples in [-1, 1]; multichannel input is averaged.
struct Audio {
  std::uint32_t sample_rate = 0;
  std::vector<float> samples;
};

WavInfo read_wav_info(const std::filesystem::path &path);
Audio read_wav(const std::filesystem::path &path);
void write_wav(const std::filesystem::path &path, std::span<const float> samples,
               std::uint32_t sample_rate,
               WavEncoding encoding = WavEncoding::pcm16);

}  // namespace stdet

#endif  // STDET_WAV_HPP_
