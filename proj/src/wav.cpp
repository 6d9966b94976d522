// SPDX-License-Identifier: Apache-2.0
#include "stdet/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace stdet {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const unsigned char *p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t le32(const unsigned char *p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::ostream &os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF),
                     static_cast<char>((v >> 8) & 0xFF)};
  os.write(b, 2);
}
void put32(std::ostream &os, std::uint32_t v) {
  const char b[4] = {
      static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
      static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b, 4);
}

struct Layout {
  WavInfo info;
  std::uint16_t bits = 0;
  std::streamoff data_offset = 0;
  std::uint64_t data_bytes = 0;
};

Layout parse_layout(std::ifstream &in, const std::filesystem::path &path) {
  const auto fail = [&](const std::string &why) {
    return WavError(path.string() + ": " + why);
  };
  std::array<unsigned char, 12> riff{};
  if (!in.read(reinterpret_cast<char *>(riff.data()), riff.size()))
    throw fail("truncated RIFF header");
  if (std::memcmp(riff.data(), "RIFF", 4) != 0 ||
      std::memcmp(riff.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  Layout layout;
  bool have_fmt = false;
  std::uint16_t format = 0;
  for (;;) {
    std::array<unsigned char, 8> hdr{};
    if (!in.read(reinterpret_cast<char *>(hdr.data()), hdr.size()))
      break;
    const std::uint32_t size = le32(hdr.data() + 4);
    if (std::memcmp(hdr.data(), "fmt ", 4) == 0) {
      if (size < 16)
        throw fail("fmt chunk too small");
      std::vector<unsigned char> fmt(size);
      if (!in.read(reinterpret_cast<char *>(fmt.data()), size))
        throw fail("truncated fmt chunk");
      format = le16(fmt.data());
      layout.info.channels = le16(fmt.data() + 2);
      layout.info.sample_rate = le32(fmt.data() + 4);
      layout.bits = le16(fmt.data() + 14);
      if (format == kFormatExtensible) {
        if (size < 26)
          throw fail("extensible fmt chunk too small");
        format = le16(fmt.data() + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr.data(), "data", 4) == 0) {
      if (!have_fmt)
        throw fail("data chunk before fmt chunk");
      layout.data_offset = in.tellg();
      layout.data_bytes = size;
      break;
    } else {
      in.seekg(size + (size & 1u), std::ios::cur);
    }
    if (size & 1u && std::memcmp(hdr.data(), "fmt ", 4) == 0)
      in.seekg(1, std::ios::cur);
  }
  if (!have_fmt || layout.data_offset == 0)
    throw fail("missing fmt or data chunk");
  if (layout.info.channels == 0)
    throw fail("zero channels");
  if (format == kFormatPcm && layout.bits == 16)
    layout.info.encoding = WavEncoding::pcm16;
  else if (format == kFormatFloat && layout.bits == 32)
    layout.info.encoding = WavEncoding::float32;
  else
    throw fail("unsupported encoding (need PCM 16-bit or float 32-bit)");

  // Some writers leave the data size as 0 or 0xFFFFFFFF when streaming.
  in.seekg(0, std::ios::end);
  const auto end = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t avail = end - static_cast<std::uint64_t>(layout.data_offset);
  if (layout.data_bytes == 0 || layout.data_bytes > avail)
    layout.data_bytes = avail;
  const std::uint64_t frame_bytes =
      static_cast<std::uint64_t>(layout.info.channels) * (layout.bits / 8);
  layout.info.frames = layout.data_bytes / frame_bytes;
  return layout;
}

}  // namespace

WavInfo read_wav_info(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw WavError("cannot open " + path.string());
  return parse_layout(in, path).info;
}

Audio read_wav(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw WavError("cannot open " + path.string());
  const Layout layout = parse_layout(in, path);
  const std::size_t channels = layout.info.channels;
  const std::size_t frames = layout.info.frames;
  const std::size_t bytes_per_sample = layout.bits / 8;

  std::vector<unsigned char> raw(frames * channels * bytes_per_sample);
  in.clear();
  in.seekg(layout.data_offset);
  if (!in.read(reinterpret_cast<char *>(raw.data()),
               static_cast<std::streamsize>(raw.size())))
    throw WavError(path.string() + ": truncated data chunk");

  Audio audio;
  audio.sample_rate = layout.info.sample_rate;
  audio.samples.resize(frames);
  const float scale = 1.0f / static_cast<float>(channels);
  for (std::size_t f = 0; f < frames; ++f) {
    float acc = 0.0f;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char *p = raw.data() + (f * channels + c) * bytes_per_sample;
      if (layout.info.encoding == WavEncoding::pcm16) {
        acc += static_cast<float>(static_cast<std::int16_t>(le16(p))) / 32768.0f;
      } else {
        const std::uint32_t bits = le32(p);
        float v;
        std::memcpy(&v, &bits, sizeof v);
        acc += v;
      }
    }
    audio.samples[f] = channels == 1 ? acc : acc * scale;
  }
  return audio;
}

void write_wav(const std::filesystem::path &path, std::span<const float> samples,
               std::uint32_t sample_rate, WavEncoding encoding) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw WavError("cannot write " + path.string());
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t format =
      encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(samples.size() * (bits / 8));

  out.write("RIFF", 4);
  put32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put32(out, 16);
  put16(out, format);
  put16(out, 1);
  put32(out, sample_rate);
  put32(out, sample_rate * (bits / 8));
  put16(out, bits / 8);
  put16(out, bits);
  out.write("data", 4);
  put32(out, data_bytes);
  for (float s : samples) {
    if (encoding == WavEncoding::pcm16) {
      const float c = std::clamp(s, -1.0f, 1.0f);
      const auto q = static_cast<std::int16_t>(std::lrint(c * 32767.0f));
      put16(out, static_cast<std::uint16_t>(q));
    } else {
      std::uint32_t b;
      std::memcpy(&b, &s, sizeof b);
      put32(out, b);
    }
  }
  if (!out)
    throw WavError("failed writing " + path.string());
}

}  // namespace stdet
