// SPDX-License-Identifier: Apache-2.0
/**
 * @file   annotation.hpp
 * @brief  Technique vocabulary, timed technique events, pitch contours,
 *         track/corpus metadata, and the interval <-> frame conversions.
 *
 * Times are 64-bit seconds. A frame roll with hop `h` assigns frame i the
 * half-open interval [i*h, (i+1)*h); an event marks a frame only when the
 * two intervals intersect with positive length.
 */
#ifndef STDET_ANNOTATION_HPP_
#define STDET_ANNOTATION_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stdet {

enum class Technique : std::uint8_t {
  vibrato,
  scooping,
  drop,
  bend,
  hiccup,
  melisma,
  trill,
  falsetto,
  breathy,
  whisper,
  rasp,
  vocal_fry,
  spoken,
  shout,
  tongue_trill,
  unknown,
};

enum class TechniqueCategory : std::uint8_t { pitch, timbre, misc };

inline constexpr std::size_t kVocabularySize = 15;

/// The 15 named techniques in table order (excludes `unknown`).
const std::array<Technique, kVocabularySize> &vocabulary();

/// The fixed 9-class detection subset, in alphabetical order.
const std::vector<Technique> &detection_classes();

std::string_view technique_name(Technique t);
std::string_view category_name(TechniqueCategory c);
TechniqueCategory technique_category(Technique t);

/// Case-insensitive; spaces and hyphens are read as underscores
/// ("Vocal Fry" -> vocal_fry). Anything else maps to `unknown`.
Technique parse_technique(std::string_view label);

struct TechniqueEvent {
  Technique technique = Technique::unknown;
  double onset_s = 0.0;
  double offset_s = 0.0;

  double duration_s() const noexcept { return offset_s - onset_s; }
  bool operator==(const TechniqueEvent &) const = default;
};

/// Orders by onset, then offset, then technique.
bool event_less(const TechniqueEvent &a, const TechniqueEvent &b);
void sort_events(std::vector<TechniqueEvent> &events);

struct PitchPoint {
  double time_s = 0.0;
  double f0_hz = 0.0;
  double confidence = 1.0;
  bool operator==(const PitchPoint &) const = default;
};

struct PitchContour {
  std::vector<PitchPoint> points;
  bool operator==(const PitchContour &) const = default;
};

struct TrackAnnotation {
  std::string track_id;
  std::string singer_id;
  double duration_s = 0.0;
  std::optional<int> year;
  std::vector<TechniqueEvent> events;
  PitchContour pitch;
  /// Output of an external pitch estimator, when the manifest names one.
  std::optional<PitchContour> estimated_pitch;
  std::optional<std::filesystem::path> audio_path;
};

struct Corpus {
  std::vector<TrackAnnotation> tracks;
};

/// Per-class, per-frame activity matrix, row-major [classes x frames].
class FrameRoll {
 public:
  FrameRoll() = default;
  FrameRoll(std::vector<Technique> class_order, std::size_t num_frames,
            double hop_s);

  std::size_t num_classes() const noexcept { return class_order_.size(); }
  std::size_t num_frames() const noexcept { return num_frames_; }
  double hop_s() const noexcept { return hop_s_; }
  const std::vector<Technique> &class_order() const noexcept {
    return class_order_;
  }

  float &at(std::size_t c, std::size_t i) { return values_[c * num_frames_ + i]; }
  float at(std::size_t c, std::size_t i) const {
    return values_[c * num_frames_ + i];
  }
  std::span<float> row(std::size_t c) {
    return {values_.data() + c * num_frames_, num_frames_};
  }
  std::span<const float> row(std::size_t c) const {
    return {values_.data() + c * num_frames_, num_frames_};
  }
  std::vector<float> &values() noexcept { return values_; }
  const std::vector<float> &values() const noexcept { return values_; }

  /// Row index of `t`, or nullopt when the roll does not carry that class.
  std::optional<std::size_t> index_of(Technique t) const;

  bool operator==(const FrameRoll &) const = default;

 private:
  std::vector<Technique> class_order_;
  std::size_t num_frames_ = 0;
  double hop_s_ = 0.0;
  std::vector<float> values_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string &message);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<TechniqueEvent> parse_events(std::string_view text);
std::string serialize_events(std::span<const TechniqueEvent> events);

PitchContour parse_pitch(std::string_view text);
std::string serialize_pitch(const PitchContour &contour);

/// First and one-past-last frame whose interval overlaps [onset, offset)
/// with positive length, clipped to [0, num_frames).
std::pair<std::size_t, std::size_t> overlapping_frames(double onset_s,
                                                       double offset_s,
                                                       double hop_s,
                                                       std::size_t num_frames);

FrameRoll rasterize(std::span<const TechniqueEvent> events,
                    std::size_t num_frames, double hop_s,
                    const std::vector<Technique> &class_order);

/// Maximal runs of active frames become events [start*h, (end+1)*h).
/// Runs shorter than `min_duration_s` are dropped. Cells > 0.5 are active.
std::vector<TechniqueEvent> roll_to_events(const FrameRoll &roll,
                                           double min_duration_s = 0.0);

std::string read_text_file(const std::filesystem::path &path);
void write_text_file(const std::filesystem::path &path, std::string_view text);

/// Loads a JSON manifest; relative paths resolve against its directory.
Corpus load_corpus(const std::filesystem::path &manifest);

/// Checks the TrackAnnotation and Corpus invariants; throws LoadError.
void validate_track(const TrackAnnotation &track);
void validate_corpus(const Corpus &corpus);

/// Writes `<dir>/manifest.json` plus per-track events/pitch CSVs. Audio
/// paths are stored relative to `dir` when they live under it.
std::filesystem::path save_corpus(const Corpus &corpus,
                                  const std::filesystem::path &dir);

}  // namespace stdet

#endif  // STDET_ANNOTATION_HPP_
