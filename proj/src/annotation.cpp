// SPDX-License-Identifier: Apache-2.0
#include "stdet/annotation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stdet/wav.hpp"

namespace stdet {

namespace {

constexpr std::array<std::string_view, kVocabularySize + 1> kNames = {
    "vibrato", "scooping", "drop",    "bend",      "hiccup", "melisma",
    "trill",   "falsetto", "breathy", "whisper",   "rasp",   "vocal_fry",
    "spoken",  "shout",    "tongue_trill", "unknown"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r' || s.front() == '\n'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty())
    return std::nullopt;
  if (s.front() == '+')
    s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

// Calls fn(line_number, fields) for every non-blank data row. A first row
// whose leading field is not numeric is treated as a header and skipped.
template <class Fn> void for_each_row(std::string_view text, Fn &&fn) {
  if (text.starts_with("\xEF\xBB\xBF"))
    text.remove_prefix(3);
  std::size_t line_no = 0;
  bool first = true;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line.front() == '#') {
      if (end == text.size())
        break;
      continue;
    }
    auto fields = split_fields(line);
    if (first) {
      first = false;
      if (!parse_number(fields.front())) {
        if (end == text.size())
          break;
        continue;
      }
    }
    fn(line_no, fields);
    if (end == text.size())
      break;
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

LoadError track_error(const std::string &track_id, const std::string &what) {
  return LoadError("track '" + track_id + "': " + what);
}

}  // namespace

const std::array<Technique, kVocabularySize> &vocabulary() {
  static const std::array<Technique, kVocabularySize> v = {
      Technique::vibrato,  Technique::scooping,  Technique::drop,
      Technique::bend,     Technique::hiccup,    Technique::melisma,
      Technique::trill,    Technique::falsetto,  Technique::breathy,
      Technique::whisper,  Technique::rasp,      Technique::vocal_fry,
      Technique::spoken,   Technique::shout,     Technique::tongue_trill};
  return v;
}

const std::vector<Technique> &detection_classes() {
  static const std::vector<Technique> v = {
      Technique::bend,     Technique::breathy,  Technique::drop,
      Technique::falsetto, Technique::hiccup,   Technique::rasp,
      Technique::scooping, Technique::vibrato,  Technique::vocal_fry};
  return v;
}

std::string_view technique_name(Technique t) {
  return kNames[static_cast<std::size_t>(t)];
}

std::string_view category_name(TechniqueCategory c) {
  switch (c) {
  case TechniqueCategory::pitch:
    return "pitch";
  case TechniqueCategory::timbre:
    return "timbre";
  case TechniqueCategory::misc:
    return "misc";
  }
  return "misc";
}

TechniqueCategory technique_category(Technique t) {
  switch (t) {
  case Technique::vibrato:
  case Technique::scooping:
  case Technique::drop:
  case Technique::bend:
  case Technique::hiccup:
  case Technique::melisma:
  case Technique::trill:
    return TechniqueCategory::pitch;
  case Technique::falsetto:
  case Technique::breathy:
  case Technique::whisper:
  case Technique::rasp:
  case Technique::vocal_fry:
    return TechniqueCategory::timbre;
  default:
    return TechniqueCategory::misc;
  }
}

Technique parse_technique(std::string_view label) {
  std::string norm;
  for (char ch : trim(label)) {
    if (ch == ' ' || ch == '-')
      ch = '_';
    norm.push_back(static_cast<char>(
        std::tolower(static_cast<unsigned char>(ch))));
  }
  for (std::size_t i = 0; i < kVocabularySize; ++i)
    if (kNames[i] == norm)
      return static_cast<Technique>(i);
  return Technique::unknown;
}

bool event_less(const TechniqueEvent &a, const TechniqueEvent &b) {
  if (a.onset_s != b.onset_s)
    return a.onset_s < b.onset_s;
  if (a.offset_s != b.offset_s)
    return a.offset_s < b.offset_s;
  return a.technique < b.technique;
}

void sort_events(std::vector<TechniqueEvent> &events) {
  std::stable_sort(events.begin(), events.end(), event_less);
}

FrameRoll::FrameRoll(std::vector<Technique> class_order, std::size_t num_frames,
                     double hop_s)
    : class_order_(std::move(class_order)), num_frames_(num_frames),
      hop_s_(hop_s), values_(class_order_.size() * num_frames, 0.0f) {
  if (!(hop_s > 0.0))
    throw std::invalid_argument("FrameRoll: hop must be positive");
}

std::optional<std::size_t> FrameRoll::index_of(Technique t) const {
  const auto it = std::find(class_order_.begin(), class_order_.end(), t);
  if (it == class_order_.end())
    return std::nullopt;
  return static_cast<std::size_t>(it - class_order_.begin());
}

ParseError::ParseError(std::size_t line, const std::string &message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message),
      line_(line) {}

std::vector<TechniqueEvent> parse_events(std::string_view text) {
  std::vector<TechniqueEvent> events;
  for_each_row(text, [&](std::size_t line,
                         const std::vector<std::string_view> &f) {
    if (f.size() != 3)
      throw ParseError(line, "expected 3 columns (onset_s,offset_s,label), got " +
                                 std::to_string(f.size()));
    const auto onset = parse_number(f[0]);
    const auto offset = parse_number(f[1]);
    if (!onset || !offset)
      throw ParseError(line, "non-numeric time");
    if (*onset < 0.0)
      throw ParseError(line, "negative onset");
    if (!(*onset < *offset))
      throw ParseError(line, "onset must be before offset");
    events.push_back({parse_technique(f[2]), *onset, *offset});
  });
  sort_events(events);
  return events;
}

std::string serialize_events(std::span<const TechniqueEvent> events) {
  std::string out = "onset_s,offset_s,label\n";
  for (const auto &e : events) {
    out += format_double(e.onset_s);
    out += ',';
    out += format_double(e.offset_s);
    out += ',';
    out += technique_name(e.technique);
    out += '\n';
  }
  return out;
}

PitchContour parse_pitch(std::string_view text) {
  PitchContour contour;
  std::optional<double> last_time;
  for_each_row(text, [&](std::size_t line,
                         const std::vector<std::string_view> &f) {
    if (f.size() != 2 && f.size() != 3)
      throw ParseError(line, "expected 2 or 3 columns (time_s,f0_hz[,confidence])");
    const auto t = parse_number(f[0]);
    const auto hz = parse_number(f[1]);
    if (!t || !hz)
      throw ParseError(line, "non-numeric value");
    double conf = 1.0;
    if (f.size() == 3 && !f[2].empty()) {
      const auto c = parse_number(f[2]);
      if (!c || *c < 0.0 || *c > 1.0)
        throw ParseError(line, "confidence must be a number in [0, 1]");
      conf = *c;
    }
    if (last_time && !(*t > *last_time))
      throw ParseError(line, "time column must be strictly increasing");
    last_time = *t;
    if (*hz > 0.0)
      contour.points.push_back({*t, *hz, conf});
  });
  return contour;
}

std::string serialize_pitch(const PitchContour &contour) {
  std::string out = "time_s,f0_hz,confidence\n";
  for (const auto &p : contour.points) {
    out += format_double(p.time_s);
    out += ',';
    out += format_double(p.f0_hz);
    out += ',';
    out += format_double(p.confidence);
    out += '\n';
  }
  return out;
}

std::pair<std::size_t, std::size_t> overlapping_frames(double onset_s,
                                                       double offset_s,
                                                       double hop_s,
                                                       std::size_t num_frames) {
  if (!(offset_s > onset_s) || num_frames == 0 || !(offset_s > 0.0))
    return {0, 0};
  // Estimate from division, then settle with the exact boundary products so
  // that decoding (which emits i*hop) and rasterizing agree bit for bit.
  const double guess = std::floor(std::max(onset_s, 0.0) / hop_s);
  auto first = static_cast<std::size_t>(std::max(guess - 1.0, 0.0));
  while (first < num_frames &&
         !(static_cast<double>(first + 1) * hop_s > onset_s))
    ++first;
  while (first > 0 && static_cast<double>(first) * hop_s > onset_s)
    --first;
  std::size_t last = first;
  while (last < num_frames && static_cast<double>(last) * hop_s < offset_s)
    ++last;
  return {std::min(first, num_frames), last};
}

FrameRoll rasterize(std::span<const TechniqueEvent> events,
                    std::size_t num_frames, double hop_s,
                    const std::vector<Technique> &class_order) {
  FrameRoll roll(class_order, num_frames, hop_s);
  for (const auto &e : events) {
    const auto row = roll.index_of(e.technique);
    if (!row)
      continue;
    const auto [first, last] =
        overlapping_frames(e.onset_s, e.offset_s, hop_s, num_frames);
    for (std::size_t i = first; i < last; ++i)
      roll.at(*row, i) = 1.0f;
  }
  return roll;
}

std::vector<TechniqueEvent> roll_to_events(const FrameRoll &roll,
                                           double min_duration_s) {
  std::vector<TechniqueEvent> events;
  const double hop = roll.hop_s();
  for (std::size_t c = 0; c < roll.num_classes(); ++c) {
    const auto row = roll.row(c);
    std::size_t i = 0;
    while (i < row.size()) {
      if (!(row[i] > 0.5f)) {
        ++i;
        continue;
      }
      std::size_t end = i;
      while (end < row.size() && row[end] > 0.5f)
        ++end;
      TechniqueEvent e{roll.class_order()[c], static_cast<double>(i) * hop,
                       static_cast<double>(end) * hop};
      // Length from the frame count so 5 frames of 10 ms pass a 50 ms minimum.
      const double length = static_cast<double>(end - i) * hop;
      if (!(length < min_duration_s - 1e-9))
        events.push_back(e);
      i = end;
    }
  }
  sort_events(events);
  return events;
}

std::string read_text_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path &path, std::string_view text) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw LoadError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out)
    throw LoadError("failed writing " + path.string());
}

void validate_track(const TrackAnnotation &track) {
  if (track.track_id.empty())
    throw LoadError("track with empty track_id");
  if (track.singer_id.empty())
    throw track_error(track.track_id, "empty singer_id");
  if (!(track.duration_s > 0.0) || !std::isfinite(track.duration_s))
    throw track_error(track.track_id, "duration must be positive");
  for (const auto &e : track.events) {
    if (e.onset_s < 0.0 || !(e.onset_s < e.offset_s))
      throw track_error(track.track_id, "malformed event interval");
    if (e.offset_s > track.duration_s)
      throw track_error(track.track_id,
                        "event " + std::string(technique_name(e.technique)) +
                            " ends at " + format_double(e.offset_s) +
                            " s, beyond track duration " +
                            format_double(track.duration_s) + " s");
  }
  const auto check_contour = [&](const PitchContour &c) {
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      const auto &p = c.points[i];
      if (!(p.f0_hz > 0.0) || p.confidence < 0.0 || p.confidence > 1.0)
        throw track_error(track.track_id, "invalid pitch point");
      if (i > 0 && !(p.time_s > c.points[i - 1].time_s))
        throw track_error(track.track_id, "pitch times not increasing");
    }
  };
  check_contour(track.pitch);
  if (track.estimated_pitch)
    check_contour(*track.estimated_pitch);
}

void validate_corpus(const Corpus &corpus) {
  std::set<std::string> ids;
  for (const auto &t : corpus.tracks) {
    validate_track(t);
    if (!ids.insert(t.track_id).second)
      throw track_error(t.track_id, "duplicate track_id");
  }
}

Corpus load_corpus(const std::filesystem::path &manifest) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(read_text_file(manifest));
  } catch (const json::exception &e) {
    throw LoadError(manifest.string() + ": invalid JSON: " + e.what());
  }
  if (!doc.is_array())
    throw LoadError(manifest.string() + ": manifest must be a JSON list");
  const auto base = manifest.parent_path();
  const auto resolve = [&](const std::string &p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  const auto optional_path = [](const json &obj, const char *key)
      -> std::optional<std::string> {
    if (!obj.contains(key) || obj[key].is_null())
      return std::nullopt;
    if (!obj[key].is_string())
      throw LoadError(std::string("manifest key '") + key + "' must be a string path");
    return obj[key].get<std::string>();
  };

  Corpus corpus;
  std::set<std::string> ids;
  for (const auto &obj : doc) {
    if (!obj.is_object() || !obj.contains("track_id") ||
        !obj["track_id"].is_string())
      throw LoadError(manifest.string() + ": entry without string track_id");
    TrackAnnotation t;
    t.track_id = obj["track_id"].get<std::string>();
    if (!ids.insert(t.track_id).second)
      throw track_error(t.track_id, "duplicate track_id");
    try {
      if (obj.contains("singer_id") && obj["singer_id"].is_string())
        t.singer_id = obj["singer_id"].get<std::string>();
      if (obj.contains("year") && obj["year"].is_number_integer())
        t.year = obj["year"].get<int>();
      if (obj.contains("duration_s") && obj["duration_s"].is_number())
        t.duration_s = obj["duration_s"].get<double>();

      const auto read_file = [&](const std::string &rel, const char *what) {
        const auto path = resolve(rel);
        if (!std::filesystem::exists(path))
          throw track_error(t.track_id, std::string("missing ") + what +
                                            " file " + path.string());
        return read_text_file(path);
      };
      if (const auto audio = optional_path(obj, "audio")) {
        const auto path = resolve(*audio);
        if (!std::filesystem::exists(path))
          throw track_error(t.track_id, "missing audio file " + path.string());
        t.audio_path = path;
        t.duration_s = read_wav_info(path).duration_s();
      }
      if (const auto ev = optional_path(obj, "events"))
        t.events = parse_events(read_file(*ev, "events"));
      if (const auto p = optional_path(obj, "pitch"))
        t.pitch = parse_pitch(read_file(*p, "pitch"));
      if (const auto p = optional_path(obj, "pitch_est"))
        t.estimated_pitch = parse_pitch(read_file(*p, "estimated pitch"));
    } catch (const ParseError &e) {
      throw track_error(t.track_id, e.what());
    } catch (const WavError &e) {
      throw track_error(t.track_id, e.what());
    }
    validate_track(t);
    corpus.tracks.push_back(std::move(t));
  }
  return corpus;
}

std::filesystem::path save_corpus(const Corpus &corpus,
                                  const std::filesystem::path &dir) {
  using nlohmann::json;
  validate_corpus(corpus);
  std::filesystem::create_directories(dir);
  json doc = json::array();
  for (const auto &t : corpus.tracks) {
    json obj;
    obj["track_id"] = t.track_id;
    obj["singer_id"] = t.singer_id;
    obj["duration_s"] = t.duration_s;
    obj["year"] = t.year ? json(*t.year) : json(nullptr);
    if (t.audio_path) {
      const auto rel = t.audio_path->lexically_proximate(dir);
      obj["audio"] = (rel.empty() ? *t.audio_path : rel).generic_string();
    } else {
      obj["audio"] = nullptr;
    }
    const std::string events_name = t.track_id + ".events.csv";
    write_text_file(dir / events_name, serialize_events(t.events));
    obj["events"] = events_name;
    const std::string pitch_name = t.track_id + ".pitch.csv";
    write_text_file(dir / pitch_name, serialize_pitch(t.pitch));
    obj["pitch"] = pitch_name;
    if (t.estimated_pitch) {
      const std::string est_name = t.track_id + ".pitch_est.csv";
      write_text_file(dir / est_name, serialize_pitch(*t.estimated_pitch));
      obj["pitch_est"] = est_name;
    }
    doc.push_back(std::move(obj));
  }
  const auto manifest = dir / "manifest.json";
  write_text_file(manifest, doc.dump(2) + "\n");
  return manifest;
}

}  // namespace stdet
