// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "../json_keys.hpp"
#include "stdet/experiment.hpp"
#include "stdet/nn/rng.hpp"
#include "stdet/wav.hpp"

namespace stdet {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPitchHop = 0.01;
constexpr std::array<int, 6> kPentatonic = {0, 2, 4, 7, 9, 12};

double midi_to_hz(double m) { return 440.0 * std::exp2((m - 69.0) / 12.0); }
double db_to_gain(double db) { return std::pow(10.0, db / 20.0); }

struct Note {
  double onset = 0.0;
  double offset = 0.0;
  double midi = 0.0;
  bool falsetto = false;
  double vibrato_start = -1.0;  // < 0: none
  double scoop_len = 0.0;
  double drop_len = 0.0;

  double semitones(double t) const {
    double m = midi + (falsetto ? 12.0 : 0.0);
    if (vibrato_start >= 0.0 && t >= vibrato_start)
      m += std::sin(kTwoPi * 6.0 * (t - vibrato_start));
    if (scoop_len > 0.0 && t < onset + scoop_len)
      m -= 3.0 * (1.0 - (t - onset) / scoop_len);
    if (drop_len > 0.0 && t > offset - drop_len)
      m -= 3.0 * (t - (offset - drop_len)) / drop_len;
    return m;
  }
};

// Second-order band-pass (constant peak gain), direct form I.
struct BandPass {
  double b0, b2, a1, a2;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  BandPass(double center_hz, double q, double sample_rate) {
    const double w = kTwoPi * center_hz / sample_rate;
    const double alpha = std::sin(w) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0 = alpha / a0;
    b2 = -alpha / a0;
    a1 = -2.0 * std::cos(w) / a0;
    a2 = (1.0 - alpha) / a0;
  }
  double operator()(double x) {
    const double y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

double fade(double t, double start, double end, double ramp) {
  const double a = std::clamp((t - start) / ramp, 0.0, 1.0);
  const double b = std::clamp((end - t) / ramp, 0.0, 1.0);
  return std::min(a, b);
}

}  // namespace

const std::vector<Technique> &surrogate_classes() {
  static const std::vector<Technique> classes = {
      Technique::vibrato, Technique::scooping, Technique::drop,
      Technique::breathy, Technique::falsetto};
  return classes;
}

std::map<Technique, double> default_synth_rates() {
  return {{Technique::vibrato, 4.0},
          {Technique::scooping, 4.0},
          {Technique::drop, 4.0},
          {Technique::breathy, 3.0},
          {Technique::falsetto, 3.0}};
}

void SynthSpec::validate() const {
  if (n_singers == 0 || tracks_per_singer == 0)
    throw ExperimentError("synth: need at least one singer and one track");
  if (!(track_len_s >= 1.0))
    throw ExperimentError("synth: tracks must be at least 1 s long");
  if (sample_rate == 0)
    throw ExperimentError("synth: sample rate must be positive");
  for (const auto &[t, rate] : rates) {
    if (std::find(surrogate_classes().begin(), surrogate_classes().end(), t) ==
        surrogate_classes().end())
      throw ExperimentError("synth: no surrogate for class '" +
                            std::string(technique_name(t)) + "'");
    if (!(rate >= 0.0) || !std::isfinite(rate))
      throw ExperimentError("synth: rates must be finite and >= 0");
  }
}

nlohmann::json to_json(const SynthSpec &spec) {
  nlohmann::json rates = nlohmann::json::object();
  for (const auto &[t, r] : spec.rates)
    rates[std::string(technique_name(t))] = r;
  return {{"n_singers", spec.n_singers},
          {"tracks_per_singer", spec.tracks_per_singer},
          {"track_len_s", spec.track_len_s},
          {"rates", rates},
          {"seed", spec.seed},
          {"sample_rate", spec.sample_rate}};
}

SynthSpec synth_spec_from_json(const nlohmann::json &j) {
  detail::reject_unknown_keys<ExperimentError>(
      j,
      {"n_singers", "tracks_per_singer", "track_len_s", "rates", "seed",
       "sample_rate"},
      "synth spec");
  SynthSpec s;
  s.n_singers = j.value("n_singers", s.n_singers);
  s.tracks_per_singer = j.value("tracks_per_singer", s.tracks_per_singer);
  s.track_len_s = j.value("track_len_s", s.track_len_s);
  s.seed = j.value("seed", s.seed);
  s.sample_rate = j.value("sample_rate", s.sample_rate);
  if (j.contains("rates")) {
    if (!j["rates"].is_object())
      throw ExperimentError("synth: rates must be an object of class -> rate");
    for (const auto &[name, rate] : j["rates"].items()) {
      const auto t = parse_technique(name);
      if (t == Technique::unknown)
        throw ExperimentError("synth: unknown class '" + name + "'");
      s.rates[t] = rate.get<double>();
    }
  } else {
    s.rates = default_synth_rates();
  }
  s.validate();
  return s;
}

SynthTrack synth_track(const SynthSpec &spec, std::size_t singer,
                       std::size_t track, std::uint64_t rng_seed) {
  spec.validate();
  const double sr = spec.sample_rate;
  const double len = spec.track_len_s;
  nn::SplitMix64 rng(rng_seed);

  // Singer identity: register and harmonic balance.
  nn::SplitMix64 voice(spec.seed ^ (0x9E3779B97F4A7C15ULL * (singer + 1)));
  const double base_midi = 52.0 + static_cast<double>((singer * 5) % 9);
  const double h2 = 0.5 * voice.uniform(0.8, 1.2);
  const double h3 = 0.3 * voice.uniform(0.8, 1.2);

  std::vector<Note> notes;
  for (double t = rng.uniform(0.1, 0.4);;) {
    double dur = rng.uniform(0.6, 2.0);
    dur = std::min(dur, len - 0.05 - t);
    if (dur < 0.6)
      break;
    Note n;
    n.onset = t;
    n.offset = t + dur;
    n.midi = base_midi + kPentatonic[rng.below(kPentatonic.size())];
    notes.push_back(n);
    t += dur + rng.uniform(0.05, 0.25);
  }

  auto rate = [&](Technique c) {
    auto it = spec.rates.find(c);
    const double r = it == spec.rates.end() ? 0.0 : it->second;
    return notes.empty() ? 0.0 : std::min(1.0, r / static_cast<double>(notes.size()));
  };
  double p_vib = rate(Technique::vibrato), p_scoop = rate(Technique::scooping),
         p_drop = rate(Technique::drop);
  const double p_pitch = p_vib + p_scoop + p_drop;
  if (p_pitch > 1.0) {
    p_vib /= p_pitch;
    p_scoop /= p_pitch;
    p_drop /= p_pitch;
  }
  const double p_breathy = rate(Technique::breathy);
  const double p_falsetto = rate(Technique::falsetto);

  SynthTrack out;
  auto &ann = out.annotation;
  char id[64];
  std::snprintf(id, sizeof id, "s%02zu_t%zu", singer, track);
  ann.track_id = id;
  std::snprintf(id, sizeof id, "singer%02zu", singer);
  ann.singer_id = id;
  ann.duration_s = len;

  struct Noise {
    double start, end;
  };
  std::vector<Noise> noises;
  for (auto &n : notes) {
    const double dur = n.offset - n.onset;
    const double u = rng.uniform();
    if (u < p_vib) {
      const double d = std::min(rng.uniform(0.5, 1.5), dur);
      n.vibrato_start = n.offset - d;
      ann.events.push_back({Technique::vibrato, n.vibrato_start, n.offset});
    } else if (u < p_vib + p_scoop) {
      n.scoop_len = rng.uniform(0.1, 0.3);
      ann.events.push_back({Technique::scooping, n.onset, n.onset + n.scoop_len});
    } else if (u < p_vib + p_scoop + p_drop) {
      n.drop_len = rng.uniform(0.1, 0.3);
      ann.events.push_back({Technique::drop, n.offset - n.drop_len, n.offset});
    }
    if (rng.uniform() < p_falsetto) {
      n.falsetto = true;
      ann.events.push_back({Technique::falsetto, n.onset, n.offset});
    }
    if (rng.uniform() < p_breathy) {
      const double d = std::min(rng.uniform(0.3, 1.0), dur);
      const double start = n.onset + rng.uniform(0.0, dur - d);
      noises.push_back({start, start + d});
      ann.events.push_back({Technique::breathy, start, start + d});
    }
  }
  sort_events(ann.events);

  const auto n_samples = static_cast<std::size_t>(std::llround(len * sr));
  out.samples.assign(n_samples, 0.0f);
  constexpr double amp = 0.2;
  const double tone_rms = amp * std::sqrt((1.0 + h2 * h2 + h3 * h3) / 2.0);
  for (const auto &n : notes) {
    const double falsetto_gain = n.falsetto ? db_to_gain(-12.0) : 1.0;
    const double a2 = h2 * falsetto_gain, a3 = h3 * falsetto_gain;
    double phase = 0.0;
    const auto i0 = static_cast<std::size_t>(std::ceil(n.onset * sr));
    const auto i1 = std::min(n_samples, static_cast<std::size_t>(std::ceil(n.offset * sr)));
    for (std::size_t i = i0; i < i1; ++i) {
      const double t = static_cast<double>(i) / sr;
      const double f0 = midi_to_hz(n.semitones(t));
      phase += kTwoPi * f0 / sr;
      if (phase > kTwoPi)
        phase -= kTwoPi;
      const double env = fade(t, n.onset, n.offset, 0.02);
      out.samples[i] += static_cast<float>(
          amp * env *
          (std::sin(phase) + a2 * std::sin(2.0 * phase) + a3 * std::sin(3.0 * phase)));
    }
  }
  const double noise_rms = tone_rms * db_to_gain(-10.0);
  for (const auto &z : noises) {
    const auto i0 = static_cast<std::size_t>(std::ceil(z.start * sr));
    const auto i1 = std::min(n_samples, static_cast<std::size_t>(std::ceil(z.end * sr)));
    BandPass bp(3000.0, 0.7, sr);
    std::vector<double> buf(i1 > i0 ? i1 - i0 : 0);
    double energy = 0.0;
    for (auto &v : buf) {
      v = bp(rng.normal());
      energy += v * v;
    }
    const double scale =
        buf.empty() ? 0.0 : noise_rms / std::sqrt(energy / static_cast<double>(buf.size()));
    for (std::size_t k = 0; k < buf.size(); ++k) {
      const double t = static_cast<double>(i0 + k) / sr;
      out.samples[i0 + k] += static_cast<float>(scale * buf[k] * fade(t, z.start, z.end, 0.01));
    }
  }
  // A faint noise floor keeps silent frames off the log floor.
  for (auto &s : out.samples)
    s += static_cast<float>(1e-4 * rng.normal());

  // Contours at frame centres, voiced inside notes only.
  PitchContour estimated;
  std::size_t note_idx = 0;
  const auto frames = static_cast<std::size_t>(std::floor(len / kPitchHop));
  for (std::size_t k = 0; k < frames; ++k) {
    const double t = (static_cast<double>(k) + 0.5) * kPitchHop;
    while (note_idx < notes.size() && notes[note_idx].offset <= t)
      ++note_idx;
    if (note_idx == notes.size())
      break;
    const auto &n = notes[note_idx];
    if (t < n.onset)
      continue;
    const double f0 = midi_to_hz(n.semitones(t));
    ann.pitch.points.push_back({t, f0, 1.0});
    double est = f0;
    const double u = rng.uniform();
    if (u < 0.025)
      est *= 2.0;
    else if (u < 0.05)
      est *= 0.5;
    estimated.points.push_back({t, est, rng.uniform(0.3, 1.0)});
  }
  ann.estimated_pitch = std::move(estimated);
  return out;
}

Corpus synth_corpus(const SynthSpec &spec, const std::filesystem::path &dir) {
  spec.validate();
  const auto audio_dir = dir / "audio";
  std::filesystem::create_directories(audio_dir);
  Corpus corpus;
  for (std::size_t s = 0; s < spec.n_singers; ++s)
    for (std::size_t t = 0; t < spec.tracks_per_singer; ++t) {
      const std::uint64_t seed =
          nn::SplitMix64(spec.seed ^ ((s << 20 | t) * 0xD1B54A32D192ED03ULL))();
      auto synth = synth_track(spec, s, t, seed);
      const auto wav = audio_dir / (synth.annotation.track_id + ".wav");
      write_wav(wav, synth.samples, spec.sample_rate);
      synth.annotation.audio_path = std::filesystem::absolute(wav);
      corpus.tracks.push_back(std::move(synth.annotation));
    }
  validate_corpus(corpus);
  save_corpus(corpus, dir);
  return corpus;
}

}  // namespace stdet
