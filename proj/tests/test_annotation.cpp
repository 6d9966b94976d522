// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "stdet/annotation.hpp"
#include "stdet/nn/rng.hpp"
#include "stdet/wav.hpp"
#include "test_util.hpp"

namespace stdet {
namespace {

using testing::ev;
using testing::TempDir;

TEST(Vocabulary, CategoriesFollowTheTable) {
  EXPECT_EQ(vocabulary().size(), 15u);
  for (auto t : {Technique::vibrato, Technique::scooping, Technique::drop,
                 Technique::bend, Technique::hiccup, Technique::melisma,
                 Technique::trill})
    EXPECT_EQ(technique_category(t), TechniqueCategory::pitch) << technique_name(t);
  for (auto t : {Technique::falsetto, Technique::breathy, Technique::whisper,
                 Technique::rasp, Technique::vocal_fry})
    EXPECT_EQ(technique_category(t), TechniqueCategory::timbre) << technique_name(t);
  for (auto t : {Technique::spoken, Technique::shout, Technique::tongue_trill})
    EXPECT_EQ(technique_category(t), TechniqueCategory::misc) << technique_name(t);
}

TEST(Vocabulary, DetectionSubsetIsTheNineClasses) {
  const std::vector<Technique> expected = {
      Technique::bend,     Technique::breathy, Technique::drop,
      Technique::falsetto, Technique::hiccup,  Technique::rasp,
      Technique::scooping, Technique::vibrato, Technique::vocal_fry};
  EXPECT_EQ(detection_classes(), expected);
}

TEST(Vocabulary, LabelsParseCaseInsensitively) {
  EXPECT_EQ(parse_technique("Vibrato"), Technique::vibrato);
  EXPECT_EQ(parse_technique("Vocal Fry"), Technique::vocal_fry);
  EXPECT_EQ(parse_technique("tongue-trill"), Technique::tongue_trill);
  EXPECT_EQ(parse_technique("growl"), Technique::unknown);
}

TEST(ParseEvents, SingleRow) {
  const auto e = parse_events("onset_s,offset_s,label\n0.10,0.20,vibrato");
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0], ev(Technique::vibrato, 0.10, 0.20));
}

TEST(ParseEvents, EmptyBody) {
  EXPECT_TRUE(parse_events("onset_s,offset_s,label\n").empty());
}

TEST(ParseEvents, OnsetAfterOffsetCitesTheLine) {
  try {
    parse_events("onset_s,offset_s,label\n0.5,0.4,drop\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError &e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ParseEvents, MalformedRowsAreErrors) {
  EXPECT_THROW(parse_events("onset_s,offset_s,label\n0.1,0.2\n"), ParseError);
  EXPECT_THROW(parse_events("onset_s,offset_s,label\nabc,0.2,drop\n"), ParseError);
}

TEST(ParseEvents, SortsAndMapsUnknownLabels) {
  const auto e = parse_events("onset_s,offset_s,label\n1,2,Drop\n0,1,mystery\n");
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0], ev(Technique::unknown, 0, 1));
  EXPECT_EQ(e[1], ev(Technique::drop, 1, 2));
}

TEST(ParseEvents, SerializeRoundTrip) {
  nn::SplitMix64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TechniqueEvent> events;
    const auto n = rng.below(12);
    for (std::size_t i = 0; i < n; ++i) {
      const double on = std::round(rng.uniform(0, 100) * 1000) / 1000;
      const double len = std::round(rng.uniform(0.001, 5) * 1000) / 1000;
      events.push_back({vocabulary()[rng.below(kVocabularySize)], on, on + len});
    }
    sort_events(events);
    EXPECT_EQ(parse_events(serialize_events(events)), events);
  }
}

TEST(ParsePitch, ThreeColumns) {
  const auto c = parse_pitch("time_s,f0_hz,confidence\n0.00,440.0,0.9\n0.01,441.0,0.8");
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_EQ(c.points[1].f0_hz, 441.0);
  EXPECT_EQ(c.points[1].confidence, 0.8);
}

TEST(ParsePitch, MissingConfidenceDefaultsToOne) {
  const auto c = parse_pitch("time_s,f0_hz,confidence\n0.00,440.0");
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_EQ(c.points[0].confidence, 1.0);
}

TEST(ParsePitch, NonIncreasingTimeIsAnError) {
  EXPECT_THROW(parse_pitch("time_s,f0_hz,confidence\n0.01,440,1\n0.00,441,1"), ParseError);
}

TEST(ParsePitch, UnvoicedRowsAreDropped) {
  const auto c = parse_pitch("time_s,f0_hz,confidence\n0.00,0,1\n0.01,-1,1\n0.02,300,1");
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_EQ(c.points[0].time_s, 0.02);
}

TEST(Rasterize, SingleEvent) {
  const std::vector<TechniqueEvent> e = {ev(Technique::vibrato, 0.10, 0.20)};
  const auto roll = rasterize(e, 100, 0.01, detection_classes());
  const auto row = *roll.index_of(Technique::vibrato);
  for (std::size_t i = 0; i < 100; ++i)
    EXPECT_EQ(roll.at(row, i), (i >= 10 && i < 20) ? 1.0f : 0.0f) << i;
  for (std::size_t c = 0; c < roll.num_classes(); ++c)
    if (c != row) {
      for (float v : roll.row(c))
        EXPECT_EQ(v, 0.0f);
    }
}

TEST(Rasterize, EmptyGivesZeroRoll) {
  const auto roll = rasterize({}, 50, 0.01, detection_classes());
  for (float v : roll.values())
    EXPECT_EQ(v, 0.0f);
}

TEST(Rasterize, DifferentClassesOverlap) {
  const std::vector<TechniqueEvent> e = {ev(Technique::vibrato, 0, 1),
                                         ev(Technique::breathy, 0.5, 1.5)};
  const auto roll = rasterize(e, 200, 0.01, detection_classes());
  const auto v = *roll.index_of(Technique::vibrato);
  const auto b = *roll.index_of(Technique::breathy);
  for (std::size_t i = 0; i < 200; ++i) {
    EXPECT_EQ(roll.at(v, i), i < 100 ? 1.0f : 0.0f) << i;
    EXPECT_EQ(roll.at(b, i), (i >= 50 && i < 150) ? 1.0f : 0.0f) << i;
  }
}

TEST(Rasterize, BoundaryTouchDoesNotMark) {
  // [0.10, 0.20) touches frame 20 only at a point.
  const auto roll = rasterize({{ev(Technique::drop, 0.10, 0.20)}}, 30, 0.01,
                              {Technique::drop});
  EXPECT_EQ(roll.at(0, 9), 0.0f);
  EXPECT_EQ(roll.at(0, 20), 0.0f);
}

TEST(Rasterize, TruncatesBeyondTheRoll) {
  const auto roll = rasterize({{ev(Technique::drop, 0.05, 5.0)}}, 10, 0.01,
                              {Technique::drop});
  for (std::size_t i = 0; i < 10; ++i)
    EXPECT_EQ(roll.at(0, i), i >= 5 ? 1.0f : 0.0f);
}

TEST(Rasterize, IsMonotoneUnderAddedEvents) {
  nn::SplitMix64 rng(5);
  const std::vector<Technique> classes = {Technique::vibrato, Technique::drop};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TechniqueEvent> events;
    for (int i = 0; i < 4; ++i) {
      const double on = rng.uniform(0, 2);
      events.push_back({classes[rng.below(2)], on, on + rng.uniform(0.001, 0.5)});
    }
    const auto before = rasterize(events, 250, 0.01, classes);
    const double on = rng.uniform(0, 2);
    events.push_back({classes[rng.below(2)], on, on + rng.uniform(0.001, 0.5)});
    const auto after = rasterize(events, 250, 0.01, classes);
    for (std::size_t i = 0; i < before.values().size(); ++i)
      EXPECT_GE(after.values()[i], before.values()[i]);
  }
}

TEST(RollToEvents, InverseOfRasterize) {
  FrameRoll roll({Technique::vibrato}, 100, 0.01);
  for (std::size_t i = 10; i < 20; ++i)
    roll.at(0, i) = 1.0f;
  const auto e = roll_to_events(roll, 0.0);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0], ev(Technique::vibrato, 10 * 0.01, 20 * 0.01));
  EXPECT_NEAR(e[0].onset_s, 0.10, 1e-15);
  EXPECT_NEAR(e[0].offset_s, 0.20, 1e-15);
}

TEST(RollToEvents, AllZero) {
  EXPECT_TRUE(roll_to_events(FrameRoll({Technique::drop}, 40, 0.01), 0.0).empty());
}

TEST(RollToEvents, ShortRunIsDropped) {
  FrameRoll roll({Technique::drop}, 40, 0.01);
  roll.at(0, 7) = 1.0f;
  EXPECT_TRUE(roll_to_events(roll, 0.05).empty());
  EXPECT_EQ(roll_to_events(roll, 0.0).size(), 1u);
}

TEST(RollToEvents, FiveFramesPassTheFiftyMillisecondMinimum) {
  FrameRoll roll({Technique::drop}, 40, 0.01);
  for (std::size_t i = 10; i < 15; ++i)
    roll.at(0, i) = 1.0f;
  EXPECT_EQ(roll_to_events(roll, 0.05).size(), 1u);
}

TEST(LoadCorpus, TwoValidTracks) {
  TempDir dir;
  write_text_file(dir / "a.events.csv", "onset_s,offset_s,label\n0.5,1.0,vibrato\n");
  write_text_file(dir / "b.events.csv", "onset_s,offset_s,label\n");
  write_text_file(dir / "a.pitch.csv", "time_s,f0_hz,confidence\n0.0,220,0.9\n");
  write_text_file(dir / "manifest.json", R"([
    {"track_id":"a","singer_id":"s1","duration_s":10,"year":2001,"audio":null,
     "events":"a.events.csv","pitch":"a.pitch.csv"},
    {"track_id":"b","singer_id":"s2","duration_s":5,"events":"b.events.csv"}])");
  const auto c = load_corpus(dir / "manifest.json");
  ASSERT_EQ(c.tracks.size(), 2u);
  EXPECT_EQ(c.tracks[0].year, 2001);
  EXPECT_EQ(c.tracks[0].events.size(), 1u);
  EXPECT_EQ(c.tracks[0].pitch.points.size(), 1u);
  EXPECT_EQ(c.tracks[1].duration_s, 5.0);
}

TEST(LoadCorpus, DuplicateTrackId) {
  TempDir dir;
  write_text_file(dir / "manifest.json", R"([
    {"track_id":"a","singer_id":"s1","duration_s":10},
    {"track_id":"a","singer_id":"s2","duration_s":10}])");
  EXPECT_THROW(load_corpus(dir / "manifest.json"), LoadError);
}

TEST(LoadCorpus, EventBeyondDurationNamesTheTrack) {
  TempDir dir;
  write_text_file(dir / "x.events.csv", "onset_s,offset_s,label\n10,200,vibrato\n");
  write_text_file(dir / "manifest.json",
                  R"([{"track_id":"long_one","singer_id":"s","duration_s":100,
                       "events":"x.events.csv"}])");
  try {
    load_corpus(dir / "manifest.json");
    FAIL();
  } catch (const LoadError &e) {
    EXPECT_NE(std::string(e.what()).find("long_one"), std::string::npos);
  }
}

TEST(LoadCorpus, MissingFileIsAnError) {
  TempDir dir;
  write_text_file(dir / "manifest.json",
                  R"([{"track_id":"t","singer_id":"s","duration_s":1,
                       "audio":"nowhere.wav"}])");
  EXPECT_THROW(load_corpus(dir / "manifest.json"), LoadError);
}

TEST(LoadCorpus, DurationComesFromTheAudioHeader) {
  TempDir dir;
  write_wav(dir / "t.wav", std::vector<float>(44100 * 2, 0.0f), 44100);
  write_text_file(dir / "manifest.json",
                  R"([{"track_id":"t","singer_id":"s","duration_s":99,"audio":"t.wav"}])");
  const auto c = load_corpus(dir / "manifest.json");
  EXPECT_EQ(c.tracks[0].duration_s, 2.0);
}

TEST(SaveCorpus, RoundTrip) {
  TempDir dir;
  Corpus c;
  auto t = testing::make_track("t1", "s1", 12.5,
                               {ev(Technique::vibrato, 1, 2), ev(Technique::rasp, 3, 3.25)});
  t.pitch.points = {{0.005, 220.0, 1.0}, {0.015, 221.5, 0.75}};
  t.estimated_pitch = PitchContour{{{0.005, 440.0, 0.5}}};
  c.tracks.push_back(t);
  const auto manifest = save_corpus(c, dir.path());
  const auto back = load_corpus(manifest);
  ASSERT_EQ(back.tracks.size(), 1u);
  EXPECT_EQ(back.tracks[0].events, t.events);
  EXPECT_EQ(back.tracks[0].pitch, t.pitch);
  EXPECT_EQ(back.tracks[0].estimated_pitch, t.estimated_pitch);
  EXPECT_EQ(back.tracks[0].duration_s, 12.5);
}

}  // namespace
}  // namespace stdet
