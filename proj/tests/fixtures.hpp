// SPDX-License-Identifier: Apache-2.0
// Hand-built fixtures with values computed by hand, shared by the unit tests
// and the acceptance runner.
#ifndef STDET_TESTS_FIXTURES_HPP_
#define STDET_TESTS_FIXTURES_HPP_

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "stdet/annotation.hpp"

namespace stdet::fixtures {

/// Three tracks, two singers:
///   a1 (alice, 10 s): vibrato 0-1, vibrato 2-3, breathy 2.5-4
///   b1 (bob,   20 s): scooping 1-1.25, vibrato 5-5.5, unknown 6-7
///   a2 (alice,  5 s): falsetto 0-5, breathy 1-2
inline Corpus stats_corpus() {
  auto track = [](std::string id, std::string singer, double dur,
                  std::vector<TechniqueEvent> events) {
    TrackAnnotation t;
    t.track_id = std::move(id);
    t.singer_id = std::move(singer);
    t.duration_s = dur;
    t.events = std::move(events);
    sort_events(t.events);
    return t;
  };
  Corpus c;
  c.tracks.push_back(track("a1", "alice", 10.0,
                           {{Technique::vibrato, 0.0, 1.0},
                            {Technique::vibrato, 2.0, 3.0},
                            {Technique::breathy, 2.5, 4.0}}));
  c.tracks.push_back(track("b1", "bob", 20.0,
                           {{Technique::scooping, 1.0, 1.25},
                            {Technique::vibrato, 5.0, 5.5},
                            {Technique::unknown, 6.0, 7.0}}));
  c.tracks.push_back(track("a2", "alice", 5.0,
                           {{Technique::falsetto, 0.0, 5.0},
                            {Technique::breathy, 1.0, 2.0}}));
  return c;
}

struct StatsExpectation {
  std::map<Technique, std::size_t> counts{{Technique::vibrato, 3},
                                          {Technique::breathy, 2},
                                          {Technique::scooping, 1},
                                          {Technique::falsetto, 1}};
  std::map<Technique, double> total_duration_s{{Technique::vibrato, 2.5},
                                               {Technique::breathy, 2.5},
                                               {Technique::scooping, 0.25},
                                               {Technique::falsetto, 5.0}};
  std::size_t unknown_count = 1;
  // Union of intervals over duration; a1: 3/10, b1: 0.75/20, a2: 5/5.
  std::map<std::string, double> coverage{{"a1", 0.3}, {"b1", 0.0375}, {"a2", 1.0}};
  double total_length_s = 35.0;
  double mean_track_length_s = 35.0 / 3.0;
  double mean_technique_length_s = 10.25 / 7.0;
  double mean_coverage = (0.3 + 0.0375 + 1.0) / 3.0;
  // Vibrato durations {1, 1, 0.5}: depth 2 median, depth 1 fourths/eighths.
  double vibrato_min = 0.5, vibrato_max = 1.0, vibrato_median = 1.0;
  double vibrato_lower_fourth = 0.5, vibrato_upper_fourth = 1.0;
  // Breathy durations {1.5, 1}: lower median of an even sample.
  double breathy_median = 1.0, breathy_lower_fourth = 1.0, breathy_upper_fourth = 1.5;
  std::vector<std::string> singers{"alice", "bob"};
  // Non-zero per-singer cells.
  std::map<std::pair<std::string, Technique>, std::size_t> per_singer{
      {{"alice", Technique::vibrato}, 2},
      {{"alice", Technique::breathy}, 2},
      {{"alice", Technique::falsetto}, 1},
      {{"bob", Technique::scooping}, 1},
      {{"bob", Technique::vibrato}, 1}};
};

}  // namespace stdet::fixtures

#endif  // STDET_TESTS_FIXTURES_HPP_
