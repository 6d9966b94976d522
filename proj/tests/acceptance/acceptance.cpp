// SPDX-License-Identifier: Apache-2.0
// Acceptance runner: checks every criterion at its stated tolerance and
// prints one PASS/FAIL line each. Exit status is 0 only if all pass.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stdet/detector.hpp"
#include "stdet/dsp.hpp"
#include "stdet/evaluation.hpp"
#include "stdet/experiment.hpp"
#include "stdet/nn/gradcheck.hpp"
#include "stdet/nn/loss.hpp"
#include "stdet/nn/rng.hpp"
#include "stdet/runtime.hpp"
#include "stdet/stats.hpp"

namespace fs = std::filesystem;
using namespace stdet;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string &what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string &s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// --- 1 ------------------------------------------------------------------------

Outcome gradients() {
  Outcome o;
  const auto t0 = Clock::now();
  auto record = [&](const char *name, const nn::GradCheckResult &r) {
    o.check(r.max_rel_error < 1e-4 && r.checked > 0,
            std::string(name) + " rel " + fmt("%.2e", r.max_rel_error) + " at " + r.worst);
    o.note(std::string(name) + " " + fmt("%.1e", r.max_rel_error));
  };
  record("conv2d", nn::grad_check_conv2d(1));
  record("bigru", nn::grad_check_bigru(1));
  record("linear_sigmoid", nn::grad_check_linear_sigmoid(1));
  record("bce", nn::grad_check_bce(1));
  record("focal", nn::grad_check_focal(1));
  ModelConfig tiny;
  tiny.input_channels = 2;
  tiny.n_mels = 16;
  tiny.conv = {{4, 3, 3, 4}, {4, 3, 3, 2}, {4, 3, 3, 2}};
  tiny.gru_hidden = 3;
  record("crnn 2x16x20", grad_check_crnn(tiny, 20, 1));
  const double secs = seconds_since(t0);
  o.check(secs < 60.0, "runtime " + fmt("%.1f s", secs));
  return o;
}

// --- 2 ------------------------------------------------------------------------

Outcome loss_identity() {
  Outcome o;
  nn::SplitMix64 rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(64);
    Tensor<double> p({n}), y({n});
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform();
      y[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    }
    worst = std::max(worst, std::abs(nn::focal_loss<double>(p, y, nullptr, 1.0, 0.0) -
                                     nn::bce_loss<double>(p, y)));
  }
  o.check(worst <= 1e-12, "focal(1,0) vs bce " + fmt("%.2e", worst));
  const Tensor<double> p({1}, 0.5), y({1}, 1.0);
  const double v = nn::focal_loss<double>(p, y, nullptr, 0.2, 2.0);
  o.check(std::abs(v - 0.0346574) <= 1e-6, "focal(0.5) = " + fmt("%.7f", v));
  o.note("max |focal-bce| " + fmt("%.1e", worst) + ", focal(0.5) " + fmt("%.7f", v));
  return o;
}

// --- 3 ------------------------------------------------------------------------

Outcome metric_oracle() {
  Outcome o;
  nn::SplitMix64 rng(3);
  const auto &vocab = vocabulary();
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n_classes = 1 + rng.below(10), n_segments = rng.below(201);
    const std::vector<Technique> order(vocab.begin(), vocab.begin() + n_classes);
    ActivityMatrix ref(order, n_segments, kSegmentLength), pred = ref;
    std::vector<std::vector<bool>> r(n_classes, std::vector<bool>(n_segments)), p = r;
    const double density = rng.uniform();
    for (std::size_t c = 0; c < n_classes; ++c)
      for (std::size_t s = 0; s < n_segments; ++s) {
        r[c][s] = rng.uniform() < density;
        p[c][s] = rng.uniform() < density;
        ref.set(c, s, r[c][s]);
        pred.set(c, s, p[c][s]);
      }
    const auto expect = oracle::brute_force_metrics(r, p);
    const auto scores = score_segments(ref, pred);
    const auto got = aggregate(scores);
    if (scores.counts != expect.counts || got.macro_f != expect.macro_f ||
        got.micro_f != expect.micro_f || got.micro_p != expect.micro_p ||
        got.micro_r != expect.micro_r)
      ++mismatches;
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " oracle mismatches");
  const std::vector<Technique> vib = {Technique::vibrato};
  const std::vector<TechniqueEvent> ref = {{Technique::vibrato, 0.0, 1.0}};
  const std::vector<TechniqueEvent> pred = {{Technique::vibrato, 0.5, 1.5}};
  const auto m = aggregate(score_track(ref, pred, 2.0, vib)).classes[0];
  o.check(m.precision == 0.5 && m.recall == 0.5 && m.f == 0.5, "fixture P/R/F");
  o.note("100 instances, fixture P=R=F=" + fmt("%.3f", m.f));
  return o;
}

// --- 4 ------------------------------------------------------------------------

Outcome round_trip() {
  Outcome o;
  nn::SplitMix64 rng(4);
  const std::vector<Technique> classes = {Technique::vibrato, Technique::breathy,
                                          Technique::falsetto, Technique::drop};
  const double hop = 0.01;
  int inexact = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t frames = 1 + rng.below(1500);
    const auto events = oracle::random_aligned_events(rng, classes, frames, hop);
    auto back = roll_to_events(rasterize(events, frames, hop, classes));
    sort_events(back);
    inexact += back != events;
  }
  o.check(inexact == 0, std::to_string(inexact) + " inexact aligned round trips");

  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<TechniqueEvent> events;
    const double dur = 20.0;
    for (Technique t : classes) {
      double at = rng.uniform(0.0, 0.5);
      while (true) {
        const double len = rng.uniform(0.01, 2.0);
        if (at + len > dur)
          break;
        events.push_back({t, at, at + len});
        at += len + rng.uniform(0.02, 1.0);  // keeps a free frame between events
      }
    }
    const std::size_t frames = static_cast<std::size_t>(std::ceil(dur / hop));
    const auto back = roll_to_events(rasterize(events, frames, hop, classes));
    // Snapping can reorder events of different classes, so pair per class.
    for (Technique t : classes) {
      std::vector<TechniqueEvent> want, got;
      std::copy_if(events.begin(), events.end(), std::back_inserter(want),
                   [&](const TechniqueEvent &e) { return e.technique == t; });
      std::copy_if(back.begin(), back.end(), std::back_inserter(got),
                   [&](const TechniqueEvent &e) { return e.technique == t; });
      if (want.size() != got.size()) {
        worst = INFINITY;
        break;
      }
      for (std::size_t i = 0; i < want.size(); ++i)
        worst = std::max({worst, std::abs(got[i].onset_s - want[i].onset_s),
                          std::abs(got[i].offset_s - want[i].offset_s)});
    }
  }
  o.check(worst < 0.010, "boundary error " + fmt("%.4f ms", 1e3 * worst));
  o.note("1000 aligned sets exact, max boundary error " + fmt("%.4f ms", 1e3 * worst));
  return o;
}

// --- 5 ------------------------------------------------------------------------

Outcome dsp_checks() {
  Outcome o;
  const dsp::DspConfig cfg;
  o.check(cfg.hop_samples() == 441, "hop " + std::to_string(cfg.hop_samples()));
  std::vector<float> sine(441000);
  for (std::size_t i = 0; i < sine.size(); ++i)
    sine[i] = static_cast<float>(0.5 * std::sin(2.0 * M_PI * 440.0 * double(i) / 44100.0));
  const auto mel = dsp::mel_spectrogram(sine, 44100.0, cfg);
  o.check(mel.num_frames() == 1001, "frames " + std::to_string(mel.num_frames()));
  const auto mag = dsp::stft_magnitude(sine, 44100.0, cfg);
  std::string off_peak;
  std::size_t n_off = 0;
  for (std::size_t t = 0; t < mag.dim(1); ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < mag.dim(0); ++k)
      if (mag.at(k, t) > mag.at(best, t))
        best = k;
    if (best != 20) {
      // Compare against the direct DFT of the same padded frame.
      const auto ref = oracle::dft_frame(sine, t, 441, 2048);
      const auto peak = std::max_element(ref.begin(), ref.end()) - ref.begin();
      off_peak += " frame " + std::to_string(t) + " -> bin " + std::to_string(best) +
                  " (direct DFT: " + std::to_string(peak) + ")";
      ++n_off;
    }
  }
  o.check(n_off == 0, std::to_string(n_off) + " of " + std::to_string(mag.dim(1)) +
                          " frames peak outside bin 20:" + off_peak);
  const double m = dsp::hz_to_mel(1000.0);
  o.check(std::abs(m - 999.99) <= 0.01, "hz_to_mel(1000) = " + fmt("%.4f", m));

  nn::SplitMix64 rng(5);
  std::vector<float> noise(44100 * 3);
  for (auto &v : noise)
    v = static_cast<float>(rng.uniform(-0.5, 0.5));
  const auto a = dsp::mel_spectrogram(noise, 44100.0, cfg);
  const auto b = dsp::mel_spectrogram(noise, 44100.0, cfg);
  o.check(a.values == b.values && dsp::stft_magnitude(noise, 44100.0, cfg) ==
                                      dsp::stft_magnitude(noise, 44100.0, cfg),
          "repeat runs differ");
  o.note("1001 frames, bin 20, mel(1000) " + fmt("%.4f", m) + ", repeat runs identical");
  return o;
}

// --- 6 ------------------------------------------------------------------------

Outcome overfit(const fs::path &work) {
  Outcome o;
  const auto t0 = Clock::now();
  SynthSpec spec;
  spec.n_singers = 1;
  spec.tracks_per_singer = 1;
  spec.track_len_s = 10.0;
  spec.rates = default_synth_rates();
  spec.seed = 6;
  const auto corpus = synth_corpus(spec, work / "overfit");
  const dsp::DspConfig dcfg;
  auto features = featurize_track(corpus.tracks[0], PitchSource::none, dcfg);
  const dsp::FeatureTensor *set[] = {&features};
  Normalizer::fit(set).apply(features);
  const ModelConfig mcfg;  // default model, nine classes
  const auto roll = rasterize(corpus.tracks[0].events, features.dim(2), dcfg.hop_s,
                              mcfg.class_order);
  const auto clips = segment_clips(corpus.tracks[0].track_id, features, roll,
                                   clip_layout(10.0, dcfg.hop_s));
  auto model = build_model(mcfg, 6);
  nn::Adam<float> opt(nn::AdamConfig{1e-4});
  const Clip *batch[] = {&clips[0]};
  const nn::LossConfig bce{nn::LossKind::bce, 1.0, 0.0};
  double loss = 0.0;
  std::size_t steps = 0;
  for (; steps < 500; ++steps) {
    train_step(model, opt, batch, bce);
    loss = evaluate_loss(model, std::span(clips.data(), 1), bce);
    if (loss < 0.05)
      break;
  }
  const double secs = seconds_since(t0);
  o.check(loss < 0.05, "BCE " + fmt("%.4f", loss) + " after 500 steps");
  o.check(secs < 300.0, "runtime " + fmt("%.0f s", secs));
  o.note("BCE " + fmt("%.4f", loss) + " after " + std::to_string(steps + (loss < 0.05)) +
         " steps, " + fmt("%.0f s", secs));
  return o;
}

// --- 7 and 8 --------------------------------------------------------------------

SynthSpec acceptance_corpus_spec() {
  SynthSpec spec;  // 14 singers x 3 tracks x 30 s
  spec.rates = default_synth_rates();
  spec.seed = 7;
  return spec;
}

ExperimentConfig acceptance_experiment(const fs::path &out) {
  ExperimentConfig c;
  c.out_dir = out;
  c.k = 7;
  c.fold_seed = 1;
  c.model.conv = {{16, 3, 3, 4}, {16, 3, 3, 2}, {16, 3, 3, 2}};
  c.model.gru_hidden = 32;
  c.model.class_order = surrogate_classes();
  c.train.batch_size = 8;
  c.train.adam.lr = 3e-3;
  c.train.patience = 8;
  c.train.max_epochs = 60;
  c.train.seed = 3;
  c.save_models = false;
  return c;
}

struct CvState {
  Corpus corpus;
  FoldPlan plan;
  ExperimentResults focal_gt;
  double focal_gt_secs = 0.0;
};

Outcome end_to_end(const fs::path &work, CvState &state) {
  Outcome o;
  const auto t0 = Clock::now();
  state.corpus = synth_corpus(acceptance_corpus_spec(), work / "cv_corpus");
  state.plan = make_folds(state.corpus, 7, 1);
  auto cfg = acceptance_experiment(work / "cv");
  cfg.conditions = {*find_condition("Focal-GT")};
  state.focal_gt = run_experiment(state.corpus, state.plan, cfg, [](const std::string &s) {
    if (s.find(" done") != std::string::npos)
      std::fprintf(stderr, "  %s\n", s.c_str());
  });
  state.focal_gt_secs = seconds_since(t0);
  const auto &r = state.focal_gt.conditions[0];
  o.check(r.pooled.macro_f >= 0.80, "pooled macro-F " + fmt("%.4f", r.pooled.macro_f));
  o.check(state.focal_gt_secs <= 1800.0, "runtime " + fmt("%.0f s", state.focal_gt_secs));
  std::string classes;
  for (const auto &m : r.pooled.classes)
    classes += " " + std::string(technique_name(m.technique)) + "=" + fmt("%.3f", m.f);
  o.note("pooled macro-F " + fmt("%.4f", r.pooled.macro_f) + " (" + classes.substr(1) +
         "), " + fmt("%.0f s", state.focal_gt_secs));
  return o;
}

double recall_of(const MetricsReport &r, Technique t) {
  for (const auto &m : r.classes)
    if (m.technique == t)
      return m.recall;
  return 0.0;
}

Outcome directional(const fs::path &work, CvState &state) {
  Outcome o;
  if (state.focal_gt.conditions.empty()) {
    o.check(false, "needs the end-to-end run");
    return o;
  }
  auto cfg = acceptance_experiment(work / "cv");
  cfg.conditions = {*find_condition("BCE"), *find_condition("Focal")};
  const auto rest = run_experiment(state.corpus, state.plan, cfg, [](const std::string &s) {
    if (s.find(" done") != std::string::npos)
      std::fprintf(stderr, "  %s\n", s.c_str());
  });
  const auto &bce = rest.find("BCE")->pooled;
  const auto &focal = rest.find("Focal")->pooled;
  const auto &focal_gt = state.focal_gt.conditions[0].pooled;
  o.check(focal.macro_f >= bce.macro_f, "(a) Focal < BCE");
  o.check(focal_gt.macro_f >= focal.macro_f, "(b) Focal-GT < Focal");
  const double rec = recall_of(focal, Technique::falsetto);
  const double rec_gt = recall_of(focal_gt, Technique::falsetto);
  o.check(rec_gt > rec, "(b) falsetto recall did not increase");
  o.note("macro-F BCE " + fmt("%.4f", bce.macro_f) + ", Focal " + fmt("%.4f", focal.macro_f) +
         ", Focal-GT " + fmt("%.4f", focal_gt.macro_f) + "; falsetto recall " +
         fmt("%.4f", rec) + " -> " + fmt("%.4f", rec_gt));
  return o;
}

// --- 9 ------------------------------------------------------------------------

Outcome fold_properties() {
  Outcome o;
  nn::SplitMix64 rng(9);
  const auto &classes = detection_classes();
  int bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.below(7);
    Corpus corpus;
    const std::size_t singers = k + rng.below(40);
    for (std::size_t s = 0; s < singers; ++s)
      for (std::size_t t = 0, n = 1 + rng.below(3); t < n; ++t) {
        TrackAnnotation tr;
        tr.track_id = "s" + std::to_string(s) + "_" + std::to_string(t);
        tr.singer_id = "singer" + std::to_string(s);
        tr.duration_s = 10.0;
        for (std::size_t e = 0, m = rng.below(10); e < m; ++e) {
          const double on = rng.uniform(0, 9);
          tr.events.push_back({classes[rng.below(classes.size())], on, on + 0.5});
        }
        sort_events(tr.events);
        corpus.tracks.push_back(std::move(tr));
      }
    const std::uint64_t seed = rng();
    const auto plan = make_folds(corpus, k, seed);
    bool ok = plan.folds.size() == k;
    std::map<std::string, int> tested;
    for (const auto &f : plan.folds) {
      const std::set<std::string> test(f.test.begin(), f.test.end()),
          val(f.validation.begin(), f.validation.end()),
          train(f.train.begin(), f.train.end());
      std::set<std::string> all = train;
      all.insert(test.begin(), test.end());
      all.insert(val.begin(), val.end());
      ok &= all.size() == singers;
      for (const auto &s : test) {
        ok &= !train.count(s) && !val.count(s);
        ++tested[s];
      }
      if (k >= 3)
        for (const auto &s : val)
          ok &= !train.count(s);
    }
    ok &= tested.size() == singers;
    for (const auto &[s, n] : tested)
      ok &= n == 1;
    ok &= to_json(make_folds(corpus, k, seed)) == to_json(plan);
    bad += !ok;
  }
  o.check(bad == 0, std::to_string(bad) + " plans violate a property");
  o.note("100 random corpora");
  return o;
}

// --- 10 -----------------------------------------------------------------------

Outcome stats_fixture() {
  Outcome o;
  const auto corpus = fixtures::stats_corpus();
  const fixtures::StatsExpectation x;
  const auto r = corpus_stats(corpus);
  bool counts = true, durations = true;
  for (Technique t : vocabulary()) {
    const auto c = x.counts.find(t);
    counts &= r.counts.at(t) == (c == x.counts.end() ? 0 : c->second);
    const auto d = x.total_duration_s.find(t);
    durations &= r.total_duration_s.at(t) == (d == x.total_duration_s.end() ? 0.0 : d->second);
  }
  o.check(counts, "counts");
  o.check(durations, "total durations");
  o.check(r.coverage == x.coverage, "coverage");
  o.check(r.unknown_count == x.unknown_count, "unknown count");
  o.check(r.totals.total_length_s == x.total_length_s &&
              r.totals.mean_track_length_s == x.mean_track_length_s &&
              r.totals.mean_technique_length_s == x.mean_technique_length_s &&
              r.totals.mean_coverage == x.mean_coverage,
          "totals");
  const auto &v = r.duration_quantiles.at(Technique::vibrato);
  o.check(v.min == x.vibrato_min && v.max == x.vibrato_max && v.median == x.vibrato_median &&
              v.lower_fourth == x.vibrato_lower_fourth &&
              v.upper_fourth == x.vibrato_upper_fourth,
          "vibrato letter values");
  const auto &b = r.duration_quantiles.at(Technique::breathy);
  o.check(b.median == x.breathy_median && b.lower_fourth == x.breathy_lower_fourth &&
              b.upper_fourth == x.breathy_upper_fourth,
          "breathy letter values");
  o.check(r.singers == x.singers, "singers");
  const auto &vocab = vocabulary();
  bool cells = true, sums = true;
  for (std::size_t s = 0; s < r.singers.size(); ++s)
    for (std::size_t c = 0; c < vocab.size(); ++c) {
      const auto it = x.per_singer.find({r.singers[s], vocab[c]});
      cells &= r.per_singer[s][c] == (it == x.per_singer.end() ? 0 : it->second);
    }
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    std::size_t col = 0;
    for (const auto &row : r.per_singer)
      col += row[c];
    const auto it = r.counts.find(vocab[c]);
    sums &= col == (it == r.counts.end() ? 0 : it->second);
  }
  o.check(cells, "per-singer cells");
  o.check(sums, "per-singer column sums");
  o.note("hand fixture, 3 tracks");
  return o;
}

}  // namespace

int main(int argc, char **argv) {
  stdet::configure_allocator();
  CLI::App app("Acceptance runner");
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work-dir", work, "Scratch directory");
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const fs::path dir = fs::absolute(work);
  fs::create_directories(dir);
  const std::set<int> selected(only.begin(), only.end());
  CvState cv;

  const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"loss identity", loss_identity},
      {"metric oracle equivalence", metric_oracle},
      {"rasterize/decode round trip", round_trip},
      {"dsp checks", dsp_checks},
      {"overfit sanity", [&] { return overfit(dir); }},
      {"end-to-end synthetic CV", [&] { return end_to_end(dir, cv); }},
      {"directional findings", [&] { return directional(dir, cv); }},
      {"fold-plan properties", fold_properties},
      {"statistics fixture", stats_fixture},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id))
      continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
