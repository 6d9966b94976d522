// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <limits>
#include <map>

#include "stdet/experiment.hpp"
#include "stdet/nn/rng.hpp"

namespace stdet {

namespace {

using Counts = std::vector<std::size_t>;

std::size_t vocabulary_index(Technique t) {
  const auto &v = vocabulary();
  return static_cast<std::size_t>(std::find(v.begin(), v.end(), t) - v.begin());
}

std::size_t spread(const std::vector<Counts> &groups) {
  std::size_t total = 0;
  for (std::size_t c = 0; c < kVocabularySize; ++c) {
    std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0;
    for (const auto &g : groups) {
      lo = std::min(lo, g[c]);
      hi = std::max(hi, g[c]);
    }
    total += hi - lo;
  }
  return total;
}

}  // namespace

FoldPlan make_folds(const Corpus &corpus, std::size_t k, std::uint64_t seed) {
  if (k < 2)
    throw ExperimentError("fold count must be at least 2");
  std::map<std::string, Counts> per_singer;
  for (const auto &track : corpus.tracks) {
    auto &counts = per_singer.try_emplace(track.singer_id, Counts(kVocabularySize, 0))
                       .first->second;
    for (const auto &e : track.events) {
      const std::size_t i = vocabulary_index(e.technique);
      if (i < kVocabularySize)
        ++counts[i];
    }
  }
  if (per_singer.size() < k)
    throw ExperimentError("need at least " + std::to_string(k) +
                          " singers for " + std::to_string(k) +
                          " folds, corpus has " +
                          std::to_string(per_singer.size()));

  struct Entry {
    std::string singer;
    Counts counts;
    std::size_t total;
  };
  std::vector<Entry> order;
  for (auto &[singer, counts] : per_singer) {
    std::size_t total = 0;
    for (auto c : counts)
      total += c;
    order.push_back({singer, counts, total});
  }
  nn::SplitMix64 rng(seed);
  nn::shuffle(std::span<Entry>(order), rng);
  std::stable_sort(order.begin(), order.end(),
                   [](const Entry &a, const Entry &b) { return a.total > b.total; });

  std::vector<Counts> group_counts(k, Counts(kVocabularySize, 0));
  std::vector<std::vector<std::string>> groups(k);
  for (std::size_t idx = 0; idx < order.size(); ++idx) {
    const auto &entry = order[idx];
    const std::size_t remaining = order.size() - idx;
    const auto empty = static_cast<std::size_t>(std::count_if(
        groups.begin(), groups.end(), [](const auto &g) { return g.empty(); }));
    const bool force_empty = empty > 0 && remaining <= empty;
    std::size_t best = k, best_cost = 0;
    for (std::size_t g = 0; g < k; ++g) {
      if (force_empty && !groups[g].empty())
        continue;
      auto trial = group_counts;
      for (std::size_t c = 0; c < kVocabularySize; ++c)
        trial[g][c] += entry.counts[c];
      const std::size_t cost = spread(trial);
      if (best == k || cost < best_cost ||
          (cost == best_cost && groups[g].size() < groups[best].size())) {
        best = g;
        best_cost = cost;
      }
    }
    for (std::size_t c = 0; c < kVocabularySize; ++c)
      group_counts[best][c] += entry.counts[c];
    groups[best].push_back(entry.singer);
  }

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  for (auto &g : groups)
    std::sort(g.begin(), g.end());
  plan.groups = groups;
  plan.balance = group_counts;
  for (std::size_t i = 0; i < k; ++i) {
    Fold fold;
    fold.index = i;
    fold.test = groups[i];
    const std::size_t val = (i + 1) % k;
    for (std::size_t g = 0; g < k; ++g) {
      if (g == i || (k >= 3 && g == val))
        continue;
      fold.train.insert(fold.train.end(), groups[g].begin(), groups[g].end());
    }
    fold.validation = k >= 3 ? groups[val] : fold.train;
    std::sort(fold.train.begin(), fold.train.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

nlohmann::ordered_json to_json(const FoldPlan &plan) {
  nlohmann::ordered_json j;
  j["k"] = plan.k;
  j["seed"] = plan.seed;
  j["groups"] = plan.groups;
  auto folds = nlohmann::ordered_json::array();
  for (const auto &f : plan.folds) {
    nlohmann::ordered_json fj;
    fj["fold"] = f.index;
    fj["test"] = f.test;
    fj["validation"] = f.validation;
    fj["train"] = f.train;
    folds.push_back(fj);
  }
  j["folds"] = folds;
  auto balance = nlohmann::ordered_json::array();
  for (std::size_t g = 0; g < plan.balance.size(); ++g) {
    nlohmann::ordered_json row;
    row["group"] = g;
    nlohmann::ordered_json counts;
    for (std::size_t c = 0; c < kVocabularySize; ++c)
      counts[std::string(technique_name(vocabulary()[c]))] = plan.balance[g][c];
    row["counts"] = counts;
    balance.push_back(row);
  }
  j["balance"] = balance;
  return j;
}

}  // namespace stdet
