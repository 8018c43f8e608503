#include "guider/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "guider/parallel.hpp"
#include "guider/rng.hpp"

namespace guider {

std::vector<Index> rank_items(std::span<const double> scores,
                              const std::set<Index>& exclusion) {
  std::vector<Index> items;
  items.reserve(scores.size());
  for (Index i = 0; i < (Index)scores.size(); ++i)
    if (!exclusion.count(i)) items.push_back(i);
  std::sort(items.begin(), items.end(), [&](Index a, Index b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return items;
}

double recall_at_k(std::span<const Index> ranking,
                   const std::set<Index>& test_items, std::size_t k) {
  if (test_items.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t p = 0; p < std::min(k, ranking.size()); ++p)
    if (test_items.count(ranking[p])) ++hits;
  return (double)hits / (double)test_items.size();
}

double ndcg_at_k(std::span<const Index> ranking,
                 const std::set<Index>& test_items, std::size_t k) {
  if (test_items.empty()) return 0.0;
  double dcg = 0.0;
  for (std::size_t p = 0; p < std::min(k, ranking.size()); ++p)
    if (test_items.count(ranking[p])) dcg += 1.0 / std::log2((double)p + 2.0);
  double idcg = 0.0;
  for (std::size_t p = 0; p < std::min(k, test_items.size()); ++p)
    idcg += 1.0 / std::log2((double)p + 2.0);
  return dcg / idcg;
}

std::vector<MetricsRow> evaluate(const ScoreModel& m, const DataSplit& split,
                                 const std::vector<std::size_t>& ks,
                                 const std::string& tag, int threads) {
  std::size_t nu = split.n_users;
  // per-user, per-cutoff partial metrics; merged in user order
  std::vector<std::vector<double>> recalls(ks.size(), std::vector<double>(nu, 0.0));
  std::vector<std::vector<double>> ndcgs(ks.size(), std::vector<double>(nu, 0.0));
  std::vector<char> counted(nu, 0);

  parallel_chunks(nu, threads, [&](std::size_t b, std::size_t e) {
    std::vector<double> scores(split.n_items);
    for (std::size_t u = b; u < e; ++u) {
      const auto& test_items_v = split.test.per_user_items[u];
      if (test_items_v.empty()) continue;
      counted[u] = 1;
      std::set<Index> test_items(test_items_v.begin(), test_items_v.end());
      std::set<Index> excl(split.train.per_user_items[u].begin(),
                           split.train.per_user_items[u].end());
      excl.insert(split.valid.per_user_items[u].begin(),
                  split.valid.per_user_items[u].end());
      for (Index i = 0; i < split.n_items; ++i)
        scores[i] = m.score((Index)u, i);
      auto ranking = rank_items(scores, excl);
      for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        recalls[ki][u] = recall_at_k(ranking, test_items, ks[ki]);
        ndcgs[ki][u] = ndcg_at_k(ranking, test_items, ks[ki]);
      }
    }
  });

  std::size_t n_eval = std::count(counted.begin(), counted.end(), 1);
  std::vector<MetricsRow> rows;
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    MetricsRow r;
    r.model_tag = tag;
    r.k = ks[ki];
    r.n_users_evaluated = n_eval;
    if (n_eval > 0) {
      r.recall = compensated_sum(recalls[ki]) / (double)n_eval;
      r.ndcg = compensated_sum(ndcgs[ki]) / (double)n_eval;
    }
    rows.push_back(r);
  }
  return rows;
}

ScoreHistogram score_distribution_report(const ScoreModel& m,
                                         const InteractionDataset& train,
                                         double sample_frac,
                                         std::uint64_t seed,
                                         std::size_t bins) {
  std::vector<double> clean, noisy;
  auto rng = make_rng(seed, "score-dist");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const auto& it : train.interactions) {
    double s = m.score(it.user, it.item);
    if (it.injected)
      noisy.push_back(s);
    else if (unif(rng) < sample_frac)
      clean.push_back(s);
  }
  if (noisy.empty())
    throw std::runtime_error(
        "score_distribution_report: no injected interactions present");

  double lo = std::min(*std::min_element(clean.begin(), clean.end()),
                       *std::min_element(noisy.begin(), noisy.end()));
  double hi = std::max(*std::max_element(clean.begin(), clean.end()),
                       *std::max_element(noisy.begin(), noisy.end()));
  if (hi <= lo) hi = lo + 1.0;
  double w = (hi - lo) / (double)bins;

  ScoreHistogram h;
  h.bin_lo.resize(bins);
  h.bin_hi.resize(bins);
  h.clean_density.assign(bins, 0.0);
  h.noisy_density.assign(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    h.bin_lo[b] = lo + w * (double)b;
    h.bin_hi[b] = h.bin_lo[b] + w;
  }
  auto fill = [&](const std::vector<double>& xs, std::vector<double>& dens) {
    for (double x : xs) {
      std::size_t b = std::min(bins - 1, (std::size_t)((x - lo) / w));
      dens[b] += 1.0;
    }
    for (auto& v : dens) v /= (double)xs.size();
  };
  fill(clean, h.clean_density);
  fill(noisy, h.noisy_density);

  // AUC by rank-sum: probability a random clean score exceeds a random
  // noisy one (ties count half)
  double wins = 0.0;
  for (double c : clean)
    for (double n : noisy) {
      if (c > n)
        wins += 1.0;
      else if (c == n)
        wins += 0.5;
    }
  h.auc = wins / ((double)clean.size() * (double)noisy.size());
  return h;
}

NoiseDetection noise_detection_report(std::span<const UserPartition> parts,
                                      const InteractionDataset& train) {
  std::set<std::pair<Index, Index>> injected;
  for (const auto& it : train.interactions)
    if (it.injected) injected.insert({it.user, it.item});

  std::size_t false_total = 0, false_hits = 0;
  for (const auto& p : parts)
    for (Index i : p.false_set) {
      ++false_total;
      if (injected.count({p.user, i})) ++false_hits;
    }

  NoiseDetection out;
  if (false_total == 0) {
    out.empty_false_pool = true;
    return out;
  }
  out.precision = (double)false_hits / (double)false_total;
  out.recall = injected.empty()
                   ? 0.0
                   : (double)false_hits / (double)injected.size();
  double chance = (double)injected.size() / (double)train.size();
  out.lift = chance > 0.0 ? out.precision / chance : 0.0;
  return out;
}

void write_metrics_jsonl(const std::string& path,
                         std::span<const MetricsRow> rows, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::out);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : rows) {
    nlohmann::json j{{"model", r.model_tag},
                     {"K", r.k},
                     {"recall", r.recall},
                     {"ndcg", r.ndcg},
                     {"n_users", r.n_users_evaluated}};
    out << j.dump() << '\n';
  }
}

void write_histogram_csv(const std::string& path, const ScoreHistogram& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "bin_lo,bin_hi,clean_density,noisy_density\n";
  for (std::size_t b = 0; b < h.bin_lo.size(); ++b)
    out << h.bin_lo[b] << ',' << h.bin_hi[b] << ',' << h.clean_density[b]
        << ',' << h.noisy_density[b] << '\n';
}

}  // namespace guider
