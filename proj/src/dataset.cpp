#include "guider/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "guider/rng.hpp"

namespace guider {

void InteractionDataset::rebuild_index() {
  per_user_items.assign(n_users, {});
  for (const auto& it : interactions) per_user_items[it.user].push_back(it.item);
}

bool InteractionDataset::contains(Index u, Index i) const {
  if (u >= per_user_items.size()) return false;
  const auto& items = per_user_items[u];
  return std::find(items.begin(), items.end(), i) != items.end();
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream ss(line);
  while (std::getline(ss, tok, delim)) out.push_back(tok);
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

InteractionDataset load_interactions(const std::string& path, FileFormat format,
                                     LoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open interaction file: " + path);
  char delim = format == FileFormat::tsv ? '\t' : ',';

  InteractionDataset ds;
  LoadStats local;
  std::unordered_map<std::string, Index> user_ids, item_ids;
  std::set<std::pair<Index, Index>> seen;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto toks = split_line(line, delim);
    if (toks.size() < 2)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected user" + delim + "item[,timestamp]");
    std::string ut = trim(toks[0]), it = trim(toks[1]);
    if (ut.empty() || it.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": empty token");
    auto [uit, unew] = user_ids.emplace(ut, (Index)user_ids.size());
    auto [iit, inew] = item_ids.emplace(it, (Index)item_ids.size());
    if (unew) local.user_tokens.push_back(ut);
    if (inew) local.item_tokens.push_back(it);
    Index u = uit->second, i = iit->second;
    if (!seen.insert({u, i}).second) {
      ++local.duplicates_dropped;
      continue;
    }
    ds.interactions.push_back({u, i, false});
  }
  if (ds.interactions.empty())
    throw std::runtime_error("no interactions in " + path);
  ds.n_users = (Index)user_ids.size();
  ds.n_items = (Index)item_ids.size();
  ds.rebuild_index();
  if (stats) *stats = std::move(local);
  return ds;
}

DataSplit split_per_user(const InteractionDataset& ds, std::uint64_t seed) {
  DataSplit sp;
  sp.n_users = ds.n_users;
  sp.n_items = ds.n_items;
  for (auto* part : {&sp.train, &sp.valid, &sp.test}) {
    part->n_users = ds.n_users;
    part->n_items = ds.n_items;
  }
  for (Index u = 0; u < ds.n_users; ++u) {
    std::vector<Index> items = ds.per_user_items[u];
    auto rng = make_rng(seed, "split", u);
    std::shuffle(items.begin(), items.end(), rng);
    std::size_t n = items.size();
    std::size_t n_valid = 0, n_test = 0;
    if (n >= 3) {
      // 8:1:1 with the rounding remainder going to train
      n_valid = std::max<std::size_t>(n / 10, 1);
      n_test = std::max<std::size_t>(n / 10, 1);
    }
    std::size_t n_train = n - n_valid - n_test;
    for (std::size_t k = 0; k < n; ++k) {
      Interaction it{u, items[k], false};
      if (k < n_train)
        sp.train.interactions.push_back(it);
      else if (k < n_train + n_valid)
        sp.valid.interactions.push_back(it);
      else
        sp.test.interactions.push_back(it);
    }
  }
  sp.train.rebuild_index();
  sp.valid.rebuild_index();
  sp.test.rebuild_index();
  return sp;
}

NoiseReport inject_noise(DataSplit& split, double ratio, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 0.5)
    throw std::invalid_argument("noise ratio must lie in [0, 0.5]");
  NoiseReport report;
  report.ratio = ratio;
  report.seed = seed;
  std::size_t n_inject =
      (std::size_t)std::llround(ratio * (double)split.train.size());
  if (n_inject == 0) return report;

  std::set<std::pair<Index, Index>> taken;
  for (const auto* part : {&split.train, &split.valid, &split.test})
    for (const auto& it : part->interactions) taken.insert({it.user, it.item});

  std::size_t capacity =
      (std::size_t)split.n_users * split.n_items - taken.size();
  if (capacity < n_inject)
    throw std::runtime_error("item universe exhausted: cannot inject " +
                             std::to_string(n_inject) + " pairs");

  // corrupt users as evenly as the budget allows: every user receives
  // floor(n_inject / n_users) spurious pairs and a random subset takes
  // the remainder, so the corruption rate is per-user, not bursty
  auto rng = make_rng(seed, "noise");
  std::vector<Index> order(split.n_users);
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<Index> di(0, split.n_items - 1);
  std::size_t base = n_inject / split.n_users;
  std::size_t extra = n_inject % split.n_users;
  std::size_t carry = 0;  // quota a saturated user could not absorb
  for (std::size_t k = 0; k < order.size(); ++k) {
    Index u = order[k];
    std::size_t quota = base + (k < extra ? 1 : 0) + carry;
    carry = 0;
    for (std::size_t q = 0; q < quota;) {
      bool placed = false;
      for (int tries = 0; tries < 1000 && !placed; ++tries) {
        Index i = di(rng);
        if (!taken.insert({u, i}).second) continue;
        report.injected_pairs.push_back({u, i});
        split.train.interactions.push_back({u, i, true});
        placed = true;
      }
      if (!placed) {
        carry += quota - q;
        break;
      }
      ++q;
    }
  }
  while (report.injected_pairs.size() < n_inject) {
    std::uniform_int_distribution<Index> du(0, split.n_users - 1);
    Index u = du(rng), i = di(rng);
    if (!taken.insert({u, i}).second) continue;
    report.injected_pairs.push_back({u, i});
    split.train.interactions.push_back({u, i, true});
  }
  split.train.rebuild_index();
  return report;
}

namespace {
constexpr char kFeatureMagic[4] = {'G', 'M', 'F', '1'};

void check_table(const Matrix& m, const std::string& path) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    bool all_zero = true;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      if (!std::isfinite(v))
        throw std::runtime_error(path + ": non-finite entry at row " +
                                 std::to_string(r) + " col " +
                                 std::to_string(c));
      if (v != 0.0) all_zero = false;
    }
    if (all_zero)
      throw std::runtime_error(path + ": all-zero feature row " +
                               std::to_string(r));
  }
}
}  // namespace

ModalFeatureTable load_modal_features(const std::string& path,
                                      Modality modality,
                                      Index expected_items) {
  ModalFeatureTable t;
  t.modality = modality;

  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature file: " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, kFeatureMagic, 4) == 0) {
    std::uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    if (!in) throw std::runtime_error(path + ": truncated GMF1 header");
    t.matrix = Matrix(rows, cols);
    std::vector<float> buf((std::size_t)rows * cols);
    in.read(reinterpret_cast<char*>(buf.data()),
            (std::streamsize)(buf.size() * sizeof(float)));
    if ((std::size_t)in.gcount() != buf.size() * sizeof(float))
      throw std::runtime_error(path + ": truncated GMF1 payload");
    for (std::size_t k = 0; k < buf.size(); ++k)
      t.matrix.data()[k] = (double)buf[k];
  } else {
    // CSV fallback: one row per item
    in.close();
    std::ifstream csv(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(csv, line)) {
      ++lineno;
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      std::vector<double> row;
      for (const auto& tok : split_line(line, ',')) {
        try {
          row.push_back(std::stod(tok));
        } catch (const std::exception&) {
          throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                   ": bad number '" + tok + "'");
        }
      }
      if (!rows.empty() && row.size() != rows[0].size())
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": ragged row");
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(path + ": empty feature file");
    t.matrix = Matrix(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[0].size(); ++c)
        t.matrix(r, c) = rows[r][c];
  }

  if (expected_items != 0 && t.matrix.rows() != expected_items)
    throw std::runtime_error(path + ": feature rows (" +
                             std::to_string(t.matrix.rows()) +
                             ") do not match item count (" +
                             std::to_string(expected_items) + ")");
  check_table(t.matrix, path);
  return t;
}

void save_modal_features(const std::string& path, const ModalFeatureTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kFeatureMagic, 4);
  std::uint32_t rows = (std::uint32_t)t.matrix.rows();
  std::uint32_t cols = (std::uint32_t)t.matrix.cols();
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  std::vector<float> buf(t.matrix.data().size());
  for (std::size_t k = 0; k < buf.size(); ++k)
    buf[k] = (float)t.matrix.data()[k];
  out.write(reinterpret_cast<const char*>(buf.data()),
            (std::streamsize)(buf.size() * sizeof(float)));
}

void save_interactions_tsv(const std::string& path,
                           const InteractionDataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& it : ds.interactions)
    out << it.user << '\t' << it.item << '\n';
}

void save_split_manifest(const std::string& path, const DataSplit& split,
                         std::uint64_t seed) {
  nlohmann::json j;
  j["seed"] = seed;
  j["n_users"] = split.n_users;
  j["n_items"] = split.n_items;
  j["train"] = split.train.size();
  j["valid"] = split.valid.size();
  j["test"] = split.test.size();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

SyntheticCorpus generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.n_users == 0 || cfg.n_items == 0 || cfg.n_clusters == 0)
    throw std::invalid_argument("synthetic config: all counts must be positive");
  if (cfg.n_clusters > cfg.n_items)
    throw std::invalid_argument("synthetic config: more clusters than items");
  if (cfg.per_user > cfg.n_items)
    throw std::invalid_argument(
        "synthetic config: interactions per user exceed item count");

  SyntheticCorpus out;
  out.item_cluster.resize(cfg.n_items);
  std::vector<std::vector<Index>> cluster_items(cfg.n_clusters);
  for (Index i = 0; i < cfg.n_items; ++i) {
    Index c = i % cfg.n_clusters;
    out.item_cluster[i] = c;
    cluster_items[c].push_back(i);
  }

  // modal features: shared centroid per cluster, perturbed per item
  auto feat_rng = make_rng(seed, "synth-features");
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto make_table = [&](std::size_t dim, Modality mod) {
    Matrix centroids(cfg.n_clusters, dim);
    for (auto& v : centroids.data()) v = gauss(feat_rng);
    Matrix m(cfg.n_items, dim);
    for (Index i = 0; i < cfg.n_items; ++i) {
      auto c = centroids.row(out.item_cluster[i]);
      for (std::size_t k = 0; k < dim; ++k)
        m(i, k) = c[k] + cfg.modal_noise * gauss(feat_rng);
    }
    ModalFeatureTable t;
    t.modality = mod;
    t.matrix = std::move(m);
    return t;
  };
  out.text = make_table(cfg.text_dim, Modality::text);
  out.vision = make_table(cfg.vision_dim, Modality::vision);

  // each user prefers one or two clusters and samples positives from them
  auto user_rng = make_rng(seed, "synth-users");
  std::uniform_int_distribution<Index> dc(0, cfg.n_clusters - 1);
  out.interactions.n_users = cfg.n_users;
  out.interactions.n_items = cfg.n_items;
  out.user_prefs.resize(cfg.n_users);
  for (Index u = 0; u < cfg.n_users; ++u) {
    std::vector<Index> prefs = {dc(user_rng)};
    if (user_rng() % 2 == 0) {
      Index second = dc(user_rng);
      if (second != prefs[0]) prefs.push_back(second);
    }
    out.user_prefs[u] = prefs;
    std::vector<Index> pool;
    for (Index c : prefs)
      pool.insert(pool.end(), cluster_items[c].begin(), cluster_items[c].end());
    std::shuffle(pool.begin(), pool.end(), user_rng);
    std::size_t take = std::min<std::size_t>(cfg.per_user, pool.size());
    for (std::size_t k = 0; k < take; ++k)
      out.interactions.interactions.push_back({u, pool[k], false});
  }
  out.interactions.rebuild_index();
  return out;
}

}  // namespace guider
