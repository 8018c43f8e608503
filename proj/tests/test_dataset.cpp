#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "guider/dataset.hpp"

using namespace guider;
namespace fs = std::filesystem;

namespace {
std::string write_tmp(const std::string& name, const std::string& content) {
  auto p = fs::temp_directory_path() / name;
  std::ofstream out(p);
  out << content;
  return p.string();
}
}  // namespace

TEST_CASE("load_interactions reindexes tokens densely") {
  auto path = write_tmp("gd_basic.csv", "a,x\na,y\nb,x\n");
  LoadStats stats;
  auto ds = load_interactions(path, FileFormat::csv, &stats);
  CHECK(ds.n_users == 2);
  CHECK(ds.n_items == 2);
  CHECK(ds.size() == 3);
  CHECK(stats.duplicates_dropped == 0);
  // re-indexing is a bijection in first-appearance order
  CHECK(stats.user_tokens == std::vector<std::string>{"a", "b"});
  CHECK(stats.item_tokens == std::vector<std::string>{"x", "y"});
}

TEST_CASE("load_interactions drops duplicates with a count") {
  auto path = write_tmp("gd_dup.csv", "a,x\na,x\n");
  LoadStats stats;
  auto ds = load_interactions(path, FileFormat::csv, &stats);
  CHECK(ds.size() == 1);
  CHECK(stats.duplicates_dropped == 1);
}

TEST_CASE("load_interactions rejects malformed and empty input") {
  auto bad = write_tmp("gd_bad.tsv", "only_one_token\n");
  CHECK_THROWS_WITH_AS(load_interactions(bad, FileFormat::tsv),
                       doctest::Contains(":1"), std::runtime_error);
  auto empty = write_tmp("gd_empty.tsv", "");
  CHECK_THROWS(load_interactions(empty, FileFormat::tsv));
}

TEST_CASE("split_per_user ratios") {
  InteractionDataset ds;
  ds.n_users = 2;
  ds.n_items = 12;
  for (Index i = 0; i < 10; ++i) ds.interactions.push_back({0, i, false});
  ds.interactions.push_back({1, 0, false});
  ds.interactions.push_back({1, 1, false});
  ds.rebuild_index();

  auto sp = split_per_user(ds, 7);
  CHECK(sp.train.per_user_items[0].size() == 8);
  CHECK(sp.valid.per_user_items[0].size() == 1);
  CHECK(sp.test.per_user_items[0].size() == 1);
  // degenerate user keeps everything in train
  CHECK(sp.train.per_user_items[1].size() == 2);
  CHECK(sp.valid.per_user_items[1].empty());
  CHECK(sp.test.per_user_items[1].empty());
}

TEST_CASE("split is a partition and deterministic") {
  InteractionDataset ds;
  ds.n_users = 20;
  ds.n_items = 50;
  for (Index u = 0; u < 20; ++u)
    for (Index i = 0; i < 50; i += (u % 3) + 2)
      ds.interactions.push_back({u, i, false});
  ds.rebuild_index();

  auto a = split_per_user(ds, 99);
  auto b = split_per_user(ds, 99);
  for (Index u = 0; u < 20; ++u) {
    std::set<Index> all(ds.per_user_items[u].begin(),
                        ds.per_user_items[u].end());
    std::set<Index> parts;
    std::size_t total = 0;
    for (auto* p : {&a.train, &a.valid, &a.test}) {
      parts.insert(p->per_user_items[u].begin(), p->per_user_items[u].end());
      total += p->per_user_items[u].size();
    }
    CHECK(parts == all);       // union recovers the originals
    CHECK(total == all.size());  // pairwise disjoint
    CHECK(a.train.per_user_items[u] == b.train.per_user_items[u]);
    CHECK(a.test.per_user_items[u] == b.test.per_user_items[u]);
  }
}

TEST_CASE("inject_noise count and collision freedom") {
  SynthConfig cfg;
  cfg.n_users = 50;
  cfg.n_items = 40;
  cfg.n_clusters = 5;
  cfg.per_user = 10;
  auto corpus = generate_synthetic(cfg, 3);
  auto sp = split_per_user(corpus.interactions, 3);

  std::set<std::pair<Index, Index>> original;
  for (auto* p : {&sp.train, &sp.valid, &sp.test})
    for (const auto& it : p->interactions) original.insert({it.user, it.item});

  std::size_t before = sp.train.size();
  auto report = inject_noise(sp, 0.10, 11);
  CHECK(report.injected_pairs.size() ==
        (std::size_t)std::llround(0.10 * (double)before));
  CHECK(sp.train.size() == before + report.injected_pairs.size());
  for (auto& pr : report.injected_pairs) CHECK(original.count(pr) == 0);
  // flags mark exactly the injected pairs
  std::size_t flagged = 0;
  for (const auto& it : sp.train.interactions)
    if (it.injected) ++flagged;
  CHECK(flagged == report.injected_pairs.size());
}

TEST_CASE("inject_noise zero ratio and range checks") {
  SynthConfig cfg;
  cfg.n_users = 10;
  cfg.n_items = 20;
  cfg.n_clusters = 2;
  cfg.per_user = 5;
  auto corpus = generate_synthetic(cfg, 5);
  auto sp = split_per_user(corpus.interactions, 5);
  std::size_t before = sp.train.size();
  auto report = inject_noise(sp, 0.0, 1);
  CHECK(report.injected_pairs.empty());
  CHECK(sp.train.size() == before);
  CHECK_THROWS_AS(inject_noise(sp, 0.6, 1), std::invalid_argument);
  CHECK_THROWS_AS(inject_noise(sp, -0.1, 1), std::invalid_argument);
}

TEST_CASE("modal feature files: GMF1 round trip and CSV") {
  ModalFeatureTable t;
  t.modality = Modality::text;
  t.matrix = Matrix(7, 3);
  for (std::size_t k = 0; k < t.matrix.data().size(); ++k)
    t.matrix.data()[k] = (double)(k + 1) * 0.25;
  auto p = (fs::temp_directory_path() / "gd_feat.gmf").string();
  save_modal_features(p, t);
  auto back = load_modal_features(p, Modality::text, 7);
  CHECK(back.matrix.rows() == 7);
  CHECK(back.matrix.cols() == 3);
  CHECK(back.matrix(6, 2) == doctest::Approx(t.matrix(6, 2)));

  auto csv = write_tmp("gd_feat.csv", "1,2\n3,4\n5,6\n");
  auto tc = load_modal_features(csv, Modality::vision);
  CHECK(tc.matrix.rows() == 3);
  CHECK(tc.matrix.cols() == 2);
}

TEST_CASE("modal feature validation") {
  auto nan_csv = write_tmp("gd_nan.csv", "1,2\nnan,4\n");
  CHECK_THROWS_WITH_AS(load_modal_features(nan_csv, Modality::text),
                       doctest::Contains("row 1"), std::runtime_error);
  auto zero_csv = write_tmp("gd_zero.csv", "1,2\n0,0\n");
  CHECK_THROWS_WITH_AS(load_modal_features(zero_csv, Modality::text),
                       doctest::Contains("all-zero"), std::runtime_error);
  auto ok_csv = write_tmp("gd_ok.csv", "1,2\n3,4\n");
  CHECK_THROWS(load_modal_features(ok_csv, Modality::text, 5));
}

TEST_CASE("synthetic generator structure") {
  SynthConfig cfg;
  cfg.n_users = 100;
  cfg.n_items = 200;
  cfg.n_clusters = 10;
  cfg.per_user = 8;
  cfg.modal_noise = 0.0;
  auto a = generate_synthetic(cfg, 17);
  auto b = generate_synthetic(cfg, 17);

  CHECK(a.item_cluster.size() == 200);
  for (Index c : a.item_cluster) CHECK(c < 10);
  // zero modal noise: same-cluster items have identical features
  Index i0 = 0, i1 = 10;  // clusters assigned round-robin
  REQUIRE(a.item_cluster[i0] == a.item_cluster[i1]);
  for (std::size_t k = 0; k < a.text.dim(); ++k)
    CHECK(a.text.matrix(i0, k) == doctest::Approx(a.text.matrix(i1, k)));

  // every positive lies inside the user's preferred clusters
  for (const auto& it : a.interactions.interactions) {
    const auto& prefs = a.user_prefs[it.user];
    bool in_pref = false;
    for (Index c : prefs) in_pref |= (a.item_cluster[it.item] == c);
    CHECK(in_pref);
  }

  // determinism
  CHECK(a.interactions.interactions.size() == b.interactions.interactions.size());
  CHECK(a.text.matrix.data() == b.text.matrix.data());
  CHECK(a.vision.matrix.data() == b.vision.matrix.data());

  SynthConfig bad = cfg;
  bad.per_user = 500;
  CHECK_THROWS_AS(generate_synthetic(bad, 1), std::invalid_argument);
}
