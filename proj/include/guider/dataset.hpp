#ifndef GUIDER_DATASET_HPP
#define GUIDER_DATASET_HPP

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "guider/matrix.hpp"

namespace guider {

using Index = std::uint32_t;

struct Interaction {
  Index user;
  Index item;
  bool injected = false;  // true iff added by noise injection
};

struct InteractionDataset {
  Index n_users = 0;
  Index n_items = 0;
  std::vector<Interaction> interactions;
  // grouping of interactions by user, items in insertion order
  std::vector<std::vector<Index>> per_user_items;

  std::size_t size() const { return interactions.size(); }
  void rebuild_index();
  bool contains(Index u, Index i) const;
};

enum class Modality { text, vision };

struct ModalFeatureTable {
  Modality modality = Modality::text;
  Matrix matrix;  // n_items x dim
  std::size_t dim() const { return matrix.cols(); }
};

struct DataSplit {
  Index n_users = 0;
  Index n_items = 0;
  InteractionDataset train, valid, test;
};

struct NoiseReport {
  double ratio = 0.0;
  std::vector<std::pair<Index, Index>> injected_pairs;
  std::uint64_t seed = 0;
};

struct LoadStats {
  std::size_t duplicates_dropped = 0;
  std::vector<std::string> user_tokens;  // dense index -> raw token
  std::vector<std::string> item_tokens;
};

enum class FileFormat { tsv, csv };

InteractionDataset load_interactions(const std::string& path, FileFormat format,
                                     LoadStats* stats = nullptr);

DataSplit split_per_user(const InteractionDataset& ds, std::uint64_t seed);

// Adds round(ratio * |train|) uniformly sampled absent pairs to train,
// flagged injected. ratio must lie in [0, 0.5].
NoiseReport inject_noise(DataSplit& split, double ratio, std::uint64_t seed);

// expected_items: cross-check row count against the interaction dataset
// (0 disables the check).
ModalFeatureTable load_modal_features(const std::string& path,
                                      Modality modality,
                                      Index expected_items = 0);

void save_modal_features(const std::string& path, const ModalFeatureTable& t);
void save_interactions_tsv(const std::string& path,
                           const InteractionDataset& ds);
void save_split_manifest(const std::string& path, const DataSplit& split,
                         std::uint64_t seed);

struct SynthConfig {
  Index n_users = 500;
  Index n_items = 200;
  Index n_clusters = 10;
  Index per_user = 20;  // positives sampled per user
  std::size_t text_dim = 16;
  std::size_t vision_dim = 16;
  double modal_noise = 0.1;  // stddev of per-item perturbation around centroid
};

struct SyntheticCorpus {
  InteractionDataset interactions;
  ModalFeatureTable text;
  ModalFeatureTable vision;
  std::vector<Index> item_cluster;            // ground truth, one per item
  std::vector<std::vector<Index>> user_prefs;  // preferred clusters per user
};

SyntheticCorpus generate_synthetic(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace guider

#endif
