#ifndef GUIDER_AMSC_HPP
#define GUIDER_AMSC_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "guider/dataset.hpp"
#include "guider/losses.hpp"
#include "guider/matrix.hpp"

namespace guider {

// Per-user partition of train items: loss threshold splits them into
// reliable/spurious, calibration promotes modally-similar spurious items
// into the clean set.
struct UserPartition {
  Index user = 0;
  std::vector<Index> reliable;
  std::vector<Index> spurious;
  std::vector<Index> true_set;
  std::vector<Index> false_set;
};

// Fixed Gaussian random projections mapping both modalities into a
// common k-bit sign code. Never trained.
class HashProjector {
 public:
  HashProjector() = default;
  HashProjector(std::size_t k, std::size_t dim_text, std::size_t dim_vision,
                std::uint64_t seed);

  std::size_t bits() const { return k_; }

  // sign(W x + b), entries +-1, sign(0) = +1
  std::vector<int> hash_text(std::span<const double> x) const;
  std::vector<int> hash_vision(std::span<const double> x) const;

 private:
  std::vector<int> hash(const Matrix& w, const std::vector<double>& b,
                        std::span<const double> x) const;
  std::size_t k_ = 0;
  Matrix w_text_, w_vision_;  // k x dim
  std::vector<double> b_text_, b_vision_;
};

// items with loss <= user mean go to reliable, the rest to spurious
std::pair<std::vector<Index>, std::vector<Index>> partition_by_loss(
    std::span<const Index> items, std::span<const double> losses);

// max of per-modality cosine similarities
double modal_similarity(Index i, Index j, const ModalFeatureTable& text,
                        const ModalFeatureTable& vision);

// cross-modal code agreement of one item, in [-1, 1]
double confidence(Index i, const HashProjector& proj,
                  const ModalFeatureTable& text,
                  const ModalFeatureTable& vision);

// S(i, i') = S_modal(i, i') * S_conf(i); confidence is evaluated on the
// candidate (spurious) item only.
double combined_similarity(Index i, Index i_rel, const HashProjector& proj,
                           const ModalFeatureTable& text,
                           const ModalFeatureTable& vision);

void calibrate(UserPartition& p, const HashProjector& proj,
               const ModalFeatureTable& text, const ModalFeatureTable& vision,
               double s_thres);

std::vector<UserPartition> run_amsc(const ScoreModel& teacher,
                                    const InteractionDataset& train,
                                    const ModalFeatureTable& text,
                                    const ModalFeatureTable& vision,
                                    const HashProjector& proj, double s_thres,
                                    int threads = 1);

void dump_partitions(const std::string& path,
                     std::span<const UserPartition> parts);

}  // namespace guider

#endif
