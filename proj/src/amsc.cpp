#include "guider/amsc.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "guider/parallel.hpp"
#include "guider/rng.hpp"

namespace guider {

HashProjector::HashProjector(std::size_t k, std::size_t dim_text,
                             std::size_t dim_vision, std::uint64_t seed)
    : k_(k), w_text_(k, dim_text), w_vision_(k, dim_vision), b_text_(k),
      b_vision_(k) {
  auto rng = make_rng(seed, "hash-projector");
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& v : w_text_.data()) v = gauss(rng);
  for (auto& v : w_vision_.data()) v = gauss(rng);
  for (auto& v : b_text_) v = gauss(rng);
  for (auto& v : b_vision_) v = gauss(rng);
}

std::vector<int> HashProjector::hash(const Matrix& w,
                                     const std::vector<double>& b,
                                     std::span<const double> x) const {
  if (x.size() != w.cols())
    throw std::invalid_argument("hash: feature dimension mismatch");
  std::vector<int> code(k_);
  for (std::size_t r = 0; r < k_; ++r) {
    double s = b[r] + dot(w.row(r), x);
    code[r] = s < 0.0 ? -1 : 1;  // sign(0) = +1
  }
  return code;
}

std::vector<int> HashProjector::hash_text(std::span<const double> x) const {
  return hash(w_text_, b_text_, x);
}
std::vector<int> HashProjector::hash_vision(std::span<const double> x) const {
  return hash(w_vision_, b_vision_, x);
}

std::pair<std::vector<Index>, std::vector<Index>> partition_by_loss(
    std::span<const Index> items, std::span<const double> losses) {
  if (items.empty() || items.size() != losses.size())
    throw std::invalid_argument("partition_by_loss: empty or mismatched input");
  double mean = compensated_sum(losses) / (double)losses.size();
  std::vector<Index> rel, spr;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (losses[k] <= mean)
      rel.push_back(items[k]);
    else
      spr.push_back(items[k]);
  }
  return {rel, spr};
}

double modal_similarity(Index i, Index j, const ModalFeatureTable& text,
                        const ModalFeatureTable& vision) {
  double st = cosine(text.matrix.row(i), text.matrix.row(j));
  double sv = cosine(vision.matrix.row(i), vision.matrix.row(j));
  return std::max(st, sv);
}

double confidence(Index i, const HashProjector& proj,
                  const ModalFeatureTable& text,
                  const ModalFeatureTable& vision) {
  auto ct = proj.hash_text(text.matrix.row(i));
  auto cv = proj.hash_vision(vision.matrix.row(i));
  long agree = 0;
  for (std::size_t b = 0; b < ct.size(); ++b) agree += ct[b] * cv[b];
  return (double)agree / (double)ct.size();
}

double combined_similarity(Index i, Index i_rel, const HashProjector& proj,
                           const ModalFeatureTable& text,
                           const ModalFeatureTable& vision) {
  return modal_similarity(i, i_rel, text, vision) *
         confidence(i, proj, text, vision);
}

void calibrate(UserPartition& p, const HashProjector& proj,
               const ModalFeatureTable& text, const ModalFeatureTable& vision,
               double s_thres) {
  p.true_set = p.reliable;
  p.false_set.clear();
  for (Index i : p.spurious) {
    bool rescued = false;
    double conf = confidence(i, proj, text, vision);
    for (Index ir : p.reliable) {
      if (modal_similarity(i, ir, text, vision) * conf > s_thres) {
        rescued = true;
        break;
      }
    }
    if (rescued)
      p.true_set.push_back(i);
    else
      p.false_set.push_back(i);
  }
}

std::vector<UserPartition> run_amsc(const ScoreModel& teacher,
                                    const InteractionDataset& train,
                                    const ModalFeatureTable& text,
                                    const ModalFeatureTable& vision,
                                    const HashProjector& proj, double s_thres,
                                    int threads) {
  // per-user loss vectors in train order
  std::vector<std::vector<double>> losses(train.n_users);
  auto all = per_interaction_losses(teacher, train);
  std::vector<std::vector<Index>> items(train.n_users);
  for (std::size_t k = 0; k < train.interactions.size(); ++k) {
    const auto& it = train.interactions[k];
    items[it.user].push_back(it.item);
    losses[it.user].push_back(all[k]);
  }

  std::vector<UserPartition> parts(train.n_users);
  parallel_chunks(train.n_users, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t u = b; u < e; ++u) {
      parts[u].user = (Index)u;
      if (items[u].empty()) continue;
      auto [rel, spr] = partition_by_loss(items[u], losses[u]);
      parts[u].reliable = std::move(rel);
      parts[u].spurious = std::move(spr);
      calibrate(parts[u], proj, text, vision, s_thres);
    }
  });
  return parts;
}

void dump_partitions(const std::string& path,
                     std::span<const UserPartition> parts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& p : parts) {
    nlohmann::json j{{"user", p.user},
                     {"reliable", p.reliable},
                     {"spurious", p.spurious},
                     {"true", p.true_set},
                     {"false", p.false_set}};
    out << j.dump() << '\n';
  }
}

}  // namespace guider
