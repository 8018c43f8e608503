#ifndef GUIDER_MODEL_HPP
#define GUIDER_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "guider/dataset.hpp"
#include "guider/matrix.hpp"
#include "guider/rng.hpp"

namespace guider {

// One undirected edge of the bipartite interaction graph with its
// symmetric-degree normalization 1/sqrt(deg_u * deg_i).
struct NormEdge {
  Index user;
  Index item;
  double weight;
};

Matrix xavier_init(std::size_t rows, std::size_t cols, Rng& rng);

// ID-only recommender: matrix factorization, optionally with layer-wise
// neighborhood averaging over the normalized bipartite adjacency
// (effective embedding = mean of layer 0..L embeddings).
class TeacherModel {
 public:
  TeacherModel() = default;
  TeacherModel(Index n_users, Index n_items, std::size_t d,
               std::size_t n_layers, std::uint64_t seed);

  void build_adjacency(const InteractionDataset& train);

  // recompute the effective embeddings from the current parameters
  void refresh();

  double score(Index u, Index i) const;

  Index n_users() const { return (Index)user_emb.rows(); }
  Index n_items() const { return (Index)item_emb.rows(); }
  std::size_t dim() const { return user_emb.cols(); }

  // base parameters
  Matrix user_emb;
  Matrix item_emb;
  std::size_t n_layers = 0;
  std::vector<NormEdge> edges;

  // propagated views, valid after refresh()
  Matrix user_eff;
  Matrix item_eff;

  // Pulls a gradient w.r.t. the effective embeddings back to the base
  // tables. The propagation operator is symmetric, so this applies the
  // same averaging to the gradient matrices.
  void backprop(const Matrix& grad_user_eff, const Matrix& grad_item_eff,
                Matrix& grad_user, Matrix& grad_item) const;

 private:
  void propagate(const Matrix& users_in, const Matrix& items_in,
                 Matrix& users_out, Matrix& items_out) const;
};

// Multi-modal recommender: item representation is the ID embedding plus
// linear projections of the text and vision features into the same space.
class StudentModel {
 public:
  StudentModel() = default;
  StudentModel(Index n_users, Index n_items, std::size_t d,
               std::size_t dim_text, std::size_t dim_vision,
               std::uint64_t seed);

  void attach_features(const ModalFeatureTable* text,
                       const ModalFeatureTable* vision);

  void item_repr(Index i, std::span<double> out) const;
  double score(Index u, Index i) const;

  Index n_users() const { return (Index)user_emb.rows(); }
  Index n_items() const { return (Index)item_id_emb.rows(); }
  std::size_t dim() const { return user_emb.cols(); }

  Matrix user_emb;
  Matrix item_id_emb;
  Matrix proj_text;    // d x dim_text
  Matrix proj_vision;  // d x dim_vision

  const ModalFeatureTable* text = nullptr;
  const ModalFeatureTable* vision = nullptr;
};

void save_teacher(const std::string& path, const TeacherModel& m,
                  std::uint64_t seed);
void save_student(const std::string& path, const StudentModel& m,
                  std::uint64_t seed);
TeacherModel load_teacher(const std::string& path);
StudentModel load_student(const std::string& path);

// "teacher" or "student", read from the checkpoint header
std::string checkpoint_kind(const std::string& path);

}  // namespace guider

#endif
