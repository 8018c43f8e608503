#include "guider/losses.hpp"

#include <stdexcept>

namespace guider {

void StudentRef::add_score_grad(Index u, Index i, double coeff) {
  std::size_t d = model_.dim();
  std::vector<double> h(d);
  model_.item_repr(i, h);
  auto hu = model_.user_emb.row(u);
  auto gu = grad_user.row(u);
  auto gid = grad_item_id.row(i);
  auto t = model_.text->matrix.row(i);
  auto v = model_.vision->matrix.row(i);
  for (std::size_t k = 0; k < d; ++k) {
    gu[k] += coeff * h[k];
    double cu = coeff * hu[k];
    gid[k] += cu;
    auto gt = grad_proj_text.row(k);
    for (std::size_t c = 0; c < gt.size(); ++c) gt[c] += cu * t[c];
    auto gv = grad_proj_vision.row(k);
    for (std::size_t c = 0; c < gv.size(); ++c) gv[c] += cu * v[c];
  }
}

double pairwise_batch(ScoreModel& m, std::span<const Triple> triples) {
  if (triples.empty())
    throw std::runtime_error("pairwise_batch: empty triple batch");
  std::vector<double> values;
  values.reserve(triples.size());
  for (const auto& t : triples) {
    auto r = bpr_loss(m.score(t.u, t.i), m.score(t.u, t.j));
    values.push_back(r.value);
    m.add_score_grad(t.u, t.i, r.dpos);
    m.add_score_grad(t.u, t.j, r.dneg);
  }
  return compensated_sum(values);
}

double bce_batch(ScoreModel& m, std::span<const LabeledPair> pairs) {
  if (pairs.empty()) throw std::runtime_error("bce_batch: empty batch");
  std::vector<double> values;
  values.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto r = bce_loss(m.score(p.u, p.i), p.label);
    values.push_back(r.value);
    m.add_score_grad(p.u, p.i, r.dscore);
  }
  return compensated_sum(values);
}

std::vector<double> per_interaction_losses(const ScoreModel& m,
                                           const InteractionDataset& ds) {
  std::vector<double> out;
  out.reserve(ds.size());
  for (const auto& it : ds.interactions)
    out.push_back(bce_loss(m.score(it.user, it.item), 1).value);
  return out;
}

}  // namespace guider
