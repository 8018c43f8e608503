#include "guider/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace guider {

Matrix xavier_init(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0)
    throw std::invalid_argument("zero dimension in parameter matrix");
  double a = std::sqrt(6.0 / (double)(rows + cols));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = dist(rng);
  return m;
}

TeacherModel::TeacherModel(Index nu, Index ni, std::size_t d,
                           std::size_t layers, std::uint64_t seed)
    : n_layers(layers) {
  auto rng = make_rng(seed, "teacher-init");
  user_emb = xavier_init(nu, d, rng);
  item_emb = xavier_init(ni, d, rng);
  user_eff = user_emb;
  item_eff = item_emb;
}

void TeacherModel::build_adjacency(const InteractionDataset& train) {
  std::vector<std::size_t> du(n_users(), 0), di(n_items(), 0);
  for (const auto& it : train.interactions) {
    ++du[it.user];
    ++di[it.item];
  }
  edges.clear();
  edges.reserve(train.size());
  for (const auto& it : train.interactions) {
    double w = 1.0 / std::sqrt((double)(du[it.user] * di[it.item]));
    edges.push_back({it.user, it.item, w});
  }
}

void TeacherModel::propagate(const Matrix& users_in, const Matrix& items_in,
                             Matrix& users_out, Matrix& items_out) const {
  std::size_t d = users_in.cols();
  users_out = users_in;
  items_out = items_in;
  if (n_layers == 0) return;
  Matrix cu = users_in, ci = items_in;  // layer-l embeddings
  Matrix nu(users_in.rows(), d), ni(items_in.rows(), d);
  for (std::size_t l = 1; l <= n_layers; ++l) {
    nu.zero();
    ni.zero();
    for (const auto& e : edges) {
      auto iu = nu.row(e.user);
      auto ii = ni.row(e.item);
      auto su = cu.row(e.user);
      auto si = ci.row(e.item);
      for (std::size_t k = 0; k < d; ++k) {
        iu[k] += e.weight * si[k];
        ii[k] += e.weight * su[k];
      }
    }
    cu = nu;
    ci = ni;
    for (std::size_t k = 0; k < users_out.data().size(); ++k)
      users_out.data()[k] += cu.data()[k];
    for (std::size_t k = 0; k < items_out.data().size(); ++k)
      items_out.data()[k] += ci.data()[k];
  }
  double inv = 1.0 / (double)(n_layers + 1);
  for (auto& v : users_out.data()) v *= inv;
  for (auto& v : items_out.data()) v *= inv;
}

void TeacherModel::refresh() {
  propagate(user_emb, item_emb, user_eff, item_eff);
}

void TeacherModel::backprop(const Matrix& gu_eff, const Matrix& gi_eff,
                            Matrix& gu, Matrix& gi) const {
  // the averaging operator is symmetric in the stacked node space
  propagate(gu_eff, gi_eff, gu, gi);
}

double TeacherModel::score(Index u, Index i) const {
  if (u >= n_users() || i >= n_items())
    throw std::out_of_range("score: index out of range");
  return dot(user_eff.row(u), item_eff.row(i));
}

StudentModel::StudentModel(Index nu, Index ni, std::size_t d,
                           std::size_t dim_text, std::size_t dim_vision,
                           std::uint64_t seed) {
  auto rng = make_rng(seed, "student-init");
  user_emb = xavier_init(nu, d, rng);
  item_id_emb = xavier_init(ni, d, rng);
  proj_text = xavier_init(d, dim_text, rng);
  proj_vision = xavier_init(d, dim_vision, rng);
}

void StudentModel::attach_features(const ModalFeatureTable* t,
                                   const ModalFeatureTable* v) {
  text = t;
  vision = v;
}

void StudentModel::item_repr(Index i, std::span<double> out) const {
  if (i >= n_items()) throw std::out_of_range("item_repr: index out of range");
  if (!text || !vision || i >= text->matrix.rows() ||
      i >= vision->matrix.rows())
    throw std::runtime_error("item_repr: missing feature row for item " +
                             std::to_string(i));
  std::size_t d = dim();
  auto id = item_id_emb.row(i);
  auto t = text->matrix.row(i);
  auto v = vision->matrix.row(i);
  for (std::size_t k = 0; k < d; ++k) {
    double acc = id[k];
    auto pt = proj_text.row(k);
    for (std::size_t c = 0; c < pt.size(); ++c) acc += pt[c] * t[c];
    auto pv = proj_vision.row(k);
    for (std::size_t c = 0; c < pv.size(); ++c) acc += pv[c] * v[c];
    out[k] = acc;
  }
}

double StudentModel::score(Index u, Index i) const {
  if (u >= n_users()) throw std::out_of_range("score: user out of range");
  std::vector<double> h(dim());
  item_repr(i, h);
  return dot(user_emb.row(u), h);
}

namespace {

constexpr char kModelMagic[4] = {'G', 'M', 'D', '1'};

void write_block(std::ofstream& out, const Matrix& m) {
  std::vector<float> buf(m.data().size());
  for (std::size_t k = 0; k < buf.size(); ++k) buf[k] = (float)m.data()[k];
  out.write(reinterpret_cast<const char*>(buf.data()),
            (std::streamsize)(buf.size() * sizeof(float)));
}

Matrix read_block(std::ifstream& in, std::size_t rows, std::size_t cols) {
  std::vector<float> buf(rows * cols);
  in.read(reinterpret_cast<char*>(buf.data()),
          (std::streamsize)(buf.size() * sizeof(float)));
  if ((std::size_t)in.gcount() != buf.size() * sizeof(float))
    throw std::runtime_error("checkpoint: truncated parameter block");
  Matrix m(rows, cols);
  for (std::size_t k = 0; k < buf.size(); ++k) m.data()[k] = (double)buf[k];
  return m;
}

void write_header(std::ofstream& out, const nlohmann::json& j) {
  std::string h = j.dump();
  std::uint32_t len = (std::uint32_t)h.size();
  out.write(kModelMagic, 4);
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(h.data(), (std::streamsize)h.size());
}

nlohmann::json read_header(std::ifstream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kModelMagic, 4) != 0)
    throw std::runtime_error(path + ": not a GMD1 checkpoint");
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 4);
  std::string h(len, '\0');
  in.read(h.data(), len);
  if ((std::uint32_t)in.gcount() != len)
    throw std::runtime_error(path + ": truncated header");
  return nlohmann::json::parse(h);
}

}  // namespace

void save_teacher(const std::string& path, const TeacherModel& m,
                  std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  nlohmann::json j{{"kind", "teacher"},
                   {"n_users", m.n_users()},
                   {"n_items", m.n_items()},
                   {"d", m.dim()},
                   {"n_layers", m.n_layers},
                   {"seed", seed}};
  write_header(out, j);
  write_block(out, m.user_emb);
  write_block(out, m.item_emb);
}

void save_student(const std::string& path, const StudentModel& m,
                  std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  nlohmann::json j{{"kind", "student"},
                   {"n_users", m.n_users()},
                   {"n_items", m.n_items()},
                   {"d", m.dim()},
                   {"dim_text", m.proj_text.cols()},
                   {"dim_vision", m.proj_vision.cols()},
                   {"seed", seed}};
  write_header(out, j);
  write_block(out, m.user_emb);
  write_block(out, m.item_id_emb);
  write_block(out, m.proj_text);
  write_block(out, m.proj_vision);
}

std::string checkpoint_kind(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_header(in, path).at("kind");
}

TeacherModel load_teacher(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto j = read_header(in, path);
  if (j.at("kind") != "teacher")
    throw std::runtime_error(path + ": expected a teacher checkpoint, found " +
                             j.at("kind").get<std::string>());
  TeacherModel m;
  std::size_t nu = j.at("n_users"), ni = j.at("n_items"), d = j.at("d");
  m.n_layers = j.at("n_layers");
  m.user_emb = read_block(in, nu, d);
  m.item_emb = read_block(in, ni, d);
  m.user_eff = m.user_emb;
  m.item_eff = m.item_emb;
  return m;
}

StudentModel load_student(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto j = read_header(in, path);
  if (j.at("kind") != "student")
    throw std::runtime_error(path + ": expected a student checkpoint, found " +
                             j.at("kind").get<std::string>());
  StudentModel m;
  std::size_t nu = j.at("n_users"), ni = j.at("n_items"), d = j.at("d");
  std::size_t dt = j.at("dim_text"), dv = j.at("dim_vision");
  m.user_emb = read_block(in, nu, d);
  m.item_id_emb = read_block(in, ni, d);
  m.proj_text = read_block(in, d, dt);
  m.proj_vision = read_block(in, d, dv);
  return m;
}

}  // namespace guider
