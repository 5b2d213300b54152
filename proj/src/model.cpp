#include "posnet/model.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "posnet/linalg.hpp"

namespace posnet::model {

namespace {

using json = nlohmann::ordered_json;

bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

// Places an n x nN block-row at block-row index i of an nN x nN matrix.
void embed_row(Eigen::MatrixXd& target, const Eigen::MatrixXd& row, int i) {
  target.middleRows(i * row.rows(), row.rows()) += row;
}

}  // namespace

FiniteMatrixDistribution::FiniteMatrixDistribution(
    std::vector<SupportPoint> support) {
  if (support.empty()) {
    throw std::invalid_argument("FiniteMatrixDistribution: empty support");
  }
  const Eigen::Index rows = support.front().matrix.rows();
  const Eigen::Index cols = support.front().matrix.cols();
  if (rows == 0 || cols == 0) {
    throw std::invalid_argument("FiniteMatrixDistribution: empty matrices");
  }
  double total = 0.0;
  for (const SupportPoint& sp : support) {
    if (!(sp.weight > 0.0) || !std::isfinite(sp.weight)) {
      throw std::invalid_argument(
          "FiniteMatrixDistribution: weights must be strictly positive");
    }
    if (sp.matrix.rows() != rows || sp.matrix.cols() != cols) {
      throw std::invalid_argument(
          "FiniteMatrixDistribution: support matrices differ in shape");
    }
    if (!sp.matrix.allFinite()) {
      throw std::invalid_argument(
          "FiniteMatrixDistribution: non-finite support entries");
    }
    total += sp.weight;
  }
  if (std::abs(total - 1.0) > policy::kWeightSumTol) {
    std::ostringstream os;
    os << "FiniteMatrixDistribution: weights sum to " << total << ", not 1";
    throw std::invalid_argument(os.str());
  }
  // Merge exactly identical support matrices (weights add) so degenerate
  // multi-point distributions behave as deterministic ones.
  for (SupportPoint& sp : support) {
    bool merged = false;
    for (SupportPoint& kept : support_) {
      if (same_matrix(kept.matrix, sp.matrix)) {
        kept.weight += sp.weight;
        merged = true;
        break;
      }
    }
    if (!merged) support_.push_back(std::move(sp));
  }
}

bool FiniteMatrixDistribution::identically_zero() const {
  for (const SupportPoint& sp : support_) {
    if (sp.matrix.cwiseAbs().maxCoeff() != 0.0) return false;
  }
  return true;
}

Eigen::MatrixXd block_mean(const FiniteMatrixDistribution& dist) {
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(dist.rows(), dist.cols());
  for (const SupportPoint& sp : dist.support()) {
    mean += sp.weight * sp.matrix;
  }
  return mean;
}

Eigen::MatrixXd block_w(const FiniteMatrixDistribution& dist, WSide side) {
  const Eigen::MatrixXd mean = block_mean(dist);
  const int dim = (side == WSide::normal) ? dist.cols() : dist.rows();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(dim, dim);
  for (const SupportPoint& sp : dist.support()) {
    const Eigen::MatrixXd d = sp.matrix - mean;
    if (side == WSide::normal) {
      w += sp.weight * (d.transpose() * d);  // W(A) = E[(A-E)^T (A-E)]
    } else {
      w += sp.weight * (d * d.transpose());  // W(A^T)
    }
  }
  return 0.5 * (w + w.transpose());
}

double block_esssup_dev(const FiniteMatrixDistribution& dist) {
  const Eigen::MatrixXd mean = block_mean(dist);
  double dev = 0.0;
  for (const SupportPoint& sp : dist.support()) {
    dev = std::max(dev, linalg::spectral_norm(sp.matrix - mean));
  }
  return dev;
}

MomentData moments(const FiniteMatrixDistribution& dist) {
  MomentData md;
  md.mean = block_mean(dist);
  md.w = block_w(dist, WSide::normal);
  md.wt = block_w(dist, WSide::transposed);
  md.esssup_dev = block_esssup_dev(dist);
  return md;
}

NetworkModel NetworkModel::a1(int N, int n, BlockMap blocks) {
  if (N < 1 || n < 1) {
    throw std::invalid_argument("NetworkModel: N and n must be >= 1");
  }
  for (const auto& [key, dist] : blocks) {
    const auto [i, j] = key;
    if (i < 0 || i >= N || j < 0 || j >= N) {
      throw std::invalid_argument("NetworkModel: block index out of range");
    }
    if (dist.rows() != n || dist.cols() != n) {
      std::ostringstream os;
      os << "NetworkModel: block (" << i + 1 << "," << j + 1 << ") has shape "
         << dist.rows() << "x" << dist.cols() << ", expected " << n << "x" << n;
      throw std::invalid_argument(os.str());
    }
  }
  NetworkModel m;
  m.mode_ = IndependenceMode::a1;
  m.N_ = N;
  m.n_ = n;
  m.blocks_ = std::move(blocks);
  return m;
}

NetworkModel NetworkModel::a2(int N, int n, RowMap rows) {
  if (N < 1 || n < 1) {
    throw std::invalid_argument("NetworkModel: N and n must be >= 1");
  }
  for (const auto& [i, dist] : rows) {
    if (i < 0 || i >= N) {
      throw std::invalid_argument("NetworkModel: row index out of range");
    }
    if (dist.rows() != n || dist.cols() != n * N) {
      std::ostringstream os;
      os << "NetworkModel: row " << i + 1 << " has shape " << dist.rows()
         << "x" << dist.cols() << ", expected " << n << "x" << n * N;
      throw std::invalid_argument(os.str());
    }
  }
  NetworkModel m;
  m.mode_ = IndependenceMode::a2;
  m.N_ = N;
  m.n_ = n;
  m.rows_ = std::move(rows);
  return m;
}

Eigen::MatrixXd NetworkModel::mean_matrix() const {
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(global_dim(), global_dim());
  if (mode_ == IndependenceMode::a1) {
    for (const auto& [key, dist] : blocks_) {
      mean.block(key.first * n_, key.second * n_, n_, n_) += block_mean(dist);
    }
  } else {
    for (const auto& [i, dist] : rows_) {
      embed_row(mean, block_mean(dist), i);
    }
  }
  return mean;
}

Neighborhoods neighborhoods(const NetworkModel& m) {
  const int N = m.subsystems();
  const int n = m.dim();
  Neighborhoods nb;
  nb.in.resize(N);
  nb.out.resize(N);
  nb.in_degree.assign(N, 0);
  auto add_edge = [&](int i, int j) {
    nb.in[i].push_back(j);
    nb.out[j].push_back(i);
  };
  if (m.mode() == IndependenceMode::a1) {
    for (const auto& [key, dist] : m.blocks()) {
      if (!dist.identically_zero()) add_edge(key.first, key.second);
    }
  } else {
    for (const auto& [i, dist] : m.rows()) {
      for (int j = 0; j < N; ++j) {
        bool nonzero = false;
        for (const SupportPoint& sp : dist.support()) {
          if (sp.matrix.middleCols(j * n, n).cwiseAbs().maxCoeff() != 0.0) {
            nonzero = true;
            break;
          }
        }
        if (nonzero) add_edge(i, j);
      }
    }
  }
  for (int i = 0; i < N; ++i) {
    nb.in_degree[i] = static_cast<int>(nb.in[i].size());
  }
  return nb;
}

namespace {

bool metzler_support(const Eigen::MatrixXd& m) {
  return linalg::is_metzler(m, policy::kSignTol);
}

bool nonnegative_support(const Eigen::MatrixXd& m) {
  return m.minCoeff() >= -policy::kSignTol;
}

}  // namespace

std::optional<std::string> positivity_violation(const NetworkModel& m) {
  const int n = m.dim();
  const auto describe = [](int i, int j, bool diag) {
    std::ostringstream os;
    os << "block (" << i + 1 << "," << j + 1 << ") has a support point that is "
       << (diag ? "not Metzler" : "not entrywise nonnegative");
    return os.str();
  };
  if (m.mode() == IndependenceMode::a1) {
    for (const auto& [key, dist] : m.blocks()) {
      const bool diag = key.first == key.second;
      for (const SupportPoint& sp : dist.support()) {
        const bool ok = diag ? metzler_support(sp.matrix)
                             : nonnegative_support(sp.matrix);
        if (!ok) return describe(key.first, key.second, diag);
      }
    }
  } else {
    for (const auto& [i, dist] : m.rows()) {
      for (const SupportPoint& sp : dist.support()) {
        for (int j = 0; j < m.subsystems(); ++j) {
          const Eigen::MatrixXd sub = sp.matrix.middleCols(j * n, n);
          const bool ok = (j == i) ? metzler_support(sub) : nonnegative_support(sub);
          if (!ok) return describe(i, j, j == i);
        }
      }
    }
  }
  return std::nullopt;
}

bool check_positivity(const NetworkModel& m) {
  return !positivity_violation(m).has_value();
}

FiniteMatrixDistribution row_distribution(const NetworkModel& m, int i,
                                          unsigned long long cap) {
  if (i < 0 || i >= m.subsystems()) {
    throw std::invalid_argument("row_distribution: row index out of range");
  }
  const int n = m.dim();
  const int width = m.global_dim();
  if (m.mode() == IndependenceMode::a2) {
    const auto it = m.rows().find(i);
    if (it != m.rows().end()) return it->second;
    return FiniteMatrixDistribution::deterministic(
        Eigen::MatrixXd::Zero(n, width));
  }

  // A1: product distribution over the independent blocks of row i.
  std::vector<std::pair<int, const FiniteMatrixDistribution*>> parts;
  unsigned long long count = 1;
  for (const auto& [key, dist] : m.blocks()) {
    if (key.first != i) continue;
    const unsigned long long sz = dist.support().size();
    if (count > cap / sz) {
      std::ostringstream os;
      os << "row_distribution: row " << i + 1 << " support size exceeds cap "
         << cap;
      throw std::length_error(os.str());
    }
    count *= sz;
    parts.emplace_back(key.second, &dist);
  }
  if (parts.empty()) {
    return FiniteMatrixDistribution::deterministic(
        Eigen::MatrixXd::Zero(n, width));
  }
  std::vector<SupportPoint> out;
  out.reserve(count);
  std::vector<std::size_t> odo(parts.size(), 0);
  while (true) {
    SupportPoint sp;
    sp.weight = 1.0;
    sp.matrix = Eigen::MatrixXd::Zero(n, width);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const SupportPoint& blk = parts[k].second->support()[odo[k]];
      sp.weight *= blk.weight;
      sp.matrix.middleCols(parts[k].first * n, n) = blk.matrix;
    }
    out.push_back(std::move(sp));
    std::size_t k = 0;
    for (; k < parts.size(); ++k) {
      if (++odo[k] < parts[k].second->support().size()) break;
      odo[k] = 0;
    }
    if (k == parts.size()) break;
  }
  return FiniteMatrixDistribution(std::move(out));
}

Eigen::MatrixXd row_var_s(const NetworkModel& m, int i,
                          unsigned long long cap) {
  const FiniteMatrixDistribution row = row_distribution(m, i, cap);
  const int n = m.dim();
  const int dim = m.global_dim();

  // S_i = Z + Z^T with Z = e_i (x) A_i (the block-row embedded at block i).
  // Using the row structure of Z:
  //   Z^2   = e_i (x) (A_ii A_i),   Z Z^T = e_i e_i^T (x) (A_i A_i^T),
  //   Z^T Z = A_i^T A_i,
  // so E[S^2] assembles from three small expectations instead of dense
  // nN x nN squares per support point.
  Eigen::MatrixXd e_zsq = Eigen::MatrixXd::Zero(n, dim);      // E[A_ii A_i]
  Eigen::MatrixXd e_outer = Eigen::MatrixXd::Zero(n, n);      // E[A_i A_i^T]
  Eigen::MatrixXd e_gram = Eigen::MatrixXd::Zero(dim, dim);   // E[A_i^T A_i]
  for (const SupportPoint& sp : row.support()) {
    const Eigen::MatrixXd& a = sp.matrix;
    const Eigen::MatrixXd aii = a.middleCols(i * n, n);
    e_zsq += sp.weight * (aii * a);
    e_outer += sp.weight * (a * a.transpose());
    e_gram += sp.weight * (a.transpose() * a);
  }
  Eigen::MatrixXd e_s2 = e_gram;
  embed_row(e_s2, e_zsq, i);
  e_s2 += Eigen::MatrixXd(e_s2.transpose()) - e_gram;  // add embed^T once
  e_s2.block(i * n, i * n, n, n) += e_outer;

  Eigen::MatrixXd e_s = Eigen::MatrixXd::Zero(dim, dim);
  embed_row(e_s, block_mean(row), i);
  e_s += Eigen::MatrixXd(e_s.transpose());
  const Eigen::MatrixXd var = e_s2 - e_s * e_s;
  return 0.5 * (var + var.transpose());
}

NetworkModel to_a2(const NetworkModel& m, unsigned long long cap) {
  if (m.mode() == IndependenceMode::a2) return m;
  NetworkModel::RowMap rows;
  for (int i = 0; i < m.subsystems(); ++i) {
    FiniteMatrixDistribution row = row_distribution(m, i, cap);
    if (!row.identically_zero()) rows.emplace(i, std::move(row));
  }
  return NetworkModel::a2(m.subsystems(), m.dim(), std::move(rows));
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) {
    throw std::runtime_error("model JSON: matrix must be a non-empty array");
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  if (cols == 0) {
    throw std::runtime_error("model JSON: matrix rows must be non-empty arrays");
  }
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw std::runtime_error("model JSON: ragged matrix rows");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) {
        throw std::runtime_error("model JSON: matrix entries must be numbers");
      }
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

json support_to_json(const FiniteMatrixDistribution& dist) {
  json support = json::array();
  for (const SupportPoint& sp : dist.support()) {
    support.push_back(json{{"w", sp.weight}, {"m", matrix_to_json(sp.matrix)}});
  }
  return support;
}

FiniteMatrixDistribution support_from_json(const json& j) {
  if (!j.is_array() || j.empty()) {
    throw std::runtime_error("model JSON: support must be a non-empty array");
  }
  std::vector<SupportPoint> pts;
  for (const json& p : j) {
    if (!p.contains("w") || !p.contains("m")) {
      throw std::runtime_error("model JSON: support point needs \"w\" and \"m\"");
    }
    pts.push_back({p.at("w").get<double>(), matrix_from_json(p.at("m"))});
  }
  return FiniteMatrixDistribution(std::move(pts));
}

}  // namespace

std::string model_to_json(const NetworkModel& m) {
  json root;
  root["N"] = m.subsystems();
  root["n"] = m.dim();
  if (m.mode() == IndependenceMode::a1) {
    root["mode"] = "a1";
    json blocks = json::array();
    for (const auto& [key, dist] : m.blocks()) {
      blocks.push_back(json{{"i", key.first + 1},
                            {"j", key.second + 1},
                            {"support", support_to_json(dist)}});
    }
    root["blocks"] = std::move(blocks);
  } else {
    root["mode"] = "a2";
    json rows = json::array();
    for (const auto& [i, dist] : m.rows()) {
      rows.push_back(json{{"i", i + 1}, {"support", support_to_json(dist)}});
    }
    root["rows"] = std::move(rows);
  }
  return root.dump(2) + "\n";
}

NetworkModel model_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("model JSON: parse failure: ") +
                             e.what());
  }
  for (const char* key : {"N", "n", "mode"}) {
    if (!root.contains(key)) {
      throw std::runtime_error(std::string("model JSON: missing \"") + key +
                               "\"");
    }
  }
  const int N = root.at("N").get<int>();
  const int n = root.at("n").get<int>();
  const std::string mode = root.at("mode").get<std::string>();
  if (mode == "a1") {
    if (!root.contains("blocks") || !root.at("blocks").is_array()) {
      throw std::runtime_error("model JSON: a1 model needs a \"blocks\" array");
    }
    NetworkModel::BlockMap blocks;
    for (const json& b : root.at("blocks")) {
      const int i = b.at("i").get<int>() - 1;
      const int j = b.at("j").get<int>() - 1;
      if (!blocks.emplace(std::make_pair(i, j), support_from_json(b.at("support")))
               .second) {
        std::ostringstream os;
        os << "model JSON: duplicate block (" << i + 1 << "," << j + 1 << ")";
        throw std::runtime_error(os.str());
      }
    }
    return NetworkModel::a1(N, n, std::move(blocks));
  }
  if (mode == "a2") {
    if (!root.contains("rows") || !root.at("rows").is_array()) {
      throw std::runtime_error("model JSON: a2 model needs a \"rows\" array");
    }
    NetworkModel::RowMap rows;
    for (const json& r : root.at("rows")) {
      const int i = r.at("i").get<int>() - 1;
      if (!rows.emplace(i, support_from_json(r.at("support"))).second) {
        std::ostringstream os;
        os << "model JSON: duplicate row " << i + 1;
        throw std::runtime_error(os.str());
      }
    }
    return NetworkModel::a2(N, n, std::move(rows));
  }
  throw std::runtime_error("model JSON: mode must be \"a1\" or \"a2\"");
}

void save_model(const NetworkModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_model: cannot open " + path);
  }
  out << model_to_json(m);
}

NetworkModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_model: cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace posnet::model
