#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "posnet/policy.hpp"

// The uncertain networked system: N subsystems of dimension n whose
// interconnection matrix A is assembled from random blocks with finite
// support. Finite support keeps every moment (mean, W, Var, esssup) exact
// by enumeration.

namespace posnet::model {

enum class IndependenceMode { a1, a2 };  // independent blocks / block-rows

enum class WSide { normal, transposed };  // W(A) vs W(A^T)

struct SupportPoint {
  double weight = 0.0;
  Eigen::MatrixXd matrix;
};

// Finitely supported matrix-valued random variable. Construction validates
// weights (positive, summing to 1 within 1e-12), shape agreement, and merges
// exactly identical support matrices so that "two-point" distributions with
// equal points behave as deterministic.
class FiniteMatrixDistribution {
 public:
  explicit FiniteMatrixDistribution(std::vector<SupportPoint> support);

  static FiniteMatrixDistribution deterministic(const Eigen::MatrixXd& m) {
    return FiniteMatrixDistribution({{1.0, m}});
  }
  static FiniteMatrixDistribution two_point(double w_hi,
                                            const Eigen::MatrixXd& hi,
                                            const Eigen::MatrixXd& lo) {
    return FiniteMatrixDistribution({{w_hi, hi}, {1.0 - w_hi, lo}});
  }

  const std::vector<SupportPoint>& support() const { return support_; }
  int rows() const { return static_cast<int>(support_.front().matrix.rows()); }
  int cols() const { return static_cast<int>(support_.front().matrix.cols()); }
  bool deterministic_support() const { return support_.size() == 1; }
  bool identically_zero() const;

 private:
  std::vector<SupportPoint> support_;
};

// Exact first/second moments of one block (or block-row).
struct MomentData {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd w;    // W(A) = E[A^T A] - E[A]^T E[A]
  Eigen::MatrixXd wt;   // W(A^T)
  double esssup_dev = 0.0;
};

Eigen::MatrixXd block_mean(const FiniteMatrixDistribution& dist);
Eigen::MatrixXd block_w(const FiniteMatrixDistribution& dist, WSide side);
double block_esssup_dev(const FiniteMatrixDistribution& dist);
MomentData moments(const FiniteMatrixDistribution& dist);

// Immutable network model. A1 mode: sparse map (i,j) -> n x n block
// distribution, blocks mutually independent. A2 mode: map i -> n x (nN)
// block-row distribution, rows mutually independent. Absent entries are the
// zero random variable. Indices are 0-based internally; file I/O is 1-based.
class NetworkModel {
 public:
  using BlockMap = std::map<std::pair<int, int>, FiniteMatrixDistribution>;
  using RowMap = std::map<int, FiniteMatrixDistribution>;

  static NetworkModel a1(int N, int n, BlockMap blocks);
  static NetworkModel a2(int N, int n, RowMap rows);

  IndependenceMode mode() const { return mode_; }
  int subsystems() const { return N_; }
  int dim() const { return n_; }
  int global_dim() const { return N_ * n_; }
  const BlockMap& blocks() const { return blocks_; }
  const RowMap& rows() const { return rows_; }

  // Global nN x nN mean interconnection matrix E[A].
  Eigen::MatrixXd mean_matrix() const;

 private:
  NetworkModel() = default;
  IndependenceMode mode_ = IndependenceMode::a1;
  int N_ = 0;
  int n_ = 0;
  BlockMap blocks_;
  RowMap rows_;
};

struct Neighborhoods {
  std::vector<std::vector<int>> in;   // j such that block (i,j) is an edge
  std::vector<std::vector<int>> out;  // j such that block (j,i) is an edge
  std::vector<int> in_degree;
};

// Edge (i,j) present iff the block exists and is not identically zero.
Neighborhoods neighborhoods(const NetworkModel& m);

// True iff every realization of A is Metzler: all off-diagonal blocks have
// entrywise nonnegative support, diagonal blocks have Metzler support.
bool check_positivity(const NetworkModel& m);

// Empty when positive; otherwise a description of the first offending block.
std::optional<std::string> positivity_violation(const NetworkModel& m);

// Product distribution of row i (A1 models enumerate the independent blocks
// of the row; A2 models return the stored row). Throws std::length_error
// naming the computed size when enumeration would exceed `cap` points.
FiniteMatrixDistribution row_distribution(
    const NetworkModel& m, int i, unsigned long long cap = policy::kEnumCap);

// Var(S_i) with S_i = e_i^T (x) A_i^T + e_i (x) A_i, exact over the row's
// finite support; nN x nN symmetric PSD, rank at most n * d-[i] for models
// whose diagonal block is present.
Eigen::MatrixXd row_var_s(const NetworkModel& m, int i,
                          unsigned long long cap = policy::kEnumCap);

// Convert an A1 model to an equivalent A2 model by row enumeration.
NetworkModel to_a2(const NetworkModel& m,
                   unsigned long long cap = policy::kEnumCap);

// JSON serialization (see README for the schema; indices 1-based on disk).
std::string model_to_json(const NetworkModel& m);
NetworkModel model_from_json(const std::string& text);
void save_model(const NetworkModel& m, const std::string& path);
NetworkModel load_model(const std::string& path);

}  // namespace posnet::model
