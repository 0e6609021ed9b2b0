#pragma once

// Exact information quantities on small enumerable distributions.
//
// These routines check the two variational mutual-information bounds that
// motivate the training objective: the reconstruction-style lower bound
// E[ln q(o|s)] + H(o) <= I(s; o), and the KL-style upper bound
// E_o KL(p(s|o, ctx) || q(s|ctx)) >= I(s; o | ctx), plus the InfoNCE bound
// log N - L_InfoNCE <= I(s; o). All quantities are in nats.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace minco::info {

/// Row-major dense matrix of doubles.
class Table {
public:
  Table() = default;
  Table(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Table(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const std::vector<double>& data() const { return data_; }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Joint p(s, o); rows index s, columns index o.
class DiscreteJoint {
public:
  /// Throws std::invalid_argument unless entries are >= 0 and sum to 1 within 1e-12.
  explicit DiscreteJoint(Table table);

  const Table& table() const { return table_; }
  std::size_t num_s() const { return table_.rows(); }
  std::size_t num_o() const { return table_.cols(); }
  double operator()(std::size_t s, std::size_t o) const { return table_(s, o); }

  std::vector<double> marginal_s() const;
  std::vector<double> marginal_o() const;

private:
  Table table_;
};

/// Row-stochastic conditional table: row r is a distribution over columns.
class ConditionalModel {
public:
  /// Throws std::invalid_argument unless every row is a distribution within 1e-12.
  explicit ConditionalModel(Table table);

  const Table& table() const { return table_; }
  double operator()(std::size_t r, std::size_t c) const { return table_(r, c); }

private:
  Table table_;
};

/// Mixture over contexts k = (s_{t-1}, a_{t-1}): weight w_k and joint p_k(s_t, o_t).
class ConditionalJoint {
public:
  ConditionalJoint(std::vector<double> weights, std::vector<DiscreteJoint> joints);

  const std::vector<double>& weights() const { return weights_; }
  const std::vector<DiscreteJoint>& joints() const { return joints_; }
  std::size_t num_contexts() const { return weights_.size(); }

private:
  std::vector<double> weights_;
  std::vector<DiscreteJoint> joints_;
};

double entropy(const std::vector<double>& dist);

/// I(s; o) = sum p(s,o) ln[p(s,o) / (p(s) p(o))], with 0 ln 0 = 0.
double mutual_information(const DiscreteJoint& joint);

/// KL(p || q) over a finite support; q must cover the support of p.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

struct LowerBoundResult {
  double lower_bound;
  double mi;
};

/// q has one row per s, each a distribution over o.
LowerBoundResult prop1_gap(const DiscreteJoint& joint, const ConditionalModel& q);

struct UpperBoundResult {
  double upper_bound;
  double cond_mi;
};

/// q has one row per context, each a distribution over s.
UpperBoundResult prop2_gap(const ConditionalJoint& cj, const ConditionalModel& q);

struct InfoNceResult {
  double mean_bound;  // log N - mean(L)
  double std_error;   // standard error of mean_bound
  double mi;
};

/// Monte-Carlo InfoNCE with the true density ratio as critic: one positive
/// (s, o) ~ p and N-1 negatives o_j ~ p(o).
InfoNceResult infonce_bound_check(const DiscreteJoint& joint, int n_samples, int trials,
                                  std::mt19937_64& rng);

// Random instance generators used by the fuzz suites.
DiscreteJoint random_joint(std::size_t num_s, std::size_t num_o, std::mt19937_64& rng,
                           double sparsity = 0.0);
ConditionalModel random_conditional(std::size_t rows, std::size_t cols, std::mt19937_64& rng);
ConditionalJoint random_conditional_joint(std::size_t contexts, std::size_t num_s,
                                          std::size_t num_o, std::mt19937_64& rng);

/// Exact posterior p(o|s) as a conditional model (rows with zero mass become uniform).
ConditionalModel posterior_o_given_s(const DiscreteJoint& joint);
/// Per-context marginal p_k(s) as a conditional model.
ConditionalModel context_marginals(const ConditionalJoint& cj);

struct FuzzReport {
  std::string name;
  int instances = 0;
  int violations = 0;
  double max_violation = 0.0;  // largest amount by which the inequality was broken
  double max_equality_gap = 0.0;  // worst |bound - mi| when q is the optimal model
  bool passed() const { return violations == 0 && max_equality_gap < 1e-10; }
};

struct BoundsReport {
  FuzzReport prop1;
  FuzzReport prop2;
  FuzzReport infonce;
  bool passed() const { return prop1.passed() && prop2.passed() && infonce.passed(); }
};

struct BoundsOptions {
  int trials = 1000;
  int infonce_joints = 100;
  int infonce_trials = 20000;
  int infonce_negatives = 8;
  std::size_t max_support = 8;
  double tolerance = 1e-9;
  std::uint64_t seed = 0;
};

BoundsReport run_bound_suites(const BoundsOptions& options);

}  // namespace minco::info
