#include "minco/infotheory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace minco::info {

namespace {

constexpr double kMassTolerance = 1e-12;

double xlogy_ratio(double p, double num, double den) {
  // p * ln(num / den) with the 0 * ln(.) = 0 convention.
  if (p == 0.0) return 0.0;
  return p * (std::log(num) - std::log(den));
}

void check_nonnegative(const Table& table, const char* what) {
  for (double v : table.data()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) + ": entries must be finite and >= 0");
    }
  }
}

std::vector<double> normalized(std::vector<double> v) {
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x /= total;
  return v;
}

}  // namespace

Table::Table(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("Table: data size does not match shape");
  }
}

DiscreteJoint::DiscreteJoint(Table table) : table_(std::move(table)) {
  if (table_.rows() == 0 || table_.cols() == 0) {
    throw std::invalid_argument("DiscreteJoint: empty table");
  }
  check_nonnegative(table_, "DiscreteJoint");
  const auto& d = table_.data();
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  if (std::abs(total - 1.0) > kMassTolerance) {
    throw std::invalid_argument("DiscreteJoint: total mass must be 1");
  }
}

std::vector<double> DiscreteJoint::marginal_s() const {
  std::vector<double> m(num_s(), 0.0);
  for (std::size_t s = 0; s < num_s(); ++s)
    for (std::size_t o = 0; o < num_o(); ++o) m[s] += table_(s, o);
  return m;
}

std::vector<double> DiscreteJoint::marginal_o() const {
  std::vector<double> m(num_o(), 0.0);
  for (std::size_t s = 0; s < num_s(); ++s)
    for (std::size_t o = 0; o < num_o(); ++o) m[o] += table_(s, o);
  return m;
}

ConditionalModel::ConditionalModel(Table table) : table_(std::move(table)) {
  check_nonnegative(table_, "ConditionalModel");
  for (std::size_t r = 0; r < table_.rows(); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < table_.cols(); ++c) total += table_(r, c);
    if (std::abs(total - 1.0) > kMassTolerance) {
      throw std::invalid_argument("ConditionalModel: every row must sum to 1");
    }
  }
}

ConditionalJoint::ConditionalJoint(std::vector<double> weights, std::vector<DiscreteJoint> joints)
    : weights_(std::move(weights)), joints_(std::move(joints)) {
  if (weights_.empty() || weights_.size() != joints_.size()) {
    throw std::invalid_argument("ConditionalJoint: one weight per context joint required");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw std::invalid_argument("ConditionalJoint: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > kMassTolerance) {
    throw std::invalid_argument("ConditionalJoint: weights must sum to 1");
  }
  for (const auto& j : joints_) {
    if (j.num_s() != joints_.front().num_s() || j.num_o() != joints_.front().num_o()) {
      throw std::invalid_argument("ConditionalJoint: context tables must share a shape");
    }
  }
}

double entropy(const std::vector<double>& dist) {
  double h = 0.0;
  for (double p : dist)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

double mutual_information(const DiscreteJoint& joint) {
  const auto ps = joint.marginal_s();
  const auto po = joint.marginal_o();
  double mi = 0.0;
  for (std::size_t s = 0; s < joint.num_s(); ++s)
    for (std::size_t o = 0; o < joint.num_o(); ++o)
      mi += xlogy_ratio(joint(s, o), joint(s, o), ps[s] * po[o]);
  // Exact arithmetic gives mi >= 0; clamp rounding noise on independent tables.
  return std::max(mi, 0.0);
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0) throw std::invalid_argument("kl_divergence: q has no mass on support of p");
    kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return kl;
}

LowerBoundResult prop1_gap(const DiscreteJoint& joint, const ConditionalModel& q) {
  if (q.table().rows() != joint.num_s() || q.table().cols() != joint.num_o()) {
    throw std::invalid_argument("prop1_gap: q must have shape [|S|, |O|]");
  }
  double expected_log_q = 0.0;
  for (std::size_t s = 0; s < joint.num_s(); ++s) {
    for (std::size_t o = 0; o < joint.num_o(); ++o) {
      const double p = joint(s, o);
      if (p == 0.0) continue;
      if (q(s, o) <= 0.0) {
        throw std::invalid_argument("prop1_gap: q(o|s) = 0 where p(s,o) > 0; bound is -inf");
      }
      expected_log_q += p * std::log(q(s, o));
    }
  }
  return {expected_log_q + entropy(joint.marginal_o()), mutual_information(joint)};
}

UpperBoundResult prop2_gap(const ConditionalJoint& cj, const ConditionalModel& q) {
  const auto& joints = cj.joints();
  if (q.table().rows() != cj.num_contexts() || q.table().cols() != joints.front().num_s()) {
    throw std::invalid_argument("prop2_gap: q must have shape [contexts, |S|]");
  }
  double upper = 0.0;
  double cond_mi = 0.0;
  for (std::size_t k = 0; k < cj.num_contexts(); ++k) {
    const auto& pk = joints[k];
    std::vector<double> qk(pk.num_s());
    for (std::size_t s = 0; s < pk.num_s(); ++s) qk[s] = q(k, s);
    const auto po = pk.marginal_o();
    double expected_kl = 0.0;
    for (std::size_t o = 0; o < pk.num_o(); ++o) {
      if (po[o] == 0.0) continue;
      std::vector<double> post(pk.num_s());
      for (std::size_t s = 0; s < pk.num_s(); ++s) post[s] = pk(s, o) / po[o];
      try {
        expected_kl += po[o] * kl_divergence(post, qk);
      } catch (const std::invalid_argument&) {
        throw std::invalid_argument("prop2_gap: q_k(s) = 0 on the support of p_k(s|o)");
      }
    }
    upper += cj.weights()[k] * expected_kl;
    cond_mi += cj.weights()[k] * mutual_information(pk);
  }
  return {upper, cond_mi};
}

InfoNceResult infonce_bound_check(const DiscreteJoint& joint, int n_samples, int trials,
                                  std::mt19937_64& rng) {
  if (n_samples < 2) throw std::invalid_argument("infonce_bound_check: N must be >= 2");
  if (trials < 2) throw std::invalid_argument("infonce_bound_check: need >= 2 trials");
  const auto ps = joint.marginal_s();
  const auto po = joint.marginal_o();
  std::discrete_distribution<std::size_t> pair_dist(joint.table().data().begin(),
                                                    joint.table().data().end());
  std::discrete_distribution<std::size_t> o_dist(po.begin(), po.end());
  const auto ratio = [&](std::size_t s, std::size_t o) {
    return joint(s, o) / (ps[s] * po[o]);
  };

  double mean = 0.0;
  double m2 = 0.0;
  for (int i = 0; i < trials; ++i) {
    const std::size_t idx = pair_dist(rng);
    const std::size_t s = idx / joint.num_o();
    const std::size_t o = idx % joint.num_o();
    const double positive = ratio(s, o);
    double denom = positive;
    for (int j = 1; j < n_samples; ++j) denom += ratio(s, o_dist(rng));
    const double loss = -(std::log(positive) - std::log(denom));
    const double delta = loss - mean;
    mean += delta / (i + 1);
    m2 += delta * (loss - mean);
  }
  const double variance = m2 / (trials - 1);
  return {std::log(static_cast<double>(n_samples)) - mean, std::sqrt(variance / trials),
          mutual_information(joint)};
}

DiscreteJoint random_joint(std::size_t num_s, std::size_t num_o, std::mt19937_64& rng,
                           double sparsity) {
  std::exponential_distribution<double> gamma1(1.0);
  std::bernoulli_distribution drop(sparsity);
  std::vector<double> v(num_s * num_o);
  double total = 0.0;
  for (double& x : v) {
    x = drop(rng) ? 0.0 : gamma1(rng);
    total += x;
  }
  if (total == 0.0) v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)] = 1.0;
  return DiscreteJoint(Table(num_s, num_o, normalized(std::move(v))));
}

ConditionalModel random_conditional(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::exponential_distribution<double> gamma1(1.0);
  Table t(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> row(cols);
    for (double& x : row) x = gamma1(rng) + 1e-3;
    row = normalized(std::move(row));
    for (std::size_t c = 0; c < cols; ++c) t(r, c) = row[c];
  }
  return ConditionalModel(std::move(t));
}

ConditionalJoint random_conditional_joint(std::size_t contexts, std::size_t num_s,
                                          std::size_t num_o, std::mt19937_64& rng) {
  std::exponential_distribution<double> gamma1(1.0);
  std::vector<double> w(contexts);
  for (double& x : w) x = gamma1(rng) + 1e-3;
  std::vector<DiscreteJoint> joints;
  joints.reserve(contexts);
  for (std::size_t k = 0; k < contexts; ++k) joints.push_back(random_joint(num_s, num_o, rng, 0.2));
  return ConditionalJoint(normalized(std::move(w)), std::move(joints));
}

ConditionalModel posterior_o_given_s(const DiscreteJoint& joint) {
  const auto ps = joint.marginal_s();
  Table t(joint.num_s(), joint.num_o());
  for (std::size_t s = 0; s < joint.num_s(); ++s)
    for (std::size_t o = 0; o < joint.num_o(); ++o)
      t(s, o) = ps[s] > 0.0 ? joint(s, o) / ps[s] : 1.0 / static_cast<double>(joint.num_o());
  return ConditionalModel(std::move(t));
}

ConditionalModel context_marginals(const ConditionalJoint& cj) {
  const std::size_t num_s = cj.joints().front().num_s();
  Table t(cj.num_contexts(), num_s);
  for (std::size_t k = 0; k < cj.num_contexts(); ++k) {
    const auto m = cj.joints()[k].marginal_s();
    for (std::size_t s = 0; s < num_s; ++s) t(k, s) = m[s];
  }
  return ConditionalModel(std::move(t));
}

BoundsReport run_bound_suites(const BoundsOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> size_dist(1, options.max_support);
  std::uniform_int_distribution<std::size_t> ctx_dist(1, 4);
  std::uniform_real_distribution<double> sparsity_dist(0.0, 0.5);

  BoundsReport report;
  report.prop1.name = "prop1_lower_bound";
  report.prop2.name = "prop2_upper_bound";
  report.infonce.name = "infonce_lower_bound";

  for (int i = 0; i < options.trials; ++i) {
    const auto joint = random_joint(size_dist(rng), size_dist(rng), rng, sparsity_dist(rng));
    const auto q = random_conditional(joint.num_s(), joint.num_o(), rng);
    const auto r = prop1_gap(joint, q);
    const double excess = r.lower_bound - r.mi;
    if (excess > options.tolerance) {
      ++report.prop1.violations;
      report.prop1.max_violation = std::max(report.prop1.max_violation, excess);
    }
    const auto exact = prop1_gap(joint, posterior_o_given_s(joint));
    report.prop1.max_equality_gap =
        std::max(report.prop1.max_equality_gap, std::abs(exact.mi - exact.lower_bound));
    ++report.prop1.instances;
  }

  for (int i = 0; i < options.trials; ++i) {
    const auto cj = random_conditional_joint(ctx_dist(rng), size_dist(rng), size_dist(rng), rng);
    const auto q = random_conditional(cj.num_contexts(), cj.joints().front().num_s(), rng);
    const auto r = prop2_gap(cj, q);
    const double excess = r.cond_mi - r.upper_bound;
    if (excess > options.tolerance) {
      ++report.prop2.violations;
      report.prop2.max_violation = std::max(report.prop2.max_violation, excess);
    }
    const auto exact = prop2_gap(cj, context_marginals(cj));
    report.prop2.max_equality_gap =
        std::max(report.prop2.max_equality_gap, std::abs(exact.upper_bound - exact.cond_mi));
    ++report.prop2.instances;
  }

  std::uniform_int_distribution<std::size_t> nce_size(2, options.max_support);
  for (int i = 0; i < options.infonce_joints; ++i) {
    const auto joint = random_joint(nce_size(rng), nce_size(rng), rng, sparsity_dist(rng));
    const auto r =
        infonce_bound_check(joint, options.infonce_negatives, options.infonce_trials, rng);
    const double excess = r.mean_bound - (r.mi + 3.0 * r.std_error + options.tolerance);
    if (excess > 0.0) {
      ++report.infonce.violations;
      report.infonce.max_violation = std::max(report.infonce.max_violation, excess);
    }
    ++report.infonce.instances;
  }
  return report;
}

}  // namespace minco::info
