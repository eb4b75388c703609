#include "collab/distributions.hpp"

#include <cmath>
#include <limits>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "collab/errors.hpp"

namespace collab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Smallest member share a sampled payoff may carry; keeps log-densities finite.
constexpr double kMinShare = 1e-12;

double digamma(double x) { return boost::math::digamma(x); }
double trigamma(double x) { return boost::math::trigamma(x); }

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }

namespace bernoulli {

// log sigmoid(z) computed without overflow
static double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

double log_prob(double logit, bool outcome) {
  return outcome ? log_sigmoid(logit) : log_sigmoid(-logit);
}

double entropy(double logit) {
  const double p = sigmoid(logit);
  return -(p * log_sigmoid(logit) + (1.0 - p) * log_sigmoid(-logit));
}

double dlog_prob_dlogit(double logit, bool outcome) { return (outcome ? 1.0 : 0.0) - sigmoid(logit); }

double dentropy_dlogit(double logit) {
  const double p = sigmoid(logit);
  return -logit * p * (1.0 - p);
}

}  // namespace bernoulli

namespace dirichlet {

double log_density(std::span<const double> alpha, std::span<const double> y) {
  double a0 = 0.0;
  double out = 0.0;
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    if (!(y[j] > 0.0)) return kNegInf;
    a0 += alpha[j];
    out += (alpha[j] - 1.0) * std::log(y[j]) - std::lgamma(alpha[j]);
  }
  return out + std::lgamma(a0);
}

double entropy(std::span<const double> alpha) {
  const double k = static_cast<double>(alpha.size());
  double a0 = 0.0;
  double out = 0.0;
  for (double a : alpha) {
    a0 += a;
    out += std::lgamma(a) - (a - 1.0) * digamma(a);
  }
  return out - std::lgamma(a0) + (a0 - k) * digamma(a0);
}

void grad_log_density(std::span<const double> alpha, std::span<const double> y,
                      std::span<double> out) {
  double a0 = 0.0;
  for (double a : alpha) a0 += a;
  const double psi0 = digamma(a0);
  for (std::size_t j = 0; j < alpha.size(); ++j) out[j] = psi0 - digamma(alpha[j]) + std::log(y[j]);
}

void grad_entropy(std::span<const double> alpha, std::span<double> out) {
  const double k = static_cast<double>(alpha.size());
  double a0 = 0.0;
  for (double a : alpha) a0 += a;
  const double t0 = (a0 - k) * trigamma(a0);
  for (std::size_t j = 0; j < alpha.size(); ++j) out[j] = t0 - (alpha[j] - 1.0) * trigamma(alpha[j]);
}

void mode(std::span<const double> alpha, std::span<double> out) {
  const double k = static_cast<double>(alpha.size());
  double a0 = 0.0;
  for (double a : alpha) {
    if (!(a > 1.0)) throw ContractViolation("Dirichlet mode needs every concentration above 1");
    a0 += a;
  }
  for (std::size_t j = 0; j < alpha.size(); ++j) out[j] = (alpha[j] - 1.0) / (a0 - k);
}

void sample(std::span<const double> alpha, RngStream& rng, std::span<double> out) {
  double total = 0.0;
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    out[j] = rng.gamma(alpha[j]);
    total += out[j];
  }
  for (std::size_t j = 0; j < alpha.size(); ++j) out[j] /= total;
}

}  // namespace dirichlet

namespace {

struct MemberView {
  std::array<double, kNumAgents> alpha{};
  std::array<double, kNumAgents> y{};
  std::array<int, kNumAgents> index{};
  int k = 0;
};

MemberView members_of(const PayoffDistribution& d, const std::array<double, kNumAgents>* payoff) {
  MemberView v;
  double total = 0.0;
  for (int a = 0; a < kNumAgents; ++a) {
    if (!d.coalition.contains(a)) continue;
    v.alpha[v.k] = d.alpha[a];
    if (payoff) {
      v.y[v.k] = (*payoff)[a];
      total += (*payoff)[a];
    }
    v.index[v.k] = a;
    ++v.k;
  }
  if (payoff && total > 0.0) {
    for (int j = 0; j < v.k; ++j) v.y[j] /= total;
  }
  return v;
}

}  // namespace

double PayoffDistribution::log_prob(const std::array<double, kNumAgents>& payoff) const {
  const MemberView v = members_of(*this, &payoff);
  if (v.k <= 1) return 0.0;
  const double lp = dirichlet::log_density(std::span(v.alpha.data(), v.k), std::span(v.y.data(), v.k));
  if (!std::isfinite(lp)) {
    throw ContractViolation("payoff lies off the support of the proposal distribution");
  }
  return lp;
}

double PayoffDistribution::entropy() const {
  const MemberView v = members_of(*this, nullptr);
  if (v.k <= 1) return 0.0;
  return dirichlet::entropy(std::span(v.alpha.data(), v.k));
}

std::array<double, kNumAgents> PayoffDistribution::sample(RngStream& rng) const {
  std::array<double, kNumAgents> full{};
  dirichlet::sample(alpha, rng, full);
  std::array<double, kNumAgents> out{};
  double total = 0.0;
  for (int a = 0; a < kNumAgents; ++a) {
    if (!coalition.contains(a)) continue;
    out[a] = std::max(full[a], kMinShare);
    total += out[a];
  }
  for (double& x : out) x /= total;
  return out;
}

std::array<double, kNumAgents> PayoffDistribution::mode() const {
  const MemberView v = members_of(*this, nullptr);
  std::array<double, kNumAgents> out{};
  if (v.k == 1) {
    out[v.index[0]] = 1.0;
    return out;
  }
  std::array<double, kNumAgents> m{};
  dirichlet::mode(std::span(v.alpha.data(), v.k), std::span(m.data(), v.k));
  for (int j = 0; j < v.k; ++j) out[v.index[j]] = m[j];
  return out;
}

std::array<double, kNumAgents> PayoffDistribution::grad_log_prob(
    const std::array<double, kNumAgents>& payoff) const {
  const MemberView v = members_of(*this, &payoff);
  std::array<double, kNumAgents> out{};
  if (v.k <= 1) return out;
  std::array<double, kNumAgents> g{};
  dirichlet::grad_log_density(std::span(v.alpha.data(), v.k), std::span(v.y.data(), v.k),
                              std::span(g.data(), v.k));
  for (int j = 0; j < v.k; ++j) out[v.index[j]] = g[j];
  return out;
}

std::array<double, kNumAgents> PayoffDistribution::grad_entropy() const {
  const MemberView v = members_of(*this, nullptr);
  std::array<double, kNumAgents> out{};
  if (v.k <= 1) return out;
  std::array<double, kNumAgents> g{};
  dirichlet::grad_entropy(std::span(v.alpha.data(), v.k), std::span(g.data(), v.k));
  for (int j = 0; j < v.k; ++j) out[v.index[j]] = g[j];
  return out;
}

}  // namespace collab
