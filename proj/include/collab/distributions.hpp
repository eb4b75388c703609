#pragma once

#include <array>
#include <span>

#include "collab/coalition.hpp"
#include "collab/rng.hpp"

namespace collab {

// Added to every concentration so the Dirichlet stays unimodal; masked
// (non-member) components are pinned to exactly this value.
inline constexpr double kDirichletOffset = 1.001;

double sigmoid(double z);
double softplus(double z);

/// Bernoulli parameterised by a logit.
namespace bernoulli {
double log_prob(double logit, bool outcome);
double entropy(double logit);
double dlog_prob_dlogit(double logit, bool outcome);
double dentropy_dlogit(double logit);
}  // namespace bernoulli

/// Dirichlet over K = alpha.size() components. Densities are with respect to
/// the Lebesgue measure on the first K-1 coordinates of the simplex.
namespace dirichlet {
double log_density(std::span<const double> alpha, std::span<const double> y);
double entropy(std::span<const double> alpha);
// d log p / d alpha_j = psi(alpha_0) - psi(alpha_j) + log y_j
void grad_log_density(std::span<const double> alpha, std::span<const double> y,
                      std::span<double> out);
// d H / d alpha_j = (alpha_0 - K) psi'(alpha_0) - (alpha_j - 1) psi'(alpha_j)
void grad_entropy(std::span<const double> alpha, std::span<double> out);
// (alpha_j - 1) / (alpha_0 - K); requires every alpha_j > 1
void mode(std::span<const double> alpha, std::span<double> out);
void sample(std::span<const double> alpha, RngStream& rng, std::span<double> out);
}  // namespace dirichlet

/// The proposal head's distribution over payoffs once the coalition is
/// fixed: a full 3-component Dirichlet whose non-member concentrations are
/// 1.001. The executed payoff keeps only member components, renormalized;
/// by the aggregation property that vector is Dirichlet(alpha restricted to
/// members), which is what the density and entropy below are taken over.
/// For a singleton coalition the payoff is a point mass (log-prob 0).
struct PayoffDistribution {
  std::array<double, kNumAgents> alpha{};
  Coalition coalition;

  double log_prob(const std::array<double, kNumAgents>& payoff) const;
  double entropy() const;
  std::array<double, kNumAgents> sample(RngStream& rng) const;
  std::array<double, kNumAgents> mode() const;
  // Gradients with respect to all three alphas (zero for non-members).
  std::array<double, kNumAgents> grad_log_prob(const std::array<double, kNumAgents>& payoff) const;
  std::array<double, kNumAgents> grad_entropy() const;
};

}  // namespace collab
