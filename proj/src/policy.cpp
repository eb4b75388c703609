#include "collab/policy.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "collab/errors.hpp"

namespace collab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kHeadGain = 0.01;

void append_shapes(std::vector<std::pair<std::string, std::array<int, 2>>>& out,
                   const std::string& prefix, const Mlp& m) {
  for (int l = 0; l < m.layer_count(); ++l) {
    const int in = m.widths()[l];
    const int o = m.widths()[l + 1];
    out.push_back({prefix + "." + std::to_string(l) + ".weight", {o, in}});
    out.push_back({prefix + "." + std::to_string(l) + ".bias", {o, 1}});
  }
}

MatrixXd coalition_matrix(const std::vector<Coalition>& cs) {
  MatrixXd m = MatrixXd::Zero(kNumAgents, static_cast<Eigen::Index>(cs.size()));
  for (std::size_t k = 0; k < cs.size(); ++k) {
    for (int a = 0; a < kNumAgents; ++a) m(a, static_cast<Eigen::Index>(k)) = cs[k].contains(a) ? 1.0 : 0.0;
  }
  return m;
}

PayoffDistribution payoff_distribution(const MatrixXd& raw, Eigen::Index col, Coalition c) {
  PayoffDistribution d;
  d.coalition = c;
  for (int a = 0; a < kNumAgents; ++a) {
    d.alpha[a] = c.contains(a) ? softplus(raw(a, col)) + kDirichletOffset : kDirichletOffset;
  }
  return d;
}

}  // namespace

Eigen::VectorXd encode_observation(const BargainState& s, int max_rounds) {
  VectorXd obs(kObsDim);
  int k = 0;
  for (const Location& loc : s.instance.deliveries) {
    obs[k++] = loc.x;
    obs[k++] = loc.y;
    obs[k++] = loc.owner;
    obs[k++] = loc.is_depot ? 1.0 : 0.0;
  }
  for (double v : s.coalition) obs[k++] = v;
  for (double v : s.payoff) obs[k++] = v;
  for (double v : s.responses) obs[k++] = v;
  obs[k++] = static_cast<double>(s.round) / max_rounds;
  for (int a = 0; a < kNumAgents; ++a) obs[k++] = a == s.proposer ? 1.0 : 0.0;
  obs[k++] = s.phase == Phase::Proposing ? 1.0 : 0.0;
  return obs;
}

Eigen::VectorXd encode_coalition_query(const Instance& instance, Coalition coalition) {
  VectorXd q(kExtractorInputDim);
  int k = 0;
  for (const Location& loc : instance.deliveries) {
    q[k++] = loc.x;
    q[k++] = loc.y;
    q[k++] = loc.owner;
    q[k++] = loc.is_depot ? 1.0 : 0.0;
  }
  for (int a = 0; a < kNumAgents; ++a) q[k++] = coalition.contains(a) ? 1.0 : 0.0;
  return q;
}

// ---------------------------------------------------------------- regressor

ValueRegressor::ValueRegressor(NetworkShape shape, RngStream& rng)
    : shape_(shape),
      extractor_({kExtractorInputDim, shape.hidden, shape.hidden}, Activation::Tanh, Activation::Tanh),
      head_({shape.hidden, 1}, Activation::Tanh, Activation::Identity) {
  params_ = VectorXd::Zero(static_cast<Eigen::Index>(extractor_.parameter_count() + head_.parameter_count()));
  extractor_.initialize(std::span<double>(params_.data(), extractor_.parameter_count()), rng);
  head_.initialize(std::span<double>(params_.data() + extractor_.parameter_count(), head_.parameter_count()),
                   rng);
}

MatrixXd ValueRegressor::predict(const MatrixXd& inputs) const {
  const std::span<const double> p(params_.data(), static_cast<std::size_t>(params_.size()));
  const MatrixXd emb = extractor_.forward(p.first(extractor_.parameter_count()), inputs);
  return head_.forward(p.subspan(extractor_.parameter_count()), emb);
}

double ValueRegressor::loss_and_gradient(const MatrixXd& inputs, const VectorXd& targets,
                                         VectorXd& grad) const {
  const std::span<const double> p(params_.data(), static_cast<std::size_t>(params_.size()));
  const std::span<double> g(grad.data(), static_cast<std::size_t>(grad.size()));
  const std::size_t ne = extractor_.parameter_count();
  Mlp::Cache ce, ch;
  const MatrixXd emb = extractor_.forward(p.first(ne), inputs, &ce);
  const MatrixXd pred = head_.forward(p.subspan(ne), emb, &ch);
  const double n = static_cast<double>(inputs.cols());
  const Eigen::RowVectorXd err = pred.row(0) - targets.transpose();
  const MatrixXd dpred = 2.0 * err / n;
  const MatrixXd demb = head_.backward(p.subspan(ne), ch, dpred, g.subspan(ne));
  extractor_.backward(p.first(ne), ce, demb, g.first(ne));
  return err.squaredNorm() / n;
}

std::vector<std::pair<std::string, std::array<int, 2>>> ValueRegressor::tensor_shapes() const {
  std::vector<std::pair<std::string, std::array<int, 2>>> out;
  append_shapes(out, "regressor.extractor", extractor_);
  append_shapes(out, "regressor.head", head_);
  return out;
}

// -------------------------------------------------------------------- actor

Actor::Actor(NetworkShape shape, RngStream& rng)
    : shape_(shape),
      extractor_({kExtractorInputDim, shape.hidden, shape.hidden}, Activation::Tanh, Activation::Tanh),
      coalition_head_({shape.hidden, kNumAgents}, Activation::Tanh),
      trunk_({shape.hidden + kAuxDim + kNumAgents, shape.trunk_hidden}, Activation::Tanh, Activation::Tanh),
      proposal_head_({shape.trunk_hidden, kNumAgents}, Activation::Tanh),
      response_head_({shape.trunk_hidden, 1}, Activation::Tanh) {
  off_extractor_ = 0;
  off_coalition_ = off_extractor_ + extractor_.parameter_count();
  off_trunk_ = off_coalition_ + coalition_head_.parameter_count();
  off_proposal_ = off_trunk_ + trunk_.parameter_count();
  off_response_ = off_proposal_ + proposal_head_.parameter_count();
  params_ = VectorXd::Zero(static_cast<Eigen::Index>(off_response_ + response_head_.parameter_count()));
  auto span_of = [&](std::size_t off, const Mlp& m) {
    return std::span<double>(params_.data() + off, m.parameter_count());
  };
  extractor_.initialize(span_of(off_extractor_, extractor_), rng);
  coalition_head_.initialize(span_of(off_coalition_, coalition_head_), rng, kHeadGain);
  trunk_.initialize(span_of(off_trunk_, trunk_), rng);
  proposal_head_.initialize(span_of(off_proposal_, proposal_head_), rng, kHeadGain);
  response_head_.initialize(span_of(off_response_, response_head_), rng, kHeadGain);
}

void Actor::load_extractor(std::span<const double> p) {
  if (p.size() != extractor_.parameter_count()) {
    throw ValidationError("pre-trained extractor has " + std::to_string(p.size()) +
                          " parameters, actor expects " + std::to_string(extractor_.parameter_count()));
  }
  std::copy(p.begin(), p.end(), params_.data() + off_extractor_);
}

MatrixXd Actor::trunk_input(const MatrixXd& obs, const MatrixXd& embedding,
                            const MatrixXd& chosen) const {
  MatrixXd in(embedding.rows() + kAuxDim + kNumAgents, obs.cols());
  in.topRows(embedding.rows()) = embedding;
  in.middleRows(embedding.rows(), kAuxDim) = obs.bottomRows(kAuxDim);
  in.bottomRows(kNumAgents) = chosen;
  return in;
}

ActorHeads Actor::forward(const VectorXd& obs, Coalition chosen) const {
  const MatrixXd o = obs;
  const MatrixXd emb = extractor_.forward(block(off_extractor_, extractor_), o.topRows(kExtractorInputDim));
  const MatrixXd logits = coalition_head_.forward(block(off_coalition_, coalition_head_), emb);
  const MatrixXd h = trunk_.forward(block(off_trunk_, trunk_),
                                    trunk_input(o, emb, coalition_matrix({chosen})));
  const MatrixXd raw = proposal_head_.forward(block(off_proposal_, proposal_head_), h);
  const MatrixXd resp = response_head_.forward(block(off_response_, response_head_), h);
  ActorHeads out;
  const PayoffDistribution d = payoff_distribution(raw, 0, chosen);
  for (int a = 0; a < kNumAgents; ++a) {
    out.coalition_logit[a] = logits(a, 0);
    out.coalition_prob[a] = sigmoid(logits(a, 0));
  }
  out.alpha = d.alpha;
  out.accept_logit = resp(0, 0);
  out.accept_prob = sigmoid(resp(0, 0));
  return out;
}

void Actor::evaluate(const ActorBatch& batch, VectorXd& log_prob, VectorXd& entropy, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  const MatrixXd emb = extractor_.forward(block(off_extractor_, extractor_),
                                          batch.obs.topRows(kExtractorInputDim), &c.extractor);
  c.coalition_logits = coalition_head_.forward(block(off_coalition_, coalition_head_), emb, &c.coalition);
  const MatrixXd h = trunk_.forward(block(off_trunk_, trunk_),
                                    trunk_input(batch.obs, emb, coalition_matrix(batch.coalition)), &c.trunk);
  c.proposal_raw = proposal_head_.forward(block(off_proposal_, proposal_head_), h, &c.proposal);
  c.response_logit = response_head_.forward(block(off_response_, response_head_), h, &c.response);

  const int n = batch.size();
  log_prob.resize(n);
  entropy.resize(n);
  for (int k = 0; k < n; ++k) {
    if (batch.kind[k] == ActionKind::Proposal) {
      double lp = 0.0;
      double ent = 0.0;
      for (int a = 0; a < kNumAgents; ++a) {
        if (a == batch.self) continue;  // the proposer's own bit is forced on
        lp += bernoulli::log_prob(c.coalition_logits(a, k), batch.coalition[k].contains(a));
        ent += bernoulli::entropy(c.coalition_logits(a, k));
      }
      const PayoffDistribution d = payoff_distribution(c.proposal_raw, k, batch.coalition[k]);
      log_prob[k] = lp + d.log_prob(batch.payoff[k]);
      entropy[k] = ent + d.entropy();
    } else {
      log_prob[k] = bernoulli::log_prob(c.response_logit(0, k), batch.accept[k]);
      entropy[k] = bernoulli::entropy(c.response_logit(0, k));
    }
  }
}

void Actor::backward(const ActorBatch& batch, const Cache& c, const VectorXd& w_logp,
                     const VectorXd& w_ent, VectorXd& grad) const {
  const int n = batch.size();
  MatrixXd d_coal = MatrixXd::Zero(kNumAgents, n);
  MatrixXd d_prop = MatrixXd::Zero(kNumAgents, n);
  MatrixXd d_resp = MatrixXd::Zero(1, n);
  for (int k = 0; k < n; ++k) {
    if (batch.kind[k] == ActionKind::Proposal) {
      for (int a = 0; a < kNumAgents; ++a) {
        if (a == batch.self) continue;
        const double z = c.coalition_logits(a, k);
        d_coal(a, k) = w_logp[k] * bernoulli::dlog_prob_dlogit(z, batch.coalition[k].contains(a)) +
                       w_ent[k] * bernoulli::dentropy_dlogit(z);
      }
      const PayoffDistribution d = payoff_distribution(c.proposal_raw, k, batch.coalition[k]);
      const auto glp = d.grad_log_prob(batch.payoff[k]);
      const auto gent = d.grad_entropy();
      for (int a = 0; a < kNumAgents; ++a) {
        if (!batch.coalition[k].contains(a)) continue;
        // d alpha / d raw = sigmoid(raw) for the softplus link
        d_prop(a, k) = (w_logp[k] * glp[a] + w_ent[k] * gent[a]) * sigmoid(c.proposal_raw(a, k));
      }
    } else {
      const double z = c.response_logit(0, k);
      d_resp(0, k) = w_logp[k] * bernoulli::dlog_prob_dlogit(z, batch.accept[k]) +
                     w_ent[k] * bernoulli::dentropy_dlogit(z);
    }
  }

  MatrixXd d_h = proposal_head_.backward(block(off_proposal_, proposal_head_), c.proposal, d_prop,
                                         grad_block(grad, off_proposal_, proposal_head_));
  d_h += response_head_.backward(block(off_response_, response_head_), c.response, d_resp,
                                 grad_block(grad, off_response_, response_head_));
  const MatrixXd d_trunk_in =
      trunk_.backward(block(off_trunk_, trunk_), c.trunk, d_h, grad_block(grad, off_trunk_, trunk_));
  MatrixXd d_emb = d_trunk_in.topRows(shape_.hidden);
  d_emb += coalition_head_.backward(block(off_coalition_, coalition_head_), c.coalition, d_coal,
                                    grad_block(grad, off_coalition_, coalition_head_));
  extractor_.backward(block(off_extractor_, extractor_), c.extractor, d_emb,
                      grad_block(grad, off_extractor_, extractor_));
}

std::vector<std::pair<std::string, std::array<int, 2>>> Actor::tensor_shapes() const {
  std::vector<std::pair<std::string, std::array<int, 2>>> out;
  append_shapes(out, "actor.extractor", extractor_);
  append_shapes(out, "actor.coalition", coalition_head_);
  append_shapes(out, "actor.trunk", trunk_);
  append_shapes(out, "actor.proposal", proposal_head_);
  append_shapes(out, "actor.response", response_head_);
  return out;
}

// ------------------------------------------------------------------- critic

Critic::Critic(NetworkShape shape, RngStream& rng)
    : shape_(shape),
      extractor_({kExtractorInputDim, shape.hidden, shape.hidden}, Activation::Tanh, Activation::Tanh),
      v_trunk_({shape.hidden + kAuxDim, shape.trunk_hidden, 1}, Activation::Tanh),
      q_trunk_({shape.hidden + kAuxDim, shape.trunk_hidden, 2}, Activation::Tanh) {
  off_v_extractor_ = 0;
  off_v_trunk_ = off_v_extractor_ + extractor_.parameter_count();
  off_q_extractor_ = off_v_trunk_ + v_trunk_.parameter_count();
  off_q_trunk_ = off_q_extractor_ + extractor_.parameter_count();
  params_ = VectorXd::Zero(static_cast<Eigen::Index>(off_q_trunk_ + q_trunk_.parameter_count()));
  auto span_of = [&](std::size_t off, const Mlp& m) {
    return std::span<double>(params_.data() + off, m.parameter_count());
  };
  extractor_.initialize(span_of(off_v_extractor_, extractor_), rng);
  v_trunk_.initialize(span_of(off_v_trunk_, v_trunk_), rng);
  extractor_.initialize(span_of(off_q_extractor_, extractor_), rng);
  q_trunk_.initialize(span_of(off_q_trunk_, q_trunk_), rng);
}

void Critic::load_extractor(std::span<const double> p) {
  if (p.size() != extractor_.parameter_count()) {
    throw ValidationError("pre-trained extractor does not match the critic's shape");
  }
  std::copy(p.begin(), p.end(), params_.data() + off_v_extractor_);
  std::copy(p.begin(), p.end(), params_.data() + off_q_extractor_);
}

MatrixXd Critic::run(std::size_t ex_off, std::size_t tr_off, const Mlp& trunk, const MatrixXd& obs,
                     Cache* cache) const {
  const std::span<const double> ex(params_.data() + ex_off, extractor_.parameter_count());
  const std::span<const double> tr(params_.data() + tr_off, trunk.parameter_count());
  const MatrixXd emb = extractor_.forward(ex, obs.topRows(kExtractorInputDim), cache ? &cache->extractor : nullptr);
  MatrixXd in(emb.rows() + kAuxDim, obs.cols());
  in.topRows(emb.rows()) = emb;
  in.bottomRows(kAuxDim) = obs.bottomRows(kAuxDim);
  return trunk.forward(tr, in, cache ? &cache->trunk : nullptr);
}

void Critic::back(std::size_t ex_off, std::size_t tr_off, const Mlp& trunk, const Cache& cache,
                  const MatrixXd& grad_out, VectorXd& grad) const {
  const std::span<const double> ex(params_.data() + ex_off, extractor_.parameter_count());
  const std::span<const double> tr(params_.data() + tr_off, trunk.parameter_count());
  const MatrixXd d_in =
      trunk.backward(tr, cache.trunk, grad_out, std::span<double>(grad.data() + tr_off, trunk.parameter_count()));
  extractor_.backward(ex, cache.extractor, d_in.topRows(shape_.hidden),
                      std::span<double>(grad.data() + ex_off, extractor_.parameter_count()));
}

double Critic::value(const VectorXd& obs) const { return values(MatrixXd(obs))[0]; }

std::array<double, 2> Critic::action_values(const VectorXd& obs) const {
  const MatrixXd q = action_values(MatrixXd(obs));
  return {q(0, 0), q(1, 0)};
}

VectorXd Critic::values(const MatrixXd& obs) const {
  return run(off_v_extractor_, off_v_trunk_, v_trunk_, obs, nullptr).row(0).transpose();
}

MatrixXd Critic::action_values(const MatrixXd& obs) const {
  return run(off_q_extractor_, off_q_trunk_, q_trunk_, obs, nullptr);
}

std::array<double, 2> Critic::loss_and_gradient(const MatrixXd& v_obs, const VectorXd& v_targets,
                                                const MatrixXd& q_obs, const std::vector<bool>& q_accept,
                                                const VectorXd& q_targets, VectorXd& grad) const {
  std::array<double, 2> loss{0.0, 0.0};
  if (v_obs.cols() > 0) {
    Cache c;
    const MatrixXd pred = run(off_v_extractor_, off_v_trunk_, v_trunk_, v_obs, &c);
    const double n = static_cast<double>(v_obs.cols());
    const Eigen::RowVectorXd err = pred.row(0) - v_targets.transpose();
    loss[0] = err.squaredNorm() / n;
    back(off_v_extractor_, off_v_trunk_, v_trunk_, c, MatrixXd(2.0 * err / n), grad);
  }
  if (q_obs.cols() > 0) {
    Cache c;
    const MatrixXd pred = run(off_q_extractor_, off_q_trunk_, q_trunk_, q_obs, &c);
    const double n = static_cast<double>(q_obs.cols());
    MatrixXd d = MatrixXd::Zero(2, q_obs.cols());
    double sq = 0.0;
    for (Eigen::Index k = 0; k < q_obs.cols(); ++k) {
      const int row = q_accept[static_cast<std::size_t>(k)] ? kAccept : kReject;
      const double err = pred(row, k) - q_targets[k];
      sq += err * err;
      d(row, k) = 2.0 * err / n;
    }
    loss[1] = sq / n;
    back(off_q_extractor_, off_q_trunk_, q_trunk_, c, d, grad);
  }
  return loss;
}

std::vector<std::pair<std::string, std::array<int, 2>>> Critic::tensor_shapes() const {
  std::vector<std::pair<std::string, std::array<int, 2>>> out;
  append_shapes(out, "critic.v_extractor", extractor_);
  append_shapes(out, "critic.v_trunk", v_trunk_);
  append_shapes(out, "critic.q_extractor", extractor_);
  append_shapes(out, "critic.q_trunk", q_trunk_);
  return out;
}

double counterfactual_baseline(double accept_prob, const std::array<double, 2>& q) {
  return accept_prob * q[Critic::kAccept] + (1.0 - accept_prob) * q[Critic::kReject];
}

// --------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'C', 'O', 'L', 'L', 'A', 'B', 'C', 'K'};
constexpr char kPretrainMagic[8] = {'C', 'O', 'L', 'L', 'A', 'B', 'P', 'T'};

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_uint(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw ValidationError("checkpoint is truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}
std::uint32_t get_u32(std::istream& is) { return static_cast<std::uint32_t>(get_uint(is, 4)); }
std::uint64_t get_u64(std::istream& is) { return get_uint(is, 8); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

void put_tensors(std::ostream& os, const std::vector<std::pair<std::string, std::array<int, 2>>>& shapes,
                 const VectorXd& params) {
  put_u32(os, static_cast<std::uint32_t>(shapes.size()));
  Eigen::Index k = 0;
  for (const auto& [name, dims] : shapes) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(dims[0]));
    put_u32(os, static_cast<std::uint32_t>(dims[1]));
    for (long i = 0; i < static_cast<long>(dims[0]) * dims[1]; ++i) put_f64(os, params[k++]);
  }
}

void get_tensors(std::istream& is, const std::vector<std::pair<std::string, std::array<int, 2>>>& shapes,
                 VectorXd& params) {
  const std::uint32_t count = get_u32(is);
  if (count != shapes.size()) {
    throw ValidationError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(shapes.size()));
  }
  Eigen::Index k = 0;
  for (const auto& [name, dims] : shapes) {
    const std::uint32_t len = get_u32(is);
    std::string stored(len, '\0');
    is.read(stored.data(), len);
    const std::uint32_t rows = get_u32(is);
    const std::uint32_t cols = get_u32(is);
    if (stored != name || static_cast<int>(rows) != dims[0] || static_cast<int>(cols) != dims[1]) {
      throw ValidationError("checkpoint tensor " + stored + " [" + std::to_string(rows) + "x" +
                            std::to_string(cols) + "] does not match " + name + " [" +
                            std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "]");
    }
    for (long i = 0; i < static_cast<long>(rows) * cols; ++i) params[k++] = get_f64(is);
  }
}

void put_vector(std::ostream& os, const VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(os, v[i]);
}
VectorXd get_vector(std::istream& is, int n) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = get_f64(is);
  return v;
}

void put_normalizer(std::ostream& os, const RunningNormalizer& n) {
  put_u32(os, static_cast<std::uint32_t>(n.dim()));
  put_vector(os, n.count());
  put_vector(os, n.mean());
  put_vector(os, n.m2());
}

void get_normalizer(std::istream& is, RunningNormalizer& n) {
  const int dim = static_cast<int>(get_u32(is));
  if (dim != n.dim()) throw ValidationError("checkpoint normalizer dimension mismatch");
  VectorXd count = get_vector(is, dim);
  VectorXd mean = get_vector(is, dim);
  VectorXd m2 = get_vector(is, dim);
  n.set_state(std::move(count), std::move(mean), std::move(m2));
}

std::uint64_t read_header(std::istream& is, NetworkShape& shape, std::uint32_t& agents) {
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kMagic)) throw ValidationError("not a collab checkpoint");
  const std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t step = get_u64(is);
  shape.hidden = static_cast<int>(get_u32(is));
  shape.trunk_hidden = static_cast<int>(get_u32(is));
  agents = get_u32(is);
  return step;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<AgentModel>& models,
                     std::uint64_t training_step) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write checkpoint " + path.string());
  os.write(kMagic, 8);
  put_u32(os, kCheckpointVersion);
  put_u64(os, training_step);
  const NetworkShape shape = models.empty() ? NetworkShape{} : models.front().actor.shape();
  put_u32(os, static_cast<std::uint32_t>(shape.hidden));
  put_u32(os, static_cast<std::uint32_t>(shape.trunk_hidden));
  put_u32(os, static_cast<std::uint32_t>(models.size()));
  for (const AgentModel& m : models) {
    put_tensors(os, m.actor.tensor_shapes(), m.actor.params());
    put_tensors(os, m.critic.tensor_shapes(), m.critic.params());
    put_normalizer(os, m.normalizer);
  }
}

std::uint64_t load_checkpoint(const std::filesystem::path& path, std::vector<AgentModel>& models) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  NetworkShape shape;
  std::uint32_t agents = 0;
  const std::uint64_t step = read_header(is, shape, agents);
  if (agents != models.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(agents) + " agents, expected " +
                          std::to_string(models.size()));
  }
  for (AgentModel& m : models) {
    if (!(m.actor.shape() == shape)) throw ValidationError("checkpoint network shape mismatch");
    get_tensors(is, m.actor.tensor_shapes(), m.actor.params());
    get_tensors(is, m.critic.tensor_shapes(), m.critic.params());
    get_normalizer(is, m.normalizer);
  }
  return step;
}

NetworkShape checkpoint_shape(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  NetworkShape shape;
  std::uint32_t agents = 0;
  read_header(is, shape, agents);
  return shape;
}

void save_pretrained(const std::filesystem::path& path, const PretrainedModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write pre-trained model " + path.string());
  os.write(kPretrainMagic, 8);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(model.regressor.shape().hidden));
  put_u32(os, static_cast<std::uint32_t>(model.regressor.shape().trunk_hidden));
  put_f64(os, model.test_mse);
  put_f64(os, model.baseline_mse);
  put_tensors(os, model.regressor.tensor_shapes(), model.regressor.params());
  put_normalizer(os, model.normalizer);
}

PretrainedModel load_pretrained(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open pre-trained model " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kPretrainMagic)) {
    throw ValidationError(path.string() + " is not a pre-trained model file");
  }
  const std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported pre-trained model version " + std::to_string(version));
  }
  NetworkShape shape;
  shape.hidden = static_cast<int>(get_u32(is));
  shape.trunk_hidden = static_cast<int>(get_u32(is));
  RngStream unused(0);
  PretrainedModel m{ValueRegressor(shape, unused), RunningNormalizer(kExtractorInputDim), 0.0, 0.0};
  m.test_mse = get_f64(is);
  m.baseline_mse = get_f64(is);
  get_tensors(is, m.regressor.tensor_shapes(), m.regressor.params());
  get_normalizer(is, m.normalizer);
  return m;
}

}  // namespace collab
