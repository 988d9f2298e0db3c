#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "hmarl/errors.hpp"
#include "hmarl/goals.hpp"
#include "hmarl/matc.hpp"
#include "hmarl/net.hpp"
#include "hmarl/replay.hpp"
#include "hmarl/rng.hpp"

namespace hmarl::agents {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double discounted_return(const std::vector<double>& rewards, double gamma) {
  double acc = 0.0;
  double g = 1.0;
  for (double r : rewards) {
    acc += g * r;
    g *= gamma;
  }
  return acc;
}

// Semi-MDP backup: y = sum_k gamma^k r_k + (1 - done) gamma^tau next_value.
inline double semi_mdp_target(const std::vector<double>& rewards, double gamma,
                              double next_value, bool done) {
  double y = discounted_return(rewards, gamma);
  if (!done)
    y += std::pow(gamma, static_cast<double>(rewards.size())) * next_value;
  return y;
}

// Valid entries occupy the prefix [0, n_valid); ties break to the lowest slot.
inline int argmax_slot(const Eigen::Ref<const VectorXd>& q, int n_valid) {
  int best = 0;
  for (int i = 1; i < n_valid; ++i)
    if (q[i] > q[best]) best = i;
  return best;
}

inline double max_slot(const Eigen::Ref<const VectorXd>& q, int n_valid) {
  return q[argmax_slot(q, n_valid)];
}

inline int eps_greedy(const Eigen::Ref<const VectorXd>& q, int n_valid,
                      double eps, Rng& rng) {
  if (rng.uniform() < eps) return rng.uniform_int(n_valid);
  return argmax_slot(q, n_valid);
}

struct Mlp {
  net::Graph graph;
  net::NodeId in = 0;
  net::NodeId out = 0;
};

inline Mlp build_mlp(int in_w, int h1, int h2, int out_w) {
  Mlp m;
  m.in = m.graph.input(in_w);
  const auto a = m.graph.relu(m.graph.dense(m.in, h1));
  const auto b = m.graph.relu(m.graph.dense(a, h2));
  m.out = m.graph.dense(b, out_w);
  m.graph.mark_output(m.out);
  return m;
}

// Online/target pair sharing one structure, plus the optimizer state.
struct QNet {
  net::Graph online;
  net::Graph target;
  net::AdamState adam;
  long updates = 0;

  QNet(const net::Graph& proto, double lr, Rng& rng)
      : online(proto), target(proto), adam(proto.param_count(), lr) {
    online.init_params(rng);
    net::sync_target(online, target);
  }
  void sync() { net::sync_target(online, target); }
};

inline VectorXd agent_one_hot(int agent) {
  VectorXd v = VectorXd::Zero(matc::kNumAgents);
  v[agent] = 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// Low level: one network serves all agents and goals, specialised by a goal
// index and an agent identifier appended to the intrinsic observation.

struct LowTransition {
  VectorXd obs;       // intrinsic observation at t
  int slot = 0;       // index into the goal's action set
  double reward = 0.0;
  VectorXd next_obs;  // intrinsic observation at t + 1 under the same goal
  int goal = 0;
  int agent = 0;
  bool done = false;  // goal ended after this step
  int n_valid = 1;    // action-set size, for masking
};

class LowLevelPolicy {
 public:
  LowLevelPolicy(matc::Task task, double lr, Rng& rng, int units = 64)
      : gset_(goals::goal_set(task)),
        intr_width_(goals::intrinsic_width(task)),
        in_width_(intr_width_ + static_cast<int>(gset_.size()) + matc::kNumAgents),
        proto_(build_mlp(in_width_, units, units, goals::kMaxActionSet)),
        net_(proto_.graph, lr, rng) {}

  int input_width() const { return in_width_; }
  const std::vector<goals::Goal>& goal_set() const { return gset_; }

  VectorXd assemble(const VectorXd& intrinsic, int goal, int agent) const {
    if (intrinsic.size() != intr_width_)
      throw DimensionError("intrinsic observation width mismatch");
    VectorXd v = VectorXd::Zero(in_width_);
    v.head(intr_width_) = intrinsic;
    v[intr_width_ + goal] = 1.0;
    v[intr_width_ + static_cast<int>(gset_.size()) + agent] = 1.0;
    return v;
  }

  // Returns a slot into the goal's action set, never a raw action.
  int select(const VectorXd& intrinsic, int goal, int agent, double eps,
             Rng& rng) {
    const int n = static_cast<int>(goals::action_set(gset_[goal]).size());
    net_.online.forward({{proto_.in, assemble(intrinsic, goal, agent)}});
    return eps_greedy(net_.online.value(proto_.out).col(0), n, eps, rng);
  }

  double update(const std::vector<const LowTransition*>& batch, double gamma) {
    if (batch.empty()) throw ArgumentError("low-level update: empty batch");
    const int B = static_cast<int>(batch.size());
    MatrixXd x(in_width_, B), xn(in_width_, B);
    for (int b = 0; b < B; ++b) {
      const LowTransition& t = *batch[b];
      x.col(b) = assemble(t.obs, t.goal, t.agent);
      xn.col(b) = assemble(t.next_obs, t.goal, t.agent);
    }
    net_.target.forward({{proto_.in, xn}});
    const MatrixXd& qn = net_.target.value(proto_.out);
    net_.online.forward({{proto_.in, x}});
    const MatrixXd& q = net_.online.value(proto_.out);

    MatrixXd grad = MatrixXd::Zero(goals::kMaxActionSet, B);
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
      const LowTransition& t = *batch[b];
      const double bootstrap =
          t.done ? 0.0 : gamma * max_slot(qn.col(b), t.n_valid);
      const double err = q(t.slot, b) - (t.reward + bootstrap);
      loss += err * err;
      grad(t.slot, b) = 2.0 * err / B;
    }
    const auto pg = net_.online.backward({{proto_.out, grad}});
    net::adam_step(net_.online.parameters(), pg, net_.adam);
    net_.updates += 1;
    return loss / B;
  }

  QNet& qnet() { return net_; }
  const QNet& qnet() const { return net_; }
  net::NodeId in_node() const { return proto_.in; }
  net::NodeId out_node() const { return proto_.out; }

 private:
  std::vector<goals::Goal> gset_;
  int intr_width_;
  int in_width_;
  Mlp proto_;
  QNet net_;
};

// ---------------------------------------------------------------------------
// Independent high level: one shared network over (observation, agent id).

class HighPolicyHil {
 public:
  HighPolicyHil(matc::Task task, double lr, Rng& rng, int units = 64)
      : n_goals_(static_cast<int>(goals::goal_set(task).size())),
        obs_width_(matc::obs_width(task)),
        in_width_(obs_width_ + matc::kNumAgents),
        proto_(build_mlp(in_width_, units, units, n_goals_)),
        net_(proto_.graph, lr, rng) {}

  int n_goals() const { return n_goals_; }

  VectorXd assemble(const VectorXd& obs, int agent) const {
    if (obs.size() != obs_width_)
      throw DimensionError("observation width mismatch");
    VectorXd v = VectorXd::Zero(in_width_);
    v.head(obs_width_) = obs;
    v[obs_width_ + agent] = 1.0;
    return v;
  }

  int select(const VectorXd& obs, int agent, double eps, Rng& rng) {
    net_.online.forward({{proto_.in, assemble(obs, agent)}});
    return eps_greedy(net_.online.value(proto_.out).col(0), n_goals_, eps, rng);
  }

  double update(const std::vector<const replay::HighLevelTransition*>& batch,
                double gamma) {
    return update_views(views_of(batch), gamma);
  }

  // Sub-transitions reuse the same backup with the residual duration.
  double update_subs(const std::vector<const replay::SubTransition*>& batch,
                     double gamma) {
    return update_views(views_of(batch), gamma);
  }

  QNet& qnet() { return net_; }
  const QNet& qnet() const { return net_; }
  net::NodeId in_node() const { return proto_.in; }
  net::NodeId out_node() const { return proto_.out; }

 private:
  struct Sample {
    const VectorXd* obs;
    const VectorXd* next_obs;
    const std::vector<double>* rewards;
    int goal;
    bool done;
    int agent;
  };

  template <typename T>
  static std::vector<Sample> views_of(const std::vector<const T*>& batch) {
    if (batch.empty()) throw ArgumentError("high-level update: empty batch");
    std::vector<Sample> view;
    view.reserve(batch.size());
    for (const T* t : batch)
      view.push_back({&t->obs, &t->next_obs, &t->rewards, t->goal, t->done,
                      t->agent});
    return view;
  }

  double update_views(const std::vector<Sample>& batch, double gamma) {
    const int B = static_cast<int>(batch.size());
    MatrixXd x(in_width_, B), xn(in_width_, B);
    for (int b = 0; b < B; ++b) {
      x.col(b) = assemble(*batch[b].obs, batch[b].agent);
      xn.col(b) = assemble(*batch[b].next_obs, batch[b].agent);
    }
    net_.target.forward({{proto_.in, xn}});
    const MatrixXd& qn = net_.target.value(proto_.out);
    net_.online.forward({{proto_.in, x}});
    const MatrixXd& q = net_.online.value(proto_.out);

    MatrixXd grad = MatrixXd::Zero(n_goals_, B);
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
      const Sample& t = batch[b];
      const double y = semi_mdp_target(*t.rewards, gamma,
                                       max_slot(qn.col(b), n_goals_), t.done);
      const double err = q(t.goal, b) - y;
      loss += err * err;
      grad(t.goal, b) = 2.0 * err / B;
    }
    const auto pg = net_.online.backward({{proto_.out, grad}});
    net::adam_step(net_.online.parameters(), pg, net_.adam);
    net_.updates += 1;
    return loss / B;
  }

  int n_goals_;
  int obs_width_;
  int in_width_;
  Mlp proto_;
  QNet net_;
};

// ---------------------------------------------------------------------------
// Communicating high level: two parameter-shared lanes where each lane's
// first hidden state is averaged into the other lane's second-layer input.

struct CommGraph {
  net::Graph graph;
  std::array<net::NodeId, 2> obs{};
  std::array<net::NodeId, 2> id{};
  std::array<net::NodeId, 2> hidden{};  // first hidden layers
  std::array<net::NodeId, 2> comm{};    // averaged teammate hidden states
  std::array<net::NodeId, 2> q{};
};

inline CommGraph build_comm_graph(int obs_w, int n_goals, int units = 64) {
  CommGraph c;
  net::Graph& g = c.graph;
  for (int i = 0; i < 2; ++i) {
    c.obs[i] = g.input(obs_w);
    c.id[i] = g.input(matc::kNumAgents);
  }
  net::GroupId layer1 = -1, layer2 = -1, head = -1;
  for (int i = 0; i < 2; ++i) {
    const auto in = g.concat({c.obs[i], c.id[i]});
    const auto pre = i == 0 ? g.dense(in, units) : g.dense_shared(in, layer1);
    if (i == 0) layer1 = static_cast<net::GroupId>(g.groups().size()) - 1;
    c.hidden[i] = g.relu(pre);
  }
  for (int i = 0; i < 2; ++i) {
    c.comm[i] = g.mean_of({c.hidden[1 - i]});
    const auto in2 = g.concat({c.hidden[i], c.comm[i]});
    const auto pre2 = i == 0 ? g.dense(in2, units) : g.dense_shared(in2, layer2);
    if (i == 0) layer2 = static_cast<net::GroupId>(g.groups().size()) - 1;
    const auto h2 = g.relu(pre2);
    c.q[i] = i == 0 ? g.dense(h2, n_goals) : g.dense_shared(h2, head);
    if (i == 0) head = static_cast<net::GroupId>(g.groups().size()) - 1;
    g.mark_output(c.q[i]);
  }
  return c;
}

// Single lane with the message as an explicit input. Its dense layers are
// created in the same order and shapes as build_comm_graph's, so parameters
// copy across one to one.
struct ZeroCommGraph {
  net::Graph graph;
  net::NodeId obs = 0;
  net::NodeId id = 0;
  net::NodeId comm = 0;
  net::NodeId q = 0;
};

inline ZeroCommGraph build_zero_comm_graph(int obs_w, int n_goals,
                                           int units = 64) {
  ZeroCommGraph z;
  net::Graph& g = z.graph;
  z.obs = g.input(obs_w);
  z.id = g.input(matc::kNumAgents);
  z.comm = g.input(units);
  const auto h1 = g.relu(g.dense(g.concat({z.obs, z.id}), units));
  const auto h2 = g.relu(g.dense(g.concat({h1, z.comm}), units));
  z.q = g.dense(h2, n_goals);
  g.mark_output(z.q);
  return z;
}

class HighPolicyComm {
 public:
  HighPolicyComm(matc::Task task, double lr, Rng& rng, int units = 64)
      : n_goals_(static_cast<int>(goals::goal_set(task).size())),
        obs_width_(matc::obs_width(task)),
        proto_(build_comm_graph(obs_width_, n_goals_, units)),
        net_(proto_.graph, lr, rng) {}

  int n_goals() const { return n_goals_; }
  const CommGraph& proto() const { return proto_; }

  // Selection is central: both observations feed the joint graph and the
  // requesting agent reads its own head.
  int select(const VectorXd& o1, const VectorXd& o2, int agent, double eps,
             Rng& rng) {
    forward_joint(net_.online, o1, o2);
    return eps_greedy(net_.online.value(proto_.q[agent]).col(0), n_goals_,
                      eps, rng);
  }

  double update(const std::vector<const replay::HighLevelTransition*>& batch,
                double gamma) {
    return update_views(views_of(batch), gamma);
  }

  double update_subs(const std::vector<const replay::SubTransition*>& batch,
                     double gamma) {
    return update_views(views_of(batch), gamma);
  }

  QNet& qnet() { return net_; }
  const QNet& qnet() const { return net_; }

 private:
  struct Sample {
    const VectorXd* obs;       // joint observation, both agents concatenated
    const VectorXd* next_obs;
    const std::vector<double>* rewards;
    int goal;
    bool done;
    int agent;
  };

  template <typename T>
  static std::vector<Sample> views_of(const std::vector<const T*>& batch) {
    if (batch.empty()) throw ArgumentError("high-level update: empty batch");
    std::vector<Sample> view;
    view.reserve(batch.size());
    for (const T* t : batch)
      view.push_back({&t->obs, &t->next_obs, &t->rewards, t->goal, t->done,
                      t->agent});
    return view;
  }

  void forward_joint(net::Graph& g, const VectorXd& o1, const VectorXd& o2) {
    g.forward({{proto_.obs[0], o1},
               {proto_.id[0], agent_one_hot(0)},
               {proto_.obs[1], o2},
               {proto_.id[1], agent_one_hot(1)}});
  }

  std::vector<std::pair<net::NodeId, MatrixXd>> bind_joint(
      const std::vector<Sample>& batch, bool next) const {
    const int B = static_cast<int>(batch.size());
    MatrixXd o1(obs_width_, B), o2(obs_width_, B);
    for (int b = 0; b < B; ++b) {
      const VectorXd& joint = next ? *batch[b].next_obs : *batch[b].obs;
      if (joint.size() != 2 * obs_width_)
        throw DimensionError("joint observation width mismatch");
      o1.col(b) = joint.head(obs_width_);
      o2.col(b) = joint.tail(obs_width_);
    }
    MatrixXd id1 = MatrixXd::Zero(matc::kNumAgents, B);
    MatrixXd id2 = MatrixXd::Zero(matc::kNumAgents, B);
    id1.row(0).setOnes();
    id2.row(1).setOnes();
    return {{proto_.obs[0], std::move(o1)},
            {proto_.id[0], std::move(id1)},
            {proto_.obs[1], std::move(o2)},
            {proto_.id[1], std::move(id2)}};
  }

  double update_views(const std::vector<Sample>& batch, double gamma) {
    const int B = static_cast<int>(batch.size());
    net_.target.forward(bind_joint(batch, true));
    net_.online.forward(bind_joint(batch, false));

    std::array<MatrixXd, 2> grads{MatrixXd::Zero(n_goals_, B),
                                  MatrixXd::Zero(n_goals_, B)};
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
      const Sample& t = batch[b];
      const auto& qn = net_.target.value(proto_.q[t.agent]);
      const double y = semi_mdp_target(*t.rewards, gamma,
                                       max_slot(qn.col(b), n_goals_), t.done);
      const auto& q = net_.online.value(proto_.q[t.agent]);
      const double err = q(t.goal, b) - y;
      loss += err * err;
      grads[t.agent](t.goal, b) = 2.0 * err / B;
    }
    const auto pg = net_.online.backward(
        {{proto_.q[0], grads[0]}, {proto_.q[1], grads[1]}});
    net::adam_step(net_.online.parameters(), pg, net_.adam);
    net_.updates += 1;
    return loss / B;
  }

  int n_goals_;
  int obs_width_;
  CommGraph proto_;
  QNet net_;
};

// ---------------------------------------------------------------------------
// Monotonic value-mixing critic. Per-agent lanes share parameters; chosen
// goal values are gathered with one-hot weights and mixed by a state-
// conditioned hypernetwork whose mixing weights pass through abs.

struct QmixGraph {
  net::Graph graph;
  std::array<net::NodeId, 2> obs{};
  std::array<net::NodeId, 2> id{};
  std::array<net::NodeId, 2> goal{};  // one-hot gather weights
  net::NodeId zero = 0;               // width-1 zero input, gather bias
  std::array<net::NodeId, 2> q{};     // per-agent goal values
  net::NodeId qtot = 0;
};

inline QmixGraph build_qmix_graph(int obs_w, int n_goals, int units = 64,
                                  int mix_hidden = 32) {
  QmixGraph m;
  net::Graph& g = m.graph;
  for (int i = 0; i < 2; ++i) {
    m.obs[i] = g.input(obs_w);
    m.id[i] = g.input(matc::kNumAgents);
    m.goal[i] = g.input(n_goals);
  }
  m.zero = g.input(1);

  net::GroupId layer1 = -1, layer2 = -1, head = -1;
  for (int i = 0; i < 2; ++i) {
    const auto in = g.concat({m.obs[i], m.id[i]});
    const auto pre1 = i == 0 ? g.dense(in, units) : g.dense_shared(in, layer1);
    if (i == 0) layer1 = static_cast<net::GroupId>(g.groups().size()) - 1;
    const auto h1 = g.relu(pre1);
    const auto pre2 = i == 0 ? g.dense(h1, units) : g.dense_shared(h1, layer2);
    if (i == 0) layer2 = static_cast<net::GroupId>(g.groups().size()) - 1;
    const auto h2 = g.relu(pre2);
    m.q[i] = i == 0 ? g.dense(h2, n_goals) : g.dense_shared(h2, head);
    if (i == 0) head = static_cast<net::GroupId>(g.groups().size()) - 1;
    g.mark_output(m.q[i]);
  }

  const auto qsel0 = g.linear_from(m.q[0], m.goal[0], m.zero);
  const auto qsel1 = g.linear_from(m.q[1], m.goal[1], m.zero);
  const auto qvec = g.concat({qsel0, qsel1});

  // Agent 1's observation already shows the whole grid, so it doubles as
  // the global state feeding the hypernetworks.
  const auto state = m.obs[0];
  const auto w1 = g.abs(g.dense(state, 2 * mix_hidden));
  const auto b1 = g.dense(state, mix_hidden);
  const auto hid = g.elu(g.linear_from(qvec, w1, b1));
  const auto w2 = g.abs(g.dense(state, mix_hidden));
  const auto b2 = g.dense(g.relu(g.dense(state, mix_hidden)), 1);
  m.qtot = g.linear_from(hid, w2, b2);
  g.mark_output(m.qtot);
  return m;
}

// Stand-alone mixing network over externally supplied per-agent values,
// structurally identical to the mixer embedded in build_qmix_graph.
struct MixerGraph {
  net::Graph graph;
  net::NodeId q_in = 0;
  net::NodeId state = 0;
  net::NodeId qtot = 0;
};

inline MixerGraph build_mixer_graph(int n_agents, int state_w,
                                    int mix_hidden = 32) {
  MixerGraph m;
  net::Graph& g = m.graph;
  m.q_in = g.input(n_agents);
  m.state = g.input(state_w);
  const auto w1 = g.abs(g.dense(m.state, n_agents * mix_hidden));
  const auto b1 = g.dense(m.state, mix_hidden);
  const auto hid = g.elu(g.linear_from(m.q_in, w1, b1));
  const auto w2 = g.abs(g.dense(m.state, mix_hidden));
  const auto b2 = g.dense(g.relu(g.dense(m.state, mix_hidden)), 1);
  m.qtot = g.linear_from(hid, w2, b2);
  g.mark_output(m.qtot);
  return m;
}

class QmixCritic {
 public:
  QmixCritic(matc::Task task, double lr, Rng& rng, int units = 64)
      : n_goals_(static_cast<int>(goals::goal_set(task).size())),
        obs_width_(matc::obs_width(task)),
        proto_(build_qmix_graph(obs_width_, n_goals_, units)),
        net_(proto_.graph, lr, rng) {}

  int n_goals() const { return n_goals_; }
  const QmixGraph& proto() const { return proto_; }

  // Greedy goals come from the per-agent heads; the mixer only shapes
  // training targets.
  std::array<int, 2> select(const VectorXd& o1, const VectorXd& o2,
                            std::array<double, 2> eps, Rng& rng) {
    forward_heads(net_.online, o1, o2);
    std::array<int, 2> out{};
    for (int i = 0; i < 2; ++i)
      out[i] = eps_greedy(net_.online.value(proto_.q[i]).col(0), n_goals_,
                          eps[i], rng);
    return out;
  }

  double qtot_value(const VectorXd& o1, const VectorXd& o2,
                    std::array<int, 2> chosen) {
    MatrixXd g1 = MatrixXd::Zero(n_goals_, 1), g2 = MatrixXd::Zero(n_goals_, 1);
    g1(chosen[0], 0) = 1.0;
    g2(chosen[1], 0) = 1.0;
    net_.online.forward({{proto_.obs[0], o1},
                         {proto_.id[0], agent_one_hot(0)},
                         {proto_.obs[1], o2},
                         {proto_.id[1], agent_one_hot(1)},
                         {proto_.goal[0], std::move(g1)},
                         {proto_.goal[1], std::move(g2)},
                         {proto_.zero, MatrixXd::Zero(1, 1)}});
    return net_.online.value(proto_.qtot)(0, 0);
  }

  double update(const std::vector<const replay::JointTransition*>& batch,
                double gamma) {
    if (batch.empty()) throw ArgumentError("mixing update: empty batch");
    const int B = static_cast<int>(batch.size());
    for (const auto* t : batch)
      if (t->taus[0] != t->taus[1])
        throw AlignmentError("mixing update requires equal goal durations");

    // Target pass one: read heads under the next observation (goal binds are
    // irrelevant to the heads) and take each agent's greedy goal.
    net_.target.forward(bind_batch(batch, true, nullptr));
    std::vector<std::array<int, 2>> greedy(B);
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < 2; ++i)
        greedy[b][i] =
            argmax_slot(net_.target.value(proto_.q[i]).col(b), n_goals_);

    // Target pass two: mix the greedy goal values into the bootstrap.
    net_.target.forward(bind_batch(batch, true, &greedy));
    std::vector<double> y(B);
    for (int b = 0; b < B; ++b)
      y[b] = semi_mdp_target(batch[b]->rewards, gamma,
                             net_.target.value(proto_.qtot)(0, b),
                             batch[b]->done);

    net_.online.forward(bind_batch(batch, false, nullptr));
    const MatrixXd& qtot = net_.online.value(proto_.qtot);
    MatrixXd grad(1, B);
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
      const double err = qtot(0, b) - y[b];
      loss += err * err;
      grad(0, b) = 2.0 * err / B;
    }
    const auto pg = net_.online.backward({{proto_.qtot, grad}});
    net::adam_step(net_.online.parameters(), pg, net_.adam);
    net_.updates += 1;
    return loss / B;
  }

  QNet& qnet() { return net_; }
  const QNet& qnet() const { return net_; }

 private:
  void forward_heads(net::Graph& g, const VectorXd& o1, const VectorXd& o2) {
    g.forward({{proto_.obs[0], o1},
               {proto_.id[0], agent_one_hot(0)},
               {proto_.obs[1], o2},
               {proto_.id[1], agent_one_hot(1)},
               {proto_.goal[0], MatrixXd::Zero(n_goals_, 1)},
               {proto_.goal[1], MatrixXd::Zero(n_goals_, 1)},
               {proto_.zero, MatrixXd::Zero(1, 1)}});
  }

  // Goal binds come from the stored transitions unless an override (the
  // greedy picks of a previous target pass) is supplied.
  std::vector<std::pair<net::NodeId, MatrixXd>> bind_batch(
      const std::vector<const replay::JointTransition*>& batch, bool next,
      const std::vector<std::array<int, 2>>* override_goals) const {
    const int B = static_cast<int>(batch.size());
    MatrixXd o1(obs_width_, B), o2(obs_width_, B);
    MatrixXd g1 = MatrixXd::Zero(n_goals_, B), g2 = MatrixXd::Zero(n_goals_, B);
    for (int b = 0; b < B; ++b) {
      const replay::JointTransition& t = *batch[b];
      o1.col(b) = next ? t.next_obs[0] : t.obs[0];
      o2.col(b) = next ? t.next_obs[1] : t.obs[1];
      const int c1 = override_goals ? (*override_goals)[b][0] : t.goals[0];
      const int c2 = override_goals ? (*override_goals)[b][1] : t.goals[1];
      g1(c1, b) = 1.0;
      g2(c2, b) = 1.0;
    }
    MatrixXd id1 = MatrixXd::Zero(matc::kNumAgents, B);
    MatrixXd id2 = MatrixXd::Zero(matc::kNumAgents, B);
    id1.row(0).setOnes();
    id2.row(1).setOnes();
    return {{proto_.obs[0], std::move(o1)},
            {proto_.id[0], std::move(id1)},
            {proto_.obs[1], std::move(o2)},
            {proto_.id[1], std::move(id2)},
            {proto_.goal[0], std::move(g1)},
            {proto_.goal[1], std::move(g2)},
            {proto_.zero, MatrixXd::Zero(1, B)}};
  }

  int n_goals_;
  int obs_width_;
  QmixGraph proto_;
  QNet net_;
};

// ---------------------------------------------------------------------------
// Flat independent learner: per-agent network over raw observations and
// primitive actions, no sharing, no hierarchy.

struct DqnTransition {
  VectorXd obs;
  int action = 0;
  double reward = 0.0;
  VectorXd next_obs;
  bool done = false;
};

class DqnPolicy {
 public:
  DqnPolicy(matc::Task task, double lr, Rng& rng, int units = 128)
      : obs_width_(matc::obs_width(task)),
        proto_(build_mlp(obs_width_, units, units, matc::kNumActions)),
        net_(proto_.graph, lr, rng) {}

  int select(const VectorXd& obs, double eps, Rng& rng) {
    net_.online.forward({{proto_.in, obs}});
    return eps_greedy(net_.online.value(proto_.out).col(0), matc::kNumActions,
                      eps, rng);
  }

  double update(const std::vector<const DqnTransition*>& batch, double gamma) {
    if (batch.empty()) throw ArgumentError("dqn update: empty batch");
    const int B = static_cast<int>(batch.size());
    MatrixXd x(obs_width_, B), xn(obs_width_, B);
    for (int b = 0; b < B; ++b) {
      x.col(b) = batch[b]->obs;
      xn.col(b) = batch[b]->next_obs;
    }
    net_.target.forward({{proto_.in, xn}});
    const MatrixXd& qn = net_.target.value(proto_.out);
    net_.online.forward({{proto_.in, x}});
    const MatrixXd& q = net_.online.value(proto_.out);

    MatrixXd grad = MatrixXd::Zero(matc::kNumActions, B);
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
      const DqnTransition& t = *batch[b];
      const double bootstrap =
          t.done ? 0.0 : gamma * max_slot(qn.col(b), matc::kNumActions);
      const double err = q(t.action, b) - (t.reward + bootstrap);
      loss += err * err;
      grad(t.action, b) = 2.0 * err / B;
    }
    const auto pg = net_.online.backward({{proto_.out, grad}});
    net::adam_step(net_.online.parameters(), pg, net_.adam);
    net_.updates += 1;
    return loss / B;
  }

  QNet& qnet() { return net_; }
  const QNet& qnet() const { return net_; }
  net::NodeId in_node() const { return proto_.in; }
  net::NodeId out_node() const { return proto_.out; }

 private:
  int obs_width_;
  Mlp proto_;
  QNet net_;
};

}  // namespace hmarl::agents
