#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <optional>
#include <ostream>
#include <vector>

#include "hmarl/errors.hpp"
#include "hmarl/rng.hpp"

namespace hmarl::replay {

// One completed goal execution, recorded per agent. For architectures with a
// centralized high level the observation fields hold the concatenated joint
// observation; `agent` names the deciding agent either way.
struct HighLevelTransition {
  Eigen::VectorXd obs;
  int goal = 0;
  std::vector<double> rewards;  // team reward at each covered step
  Eigen::VectorXd next_obs;
  int tau = 0;
  bool done = false;
  int start = 0;  // env timestep the goal began at
  int agent = 0;
};

// A suffix view of a goal execution starting k steps in, keeping the
// original goal. residual = tau - k.
struct SubTransition {
  Eigen::VectorXd obs;
  int goal = 0;
  std::vector<double> rewards;
  Eigen::VectorXd next_obs;
  int residual = 0;
  bool done = false;
  int agent = 0;
};

// Expands a transition into sub-transitions at k = 0, stride, 2*stride, ...
// `trail[k]` must hold the observation at step start+k (the stored transition
// keeps endpoints only, so the caller supplies the intermediate ones).
inline std::vector<SubTransition> augment(
    const HighLevelTransition& t, int stride,
    const std::vector<Eigen::VectorXd>& trail) {
  if (stride < 1) throw ArgumentError("augment stride must be >= 1");
  if (t.tau < 1 || static_cast<int>(t.rewards.size()) != t.tau)
    throw ArgumentError("transition has inconsistent tau/reward length");
  if (static_cast<int>(trail.size()) != t.tau)
    throw ArgumentError("observation trail must have tau entries");
  std::vector<SubTransition> subs;
  for (int k = 0; k < t.tau; k += stride) {
    SubTransition s;
    s.obs = k == 0 ? t.obs : trail[k];
    s.goal = t.goal;
    s.rewards.assign(t.rewards.begin() + k, t.rewards.end());
    s.next_obs = t.next_obs;
    s.residual = t.tau - k;
    s.done = t.done;
    s.agent = t.agent;
    subs.push_back(std::move(s));
  }
  return subs;
}

// Plain ring buffer with uniform without-replacement sampling.
template <typename T>
class UniformBuffer {
 public:
  explicit UniformBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ArgumentError("buffer capacity must be positive");
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }

  // i-th oldest item
  const T& at(std::size_t i) const { return items_[(head_ + i) % items_.size()]; }

  std::vector<const T*> sample(std::size_t batch, Rng& rng) const {
    return gather(sample_indices(items_.size(), batch, rng));
  }

  std::vector<const T*> gather(const std::vector<std::size_t>& idx) const {
    std::vector<const T*> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(&items_[i]);
    return out;
  }

  static std::vector<std::size_t> sample_indices(std::size_t size,
                                                 std::size_t batch, Rng& rng) {
    if (batch > size)
      throw UnderfullError("sample of " + std::to_string(batch) + " from " +
                           std::to_string(size) + " stored items");
    std::vector<std::size_t> idx(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng.uniform_int(static_cast<int>(size - i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(batch);
    return idx;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // oldest element once full
  std::vector<T> items_;
};

// Timestep-aligned storage for concurrent sampling: one slot per environment
// timestep holding every agent's sub-transition for that step. Eviction is
// FIFO over whole slots, so agents' stores never drift apart.
class AlignedBuffer {
 public:
  struct Slot {
    long timestep = -1;
    std::vector<SubTransition> entries;  // one per agent
  };

  AlignedBuffer(std::size_t capacity, int n_agents)
      : capacity_(capacity), n_agents_(n_agents) {
    if (capacity == 0) throw ArgumentError("buffer capacity must be positive");
    if (n_agents < 1) throw ArgumentError("need at least one agent");
  }

  void push_concurrent(long timestep,
                       std::vector<std::optional<SubTransition>> per_agent) {
    if (static_cast<int>(per_agent.size()) != n_agents_)
      throw AlignmentError("expected " + std::to_string(n_agents_) +
                           " per-agent entries, got " +
                           std::to_string(per_agent.size()));
    Slot slot;
    slot.timestep = timestep;
    for (int i = 0; i < n_agents_; ++i) {
      if (!per_agent[i].has_value())
        throw AlignmentError("agent " + std::to_string(i) +
                             " has no sub-transition for timestep " +
                             std::to_string(timestep));
      slot.entries.push_back(std::move(*per_agent[i]));
    }
    if (!slots_.empty() && timestep <= last_timestep_)
      throw AlignmentError("timesteps must be strictly increasing");
    last_timestep_ = timestep;
    if (slots_.size() < capacity_) {
      slots_.push_back(std::move(slot));
    } else {
      slots_[head_] = std::move(slot);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return slots_.size(); }
  int agents() const { return n_agents_; }

  // i-th oldest slot
  const Slot& at(std::size_t i) const { return slots_[(head_ + i) % slots_.size()]; }

  // Same slot indices for every agent; sampling is without replacement.
  std::vector<const Slot*> sample_concurrent(std::size_t batch, Rng& rng) const {
    const auto idx =
        UniformBuffer<SubTransition>::sample_indices(slots_.size(), batch, rng);
    std::vector<const Slot*> out;
    out.reserve(batch);
    for (std::size_t i : idx) out.push_back(&slots_[i]);
    return out;
  }

  // Debug dump, one slot per line: timestep, then each agent's entry as
  // goal/residual/done plus its reward tail.
  void dump(std::ostream& os) const {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      const Slot& s = at(i);
      os << s.timestep;
      for (const SubTransition& e : s.entries) {
        os << " | " << e.goal << ' ' << e.residual << ' ' << (e.done ? 1 : 0);
        for (double r : e.rewards) os << ' ' << r;
      }
      os << '\n';
    }
  }

 private:
  std::size_t capacity_;
  int n_agents_;
  std::size_t head_ = 0;
  long last_timestep_ = -1;
  std::vector<Slot> slots_;
};

// Time-aligned joint transition for centralized critics. Built by the sync
// recorder (taus match by construction) or by trim_async.
struct JointTransition {
  std::array<Eigen::VectorXd, 2> obs;
  std::array<int, 2> goals{};
  std::vector<double> rewards;
  std::array<Eigen::VectorXd, 2> next_obs;
  std::array<int, 2> taus{};
  bool done = false;
  int start = 0;
};

// Cuts one episode's asynchronous per-agent transition streams at the union
// of goal boundaries, producing aligned joint transitions. `obs_trail[t]`
// holds both agents' observations at env step t, for t = 0..T inclusive.
inline std::vector<JointTransition> trim_async(
    const std::array<std::vector<HighLevelTransition>, 2>& streams,
    const std::vector<std::array<Eigen::VectorXd, 2>>& obs_trail,
    bool episode_done) {
  std::array<int, 2> lengths{};
  for (int a = 0; a < 2; ++a) {
    int t = 0;
    for (const HighLevelTransition& tr : streams[a]) {
      if (tr.start != t)
        throw AlignmentError("agent " + std::to_string(a) +
                             " stream has a gap at step " + std::to_string(t));
      t += tr.tau;
    }
    lengths[a] = t;
  }
  if (lengths[0] != lengths[1])
    throw AlignmentError("streams cover different episode lengths: " +
                         std::to_string(lengths[0]) + " vs " +
                         std::to_string(lengths[1]));
  const int T = lengths[0];
  if (T == 0) return {};
  if (static_cast<int>(obs_trail.size()) != T + 1)
    throw AlignmentError("observation trail must have T+1 entries");

  // episode reward stream (identical for both agents in a team task)
  std::vector<double> team;
  for (const HighLevelTransition& tr : streams[0])
    team.insert(team.end(), tr.rewards.begin(), tr.rewards.end());

  std::vector<int> bounds{0};
  for (const auto& stream : streams)
    for (const HighLevelTransition& tr : stream) bounds.push_back(tr.start + tr.tau);
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());

  std::vector<JointTransition> out;
  for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
    const int lo = bounds[b];
    const int hi = bounds[b + 1];
    JointTransition jt;
    jt.start = lo;
    jt.obs = obs_trail[lo];
    jt.next_obs = obs_trail[hi];
    jt.rewards.assign(team.begin() + lo, team.begin() + hi);
    jt.taus = {hi - lo, hi - lo};
    jt.done = episode_done && hi == T;
    for (int a = 0; a < 2; ++a) {
      for (const HighLevelTransition& tr : streams[a]) {
        if (tr.start <= lo && lo < tr.start + tr.tau) {
          jt.goals[a] = tr.goal;
          break;
        }
      }
    }
    out.push_back(std::move(jt));
  }
  return out;
}

}  // namespace hmarl::replay
