#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hmarl/agents.hpp"
#include "hmarl/config.hpp"
#include "hmarl/goals.hpp"
#include "hmarl/matc.hpp"
#include "hmarl/replay.hpp"
#include "hmarl/rng.hpp"

namespace hmarl::harness {

using config::Architecture;
using config::ExperimentConfig;
using config::ReplayMode;
using Eigen::VectorXd;

// Linear 1 -> 0.1 anneal counted in gradient updates, clamped at the floor.
inline double epsilon_at(long updates, long anneal_updates) {
  if (updates >= anneal_updates) return 0.1;
  return 1.0 - 0.9 * static_cast<double>(updates) / anneal_updates;
}

struct TrialMetrics {
  std::vector<double> reward;
  std::vector<long> steps;
  std::vector<double> eps_high;
  std::vector<double> eps_low;
  std::vector<double> loss_high;  // mean update loss within the episode
  std::vector<double> loss_low;
  double wall_seconds = 0.0;
};

inline std::pair<double, double> evaluate_recent(const TrialMetrics& m,
                                                 int window = 100) {
  if (m.reward.empty()) throw StateError("no episodes recorded");
  const std::size_t n =
      std::min<std::size_t>(static_cast<std::size_t>(window), m.reward.size());
  double r = 0.0, s = 0.0;
  for (std::size_t i = m.reward.size() - n; i < m.reward.size(); ++i) {
    r += m.reward[i];
    s += static_cast<double>(m.steps[i]);
  }
  return {r / static_cast<double>(n), s / static_cast<double>(n)};
}

struct Trajectory {
  matc::Task task = matc::Task::Room;
  double total_reward = 0.0;
  long steps = 0;
  std::vector<std::string> frames;  // ascii renders, initial state first
};

// One seeded training run. Episodes before the warm-up threshold train only
// the low level and are not reported; the configured episode count refers to
// full-training episodes, so metric files across trials align row by row.
class Trial {
 public:
  struct EpisodeStats {
    double reward = 0.0;
    long steps = 0;
    double loss_low = 0.0, loss_high = 0.0;
    long nlow = 0, nhigh = 0;
  };

  // Invoked after every episode, warm-up ones included; the flag reports
  // whether the NEXT episode still belongs to the warm-up phase.
  std::function<void(const Trial&, bool warmup)> progress;

  Trial(const ExperimentConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        seed_(seed),
        task_(cfg.task),
        gset_(goals::goal_set(task_)),
        low_select_(substream(seed, "select/low")),
        high_select_(substream(seed, "select/high")),
        low_sample_(substream(seed, "sample/low")),
        high_sample_(substream(seed, "sample/high")) {
    config::validate(cfg_);
    const matc::GridState probe = matc::reset(task_);
    cells_ = probe.rows * probe.cols;

    Rng init_low = substream(seed, "init/low");
    Rng init_high = substream(seed, "init/high");
    switch (cfg_.architecture) {
      case Architecture::IlDqn:
        for (int i = 0; i < 2; ++i) {
          Rng init = substream(seed, i == 0 ? "init/agent0" : "init/agent1");
          dqn_[i].emplace(task_, cfg_.lr_high, init);
          dqn_buf_[i].emplace(static_cast<std::size_t>(cfg_.buffer_high));
        }
        break;
      case Architecture::LowLevelOnly:
        low_.emplace(task_, cfg_.lr_low, init_low);
        break;
      case Architecture::HIl:
        low_.emplace(task_, cfg_.lr_low, init_low);
        hil_.emplace(task_, cfg_.lr_high, init_high);
        break;
      case Architecture::HComm:
        low_.emplace(task_, cfg_.lr_low, init_low);
        comm_.emplace(task_, cfg_.lr_high, init_high);
        break;
      case Architecture::HQmix:
        low_.emplace(task_, cfg_.lr_low, init_low);
        qmix_.emplace(task_, cfg_.lr_high, init_high);
        break;
    }
    if (low_)
      low_buf_.emplace(static_cast<std::size_t>(cfg_.buffer_low));
    if (hil_ || comm_) {
      if (cfg_.replay == ReplayMode::Acer)
        acer_buf_.emplace(static_cast<std::size_t>(cfg_.buffer_high),
                          matc::kNumAgents);
      else
        high_buf_.emplace(static_cast<std::size_t>(cfg_.buffer_high));
    }
    if (qmix_)
      joint_buf_.emplace(static_cast<std::size_t>(cfg_.buffer_high));
  }

  // One episode under the current phase, without metric bookkeeping.
  EpisodeStats run_episode() {
    return cfg_.architecture == Architecture::IlDqn ? run_episode_flat()
                                                    : run_episode_hier();
  }

  TrialMetrics run() {
    const auto t0 = std::chrono::steady_clock::now();
    TrialMetrics m;
    while (static_cast<long>(m.reward.size()) < cfg_.episodes) {
      const bool counted = !in_warmup();
      const EpisodeStats es = run_episode();
      if (progress) progress(*this, in_warmup());
      if (!counted) continue;
      m.reward.push_back(es.reward);
      m.steps.push_back(es.steps);
      m.eps_high.push_back(current_eps_high());
      m.eps_low.push_back(current_eps_low());
      m.loss_high.push_back(es.nhigh ? es.loss_high / es.nhigh : 0.0);
      m.loss_low.push_back(es.nlow ? es.loss_low / es.nlow : 0.0);
    }
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return m;
  }

  // Named online networks for checkpointing, {arch}_{level}_{agent|shared}.
  std::vector<std::pair<std::string, const net::Graph*>> checkpoints() const {
    const std::string arch = config::arch_name(cfg_.architecture);
    std::vector<std::pair<std::string, const net::Graph*>> out;
    if (dqn_[0])
      for (int i = 0; i < 2; ++i)
        out.emplace_back(arch + "_flat_agent" + std::to_string(i) + ".ckpt",
                         &dqn_[i]->qnet().online);
    if (hil_) out.emplace_back(arch + "_high_shared.ckpt", &hil_->qnet().online);
    if (comm_) out.emplace_back(arch + "_high_shared.ckpt", &comm_->qnet().online);
    if (qmix_) out.emplace_back(arch + "_high_shared.ckpt", &qmix_->qnet().online);
    if (low_) out.emplace_back(arch + "_low_shared.ckpt", &low_->qnet().online);
    return out;
  }

  // Greedy rollout with learning frozen; used for the saved replay artifact.
  Trajectory greedy_episode() {
    Rng rng = substream(seed_, "greedy");
    Trajectory tr;
    rollout(rng, 0.0, 0.0, &tr);
    return tr;
  }

  // Mean (reward, steps) over n frozen-policy episodes at the given
  // exploration rates. Runs on its own RNG substream so evaluation never
  // perturbs training reproducibility.
  std::pair<double, double> evaluate_policy(int n, double eps_high,
                                            double eps_low) {
    if (n <= 0) throw ArgumentError("evaluate_policy needs n > 0");
    Rng rng = substream(seed_, "eval");
    double reward = 0.0, steps = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto [r, s] = rollout(rng, eps_high, eps_low, nullptr);
      reward += r;
      steps += s;
    }
    return {reward / n, steps / n};
  }

  long low_update_count() const { return low_ ? low_->qnet().updates : 0; }
  long high_update_count() const {
    if (hil_) return hil_->qnet().updates;
    if (comm_) return comm_->qnet().updates;
    if (qmix_) return qmix_->qnet().updates;
    if (dqn_[0]) return dqn_[0]->qnet().updates;
    return 0;
  }
  long env_steps() const { return global_step_; }
  const agents::LowLevelPolicy* low_policy() const {
    return low_ ? &*low_ : nullptr;
  }
  const agents::HighPolicyHil* hil_policy() const {
    return hil_ ? &*hil_ : nullptr;
  }

 private:
  struct ActiveGoal {
    int goal = 0;
    int start_step = 0;        // episode step index at start
    VectorXd start_obs;        // architecture's stored observation form
    goals::GoalState gs;
    std::vector<VectorXd> trail;  // per-step stored observations (replay aug)
  };

  bool in_warmup() const {
    if (cfg_.architecture == Architecture::IlDqn) return false;
    return low_update_count() < cfg_.warmup_updates;
  }

  double current_eps_low() const {
    // The flat learner has a single schedule; it is reported in both columns.
    if (cfg_.architecture == Architecture::IlDqn) return current_eps_high();
    return epsilon_at(low_update_count(), cfg_.eps_low_updates);
  }

  double current_eps_high() const {
    if (cfg_.architecture == Architecture::LowLevelOnly) return 1.0;
    return epsilon_at(high_update_count(), cfg_.eps_high_updates);
  }

  bool uses_acer() const { return acer_buf_.has_value(); }

  // The stored high-level observation: own view for independent learners and
  // the value mixer, both views side by side for the communicating learner.
  VectorXd stored_obs(int agent, const std::array<VectorXd, 2>& obs) const {
    if (cfg_.architecture != Architecture::HComm) return obs[agent];
    VectorXd joint(obs[0].size() + obs[1].size());
    joint << obs[0], obs[1];
    return joint;
  }

  int pick_goal(int agent, const std::array<VectorXd, 2>& obs, double eps,
                Rng& rng) {
    switch (cfg_.architecture) {
      case Architecture::LowLevelOnly: {
        // Mirrors the eps-greedy draw pattern at eps = 1: coin, then goal.
        rng.uniform();
        return rng.uniform_int(static_cast<int>(gset_.size()));
      }
      case Architecture::HIl:
        return hil_->select(obs[agent], agent, eps, rng);
      case Architecture::HComm:
        return comm_->select(obs[0], obs[1], agent, eps, rng);
      case Architecture::HQmix:
        return qmix_->select(obs[0], obs[1], {eps, eps}, rng)[agent];
      default:
        throw StateError("flat learner has no goals");
    }
  }

  // One learning-free episode; fills tr with frames when given.
  std::pair<double, long> rollout(Rng& rng, double eps_high, double eps_low,
                                  Trajectory* tr) {
    matc::GridState state = matc::reset(task_);
    if (tr) {
      tr->task = task_;
      tr->frames.push_back(matc::render_ascii(state));
    }
    std::array<VectorXd, 2> obs{matc::observe(state, 0),
                                matc::observe(state, 1)};
    std::array<int, 2> goal{-1, -1};
    std::array<goals::GoalState, 2> gs;
    double reward = 0.0;
    long steps = 0;

    bool done = false;
    while (!done) {
      std::array<int, 2> actions{};
      if (cfg_.architecture == Architecture::IlDqn) {
        for (int i = 0; i < 2; ++i)
          actions[i] = dqn_[i]->select(obs[i], eps_high, rng);
      } else {
        for (int i = 0; i < 2; ++i)
          if (goal[i] < 0) {
            goal[i] = pick_goal(i, obs, eps_high, rng);
            gs[i] = goals::GoalState{gset_[goal[i]], i,
                                     static_cast<int>(state.step), 0, false, {}};
          }
        for (int i = 0; i < 2; ++i) {
          const VectorXd phi =
              goals::intrinsic_observation(obs[i], cells_, gset_[goal[i]], i);
          const int slot = low_->select(phi, goal[i], i, eps_low, rng);
          actions[i] = goals::action_set(gset_[goal[i]])[slot];
        }
      }
      const matc::GridState prev = state;
      const auto res = matc::step(state, actions);
      done = res.done;
      reward += res.reward;
      steps += 1;
      if (tr) tr->frames.push_back(matc::render_ascii(state));
      for (int i = 0; i < 2; ++i) obs[i] = matc::observe(state, i);
      if (cfg_.architecture != Architecture::IlDqn) {
        for (int i = 0; i < 2; ++i) {
          if (goals::goal_success(gset_[goal[i]], prev, state, i))
            gs[i].succeeded = true;
          gs[i].elapsed += 1;
        }
        const auto flags =
            goals::termination_controller(cfg_.termination, gs, state, done);
        for (int i = 0; i < 2; ++i)
          if (flags[i]) goal[i] = -1;
      }
    }
    if (tr) {
      tr->total_reward = reward;
      tr->steps = steps;
    }
    return {reward, steps};
  }

  void start_goal(int agent, const std::array<VectorXd, 2>& obs,
                  const matc::GridState& state,
                  std::array<std::optional<ActiveGoal>, 2>& active) {
    ActiveGoal ag;
    ag.goal = pick_goal(agent, obs, current_eps_high(), high_select_);
    ag.start_step = static_cast<int>(state.step);
    ag.start_obs = stored_obs(agent, obs);
    ag.gs = goals::GoalState{gset_[ag.goal], agent, ag.start_step, 0, false, {}};
    active[agent] = std::move(ag);
  }

  void record_high(int agent, ActiveGoal& ag,
                   const std::array<VectorXd, 2>& next_obs, bool episode_done,
                   std::array<std::vector<std::optional<replay::SubTransition>>,
                              2>& staged,
                   std::array<std::vector<replay::HighLevelTransition>, 2>&
                       streams) {
    if (cfg_.architecture == Architecture::LowLevelOnly) return;
    replay::HighLevelTransition t;
    t.obs = std::move(ag.start_obs);
    t.goal = ag.goal;
    t.rewards = std::move(ag.gs.rewards);
    t.next_obs = stored_obs(agent, next_obs);
    t.tau = ag.gs.elapsed;
    t.done = episode_done;
    t.start = ag.start_step;
    t.agent = agent;

    if (cfg_.architecture == Architecture::HQmix) {
      streams[agent].push_back(std::move(t));
      return;
    }
    if (uses_acer()) {
      auto subs = replay::augment(t, cfg_.stride, ag.trail);
      auto& lane = staged[agent];
      for (auto& s : subs) {
        const std::size_t anchor =
            static_cast<std::size_t>(t.start + (t.tau - s.residual));
        if (lane.size() <= anchor) lane.resize(anchor + 1);
        lane[anchor] = std::move(s);
      }
      return;
    }
    high_buf_->push(std::move(t));
  }

  void update_tick(EpisodeStats& es) {
    if (low_ && low_buf_->size() >= static_cast<std::size_t>(cfg_.batch_size)) {
      const auto batch = low_buf_->sample(cfg_.batch_size, low_sample_);
      es.loss_low += low_->update(batch, cfg_.gamma_low);
      es.nlow += 1;
      if (low_->qnet().updates % cfg_.target_sync == 0) low_->qnet().sync();
    }
    if (in_warmup()) return;

    const std::size_t B = static_cast<std::size_t>(cfg_.batch_size);
    double loss = 0.0;
    bool updated = false;
    if (uses_acer() && acer_buf_->size() >= B) {
      const auto slots = acer_buf_->sample_concurrent(B, high_sample_);
      std::vector<const replay::SubTransition*> subs;
      subs.reserve(slots.size() * matc::kNumAgents);
      for (const auto* slot : slots)
        for (const auto& e : slot->entries) subs.push_back(&e);
      loss = hil_ ? hil_->update_subs(subs, cfg_.gamma_high)
                  : comm_->update_subs(subs, cfg_.gamma_high);
      updated = true;
    } else if (high_buf_ && high_buf_->size() >= B) {
      const auto batch = high_buf_->sample(B, high_sample_);
      loss = hil_ ? hil_->update(batch, cfg_.gamma_high)
                  : comm_->update(batch, cfg_.gamma_high);
      updated = true;
    } else if (joint_buf_ && joint_buf_->size() >= B) {
      loss = qmix_->update(joint_buf_->sample(B, high_sample_), cfg_.gamma_high);
      updated = true;
    }
    if (updated) {
      es.loss_high += loss;
      es.nhigh += 1;
      if (high_update_count() % cfg_.target_sync == 0) {
        if (hil_) hil_->qnet().sync();
        if (comm_) comm_->qnet().sync();
        if (qmix_) qmix_->qnet().sync();
      }
    }
  }

  EpisodeStats run_episode_hier() {
    EpisodeStats es;
    matc::GridState state = matc::reset(task_);
    std::array<VectorXd, 2> obs{matc::observe(state, 0), matc::observe(state, 1)};
    std::array<std::optional<ActiveGoal>, 2> active;
    std::array<std::vector<replay::HighLevelTransition>, 2> streams;
    std::vector<std::array<VectorXd, 2>> joint_trail;
    std::array<std::vector<std::optional<replay::SubTransition>>, 2> staged;
    const long episode_base = global_step_;
    const bool want_joint_trail = cfg_.architecture == Architecture::HQmix;
    if (want_joint_trail) joint_trail.push_back(obs);

    bool done = false;
    while (!done) {
      for (int i = 0; i < 2; ++i)
        if (!active[i]) start_goal(i, obs, state, active);

      std::array<int, 2> actions{};
      std::array<VectorXd, 2> phi;
      std::array<int, 2> slots{};
      for (int i = 0; i < 2; ++i) {
        const ActiveGoal& ag = *active[i];
        phi[i] = goals::intrinsic_observation(obs[i], cells_, gset_[ag.goal], i);
        slots[i] = low_->select(phi[i], ag.goal, i, current_eps_low(),
                                low_select_);
        actions[i] = goals::action_set(gset_[ag.goal])[slots[i]];
      }

      const matc::GridState prev = state;
      const auto res = matc::step(state, actions);
      done = res.done;
      global_step_ += 1;
      es.reward += res.reward;
      es.steps += 1;
      std::array<VectorXd, 2> next_obs{matc::observe(state, 0),
                                       matc::observe(state, 1)};
      if (want_joint_trail) joint_trail.push_back(next_obs);

      for (int i = 0; i < 2; ++i) {
        ActiveGoal& ag = *active[i];
        if (goals::goal_success(gset_[ag.goal], prev, state, i))
          ag.gs.succeeded = true;
        ag.gs.elapsed += 1;
        ag.gs.rewards.push_back(res.reward);
        if (uses_acer()) ag.trail.push_back(stored_obs(i, obs));
      }

      const auto flags = goals::termination_controller(
          cfg_.termination, {active[0]->gs, active[1]->gs}, state, done);
      for (int i = 0; i < 2; ++i) {
        ActiveGoal& ag = *active[i];
        agents::LowTransition lt;
        lt.obs = phi[i];
        lt.slot = slots[i];
        lt.reward = goals::intrinsic_reward(gset_[ag.goal], prev, state, i);
        lt.next_obs =
            goals::intrinsic_observation(next_obs[i], cells_, gset_[ag.goal], i);
        lt.goal = ag.goal;
        lt.agent = i;
        lt.done = flags[i];
        lt.n_valid = static_cast<int>(goals::action_set(gset_[ag.goal]).size());
        low_buf_->push(std::move(lt));
        if (flags[i]) {
          record_high(i, ag, next_obs, done, staged, streams);
          active[i].reset();
        }
      }

      if (global_step_ % cfg_.update_every == 0) update_tick(es);
      obs = std::move(next_obs);
    }

    if (uses_acer()) {
      const std::size_t len = static_cast<std::size_t>(es.steps);
      for (std::size_t t = 0; t < len; ++t) {
        const bool have0 = staged[0].size() > t && staged[0][t].has_value();
        const bool have1 = staged[1].size() > t && staged[1][t].has_value();
        if (have0 && have1)
          acer_buf_->push_concurrent(
              episode_base + static_cast<long>(t),
              {std::move(staged[0][t]), std::move(staged[1][t])});
      }
    }
    if (cfg_.architecture == Architecture::HQmix) {
      auto joints = replay::trim_async(streams, joint_trail, done);
      for (auto& j : joints) joint_buf_->push(std::move(j));
    }
    return es;
  }

  EpisodeStats run_episode_flat() {
    EpisodeStats es;
    matc::GridState state = matc::reset(task_);
    std::array<VectorXd, 2> obs{matc::observe(state, 0), matc::observe(state, 1)};
    bool done = false;
    while (!done) {
      std::array<int, 2> actions{};
      const double eps = current_eps_high();
      for (int i = 0; i < 2; ++i)
        actions[i] = dqn_[i]->select(obs[i], eps, high_select_);
      const auto res = matc::step(state, actions);
      done = res.done;
      global_step_ += 1;
      es.reward += res.reward;
      es.steps += 1;
      for (int i = 0; i < 2; ++i) {
        agents::DqnTransition t;
        t.obs = std::move(obs[i]);
        t.action = actions[i];
        t.reward = res.reward;
        t.next_obs = matc::observe(state, i);
        t.done = done;
        obs[i] = t.next_obs;
        dqn_buf_[i]->push(std::move(t));
      }
      if (global_step_ % cfg_.update_every == 0) {
        for (int i = 0; i < 2; ++i) {
          if (dqn_buf_[i]->size() < static_cast<std::size_t>(cfg_.batch_size))
            continue;
          const auto batch = dqn_buf_[i]->sample(cfg_.batch_size, high_sample_);
          es.loss_high += dqn_[i]->update(batch, cfg_.gamma_high);
          es.nhigh += 1;
          if (dqn_[i]->qnet().updates % cfg_.target_sync == 0)
            dqn_[i]->qnet().sync();
        }
      }
    }
    return es;
  }

  ExperimentConfig cfg_;
  std::uint64_t seed_;
  matc::Task task_;
  int cells_ = 0;
  std::vector<goals::Goal> gset_;

  std::optional<agents::LowLevelPolicy> low_;
  std::optional<agents::HighPolicyHil> hil_;
  std::optional<agents::HighPolicyComm> comm_;
  std::optional<agents::QmixCritic> qmix_;
  std::array<std::optional<agents::DqnPolicy>, 2> dqn_;

  std::optional<replay::UniformBuffer<agents::LowTransition>> low_buf_;
  std::optional<replay::UniformBuffer<replay::HighLevelTransition>> high_buf_;
  std::optional<replay::AlignedBuffer> acer_buf_;
  std::optional<replay::UniformBuffer<replay::JointTransition>> joint_buf_;
  std::array<std::optional<replay::UniformBuffer<agents::DqnTransition>>, 2>
      dqn_buf_;

  Rng low_select_, high_select_, low_sample_, high_sample_;
  long global_step_ = 0;
};

inline TrialMetrics run_trial(const ExperimentConfig& cfg, std::uint64_t seed) {
  Trial t(cfg, seed);
  return t.run();
}

struct SuiteResult {
  std::vector<std::optional<TrialMetrics>> trials;  // one slot per seed
  std::vector<std::string> errors;                  // empty string on success
  std::unique_ptr<Trial> first_trial;  // trained state of seed + 0, kept for
                                       // checkpoints and the replay artifact
};

// Runs cfg.trials seeded trials (seed, seed+1, ...). A trial failure is
// reported in its slot and the suite continues. Results are independent of
// the parallelism level because trials never share state.
inline SuiteResult run_suite(const ExperimentConfig& cfg, int parallelism) {
  config::validate(cfg);
  SuiteResult out;
  out.trials.resize(cfg.trials);
  out.errors.assign(cfg.trials, "");
  std::vector<std::unique_ptr<Trial>> done(cfg.trials);

  std::atomic<int> next{0};
  const int workers = std::max(1, std::min(parallelism, cfg.trials));
  auto body = [&] {
    for (int i = next.fetch_add(1); i < cfg.trials; i = next.fetch_add(1)) {
      try {
        auto trial = std::make_unique<Trial>(cfg, cfg.seed + i);
        out.trials[i] = trial->run();
        if (i == 0) done[0] = std::move(trial);
      } catch (const std::exception& e) {
        out.errors[i] = e.what();
      }
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  out.first_trial = std::move(done[0]);
  return out;
}

// Convenience over a batch of configurations; an empty list yields an empty
// result. Parallelism stays within each suite so outputs match serial runs.
inline std::vector<SuiteResult> run_suites(
    const std::vector<ExperimentConfig>& configs, int parallelism) {
  std::vector<SuiteResult> out;
  out.reserve(configs.size());
  for (const ExperimentConfig& cfg : configs)
    out.push_back(run_suite(cfg, parallelism));
  return out;
}

}  // namespace hmarl::harness
