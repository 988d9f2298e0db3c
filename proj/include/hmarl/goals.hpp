#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "hmarl/errors.hpp"
#include "hmarl/matc.hpp"

namespace hmarl::goals {

inline constexpr int kMaxGoalLen = 15;

enum class GoalKind { Navigate, PickUp, PutDown };
enum class Target { None, Can, OwnCan, Bin };

struct Goal {
  GoalKind kind = GoalKind::Navigate;
  Target target = Target::None;
  int index = -1;  // can/bin index; OwnCan resolves per agent
  std::string name;
};

// OwnCan aliases the agent's designated can (agent i owns can i).
inline int resolve_can(const Goal& g, int agent) {
  return g.target == Target::OwnCan ? agent : g.index;
}

inline std::vector<Goal> goal_set(matc::Task task) {
  using matc::Task;
  std::vector<Goal> set;
  if (task == Task::Room || task == Task::Ring) {
    set.push_back({GoalKind::Navigate, Target::Can, 0, "move-to-can1"});
    set.push_back({GoalKind::Navigate, Target::Can, 1, "move-to-can2"});
    set.push_back({GoalKind::Navigate, Target::Bin, 0, "move-to-trashbin1"});
    set.push_back({GoalKind::Navigate, Target::Bin, 1, "move-to-trashbin2"});
  } else {
    set.push_back({GoalKind::Navigate, Target::OwnCan, -1, "move-to-own-can"});
    set.push_back({GoalKind::Navigate, Target::Bin, 0, "move-to-upper-bin"});
    set.push_back({GoalKind::Navigate, Target::Bin, 1, "move-to-lower-bin"});
  }
  set.push_back({GoalKind::PickUp, Target::None, -1, "pick-up"});
  set.push_back({GoalKind::PutDown, Target::None, -1, "put-down"});
  return set;
}

// Env actions a goal's low-level policy may choose from. Navigation goals get
// the five movement actions; operation goals are a single forced primitive.
inline const std::vector<int>& action_set(const Goal& g) {
  static const std::vector<int> nav = {matc::kUp, matc::kDown, matc::kLeft,
                                       matc::kRight, matc::kNoOp};
  static const std::vector<int> pick = {matc::kPickUp};
  static const std::vector<int> put = {matc::kPutDown};
  switch (g.kind) {
    case GoalKind::Navigate:
      return nav;
    case GoalKind::PickUp:
      return pick;
    case GoalKind::PutDown:
      return put;
  }
  throw ArgumentError("bad goal kind");
}

inline constexpr int kMaxActionSet = 5;

// Intrinsic observation = channel selection from the full observation:
// self, teammate, walls, then one target channel (the goal's object for
// Navigate; the union of cans / of bins for the operation goals), plus the
// agent's own carry flag.
inline constexpr int kIntrinsicChannels = 4;

inline int intrinsic_width(matc::Task t) {
  const int cells = t == matc::Task::Coordination ? 7 * 15 : 11 * 11;
  return kIntrinsicChannels * cells + 1;
}

inline Eigen::VectorXd intrinsic_observation(const Eigen::VectorXd& obs,
                                             int cells, const Goal& goal,
                                             int agent) {
  if (obs.size() != matc::kObsChannels * cells + matc::kNumAgents)
    throw DimensionError("observation size does not match cell count");
  Eigen::VectorXd v(kIntrinsicChannels * cells + 1);
  v.segment(0, cells) = obs.segment(0, cells);          // self
  v.segment(cells, cells) = obs.segment(cells, cells);  // teammate
  v.segment(2 * cells, cells) = obs.segment(6 * cells, cells);  // walls
  auto target = v.segment(3 * cells, cells);
  switch (goal.kind) {
    case GoalKind::Navigate: {
      if (goal.target == Target::Bin) {
        if (goal.index < 0 || goal.index >= 2)
          throw ReferenceError("goal references bin " + std::to_string(goal.index));
        target = obs.segment((4 + goal.index) * cells, cells);
      } else {
        const int can = resolve_can(goal, agent);
        if (can < 0 || can >= 2)
          throw ReferenceError("goal references can " + std::to_string(can));
        target = obs.segment((2 + can) * cells, cells);
      }
      break;
    }
    case GoalKind::PickUp:
      target = obs.segment(2 * cells, cells).cwiseMax(obs.segment(3 * cells, cells));
      break;
    case GoalKind::PutDown:
      target = obs.segment(4 * cells, cells).cwiseMax(obs.segment(5 * cells, cells));
      break;
  }
  v[kIntrinsicChannels * cells] = obs[matc::kObsChannels * cells];  // own carry
  return v;
}

// Success predicates, evaluated on the step the goal's agent just took.
inline bool goal_success(const Goal& goal, const matc::GridState& prev,
                         const matc::GridState& next, int agent) {
  switch (goal.kind) {
    case GoalKind::Navigate: {
      if (goal.target == Target::Bin) return next.agents[agent].pos == next.bins[goal.index];
      const int can = resolve_can(goal, agent);
      const int carrier = matc::carrier_of(next, can);
      return next.cans[can].alive && (carrier < 0 || carrier == agent) &&
             next.agents[agent].pos == next.cans[can].pos;
    }
    case GoalKind::PickUp:
      return prev.agents[agent].carrying < 0 && next.agents[agent].carrying >= 0;
    case GoalKind::PutDown:
      return prev.agents[agent].carrying >= 0 && next.agents[agent].carrying < 0;
  }
  throw ArgumentError("bad goal kind");
}

inline double intrinsic_reward(const Goal& goal, const matc::GridState& prev,
                               const matc::GridState& next, int agent) {
  return goal_success(goal, prev, next, agent) ? 1.0 : -0.01;
}

struct GoalState {
  Goal goal;
  int agent = 0;
  int start_step = 0;
  int elapsed = 0;
  bool succeeded = false;           // sticky once the predicate first holds
  std::vector<double> rewards;      // extrinsic team rewards, one per step
};

inline bool goal_terminated(const GoalState& gs, const matc::GridState& next,
                            bool episode_done) {
  if (gs.goal.kind != GoalKind::Navigate) return gs.elapsed >= 1;
  if (gs.succeeded || episode_done || gs.elapsed >= kMaxGoalLen) return true;
  if (gs.goal.target != Target::Bin) {
    // target can vanished: dumped, or walked off in the teammate's hands
    const int can = resolve_can(gs.goal, gs.agent);
    const int carrier = matc::carrier_of(next, can);
    if (!next.cans[can].alive || (carrier >= 0 && carrier != gs.agent)) return true;
  }
  return false;
}

enum class Termination { Sync, Async };

inline Termination termination_from_name(std::string_view name) {
  if (name == "sync") return Termination::Sync;
  if (name == "async") return Termination::Async;
  throw ConfigError("unknown termination '" + std::string(name) + "'");
}

// Async: every agent re-decides on its own schedule. Sync: one agent
// finishing cuts everyone's goal short so all re-decide together.
inline std::array<bool, matc::kNumAgents> termination_controller(
    Termination mode, const std::array<GoalState, matc::kNumAgents>& states,
    const matc::GridState& next, bool episode_done) {
  std::array<bool, matc::kNumAgents> flags{};
  bool any = false;
  for (int i = 0; i < matc::kNumAgents; ++i) {
    flags[i] = goal_terminated(states[i], next, episode_done);
    any = any || flags[i];
  }
  if (mode == Termination::Sync && any) flags.fill(true);
  return flags;
}

}  // namespace hmarl::goals
