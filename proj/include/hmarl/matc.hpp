#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hmarl/errors.hpp"

namespace hmarl::matc {

enum class Task { Room, Ring, Coordination };
inline constexpr int kNumAgents = 2;

// Primitive action indices, fixed across every task.
enum Action : int {
  kUp = 0,
  kDown = 1,
  kLeft = 2,
  kRight = 3,
  kNoOp = 4,
  kPickUp = 5,
  kPutDown = 6,
};
inline constexpr int kNumActions = 7;

inline int horizon(Task t) { return t == Task::Coordination ? 50 : 100; }

inline std::string_view task_name(Task t) {
  switch (t) {
    case Task::Room:
      return "room";
    case Task::Ring:
      return "ring";
    case Task::Coordination:
      return "coordination";
  }
  throw ArgumentError("bad task enum");
}

inline Task task_from_name(std::string_view name) {
  if (name == "room") return Task::Room;
  if (name == "ring") return Task::Ring;
  if (name == "coordination") return Task::Coordination;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

struct Pos {
  int row = 0;
  int col = 0;
  friend bool operator==(const Pos&, const Pos&) = default;
};

struct Can {
  Pos pos;
  bool alive = true;
};

struct AgentState {
  Pos pos;
  int carrying = -1;  // can index, -1 when empty-handed
};

struct MapData {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> walls;  // row-major
  std::array<Pos, kNumAgents> agents;
  std::vector<Pos> cans;
  std::vector<Pos> bins;  // all 'B' cells in scan order, then all 'b' cells
  int upper_bins = 0;     // how many leading entries of bins came from 'B'
};

// First line "rows cols", then the grid. '#' wall, '.' floor, 'c' can,
// 'B'/'b' bins (Coordination's upper/lower), '1'/'2' agent starts.
inline MapData parse_map(const std::string& text) {
  std::istringstream in(text);
  MapData map;
  std::string line;
  if (!std::getline(in, line))
    throw ConfigError("map: missing 'rows cols' header line");
  {
    std::istringstream hdr(line);
    if (!(hdr >> map.rows >> map.cols) || map.rows <= 0 || map.cols <= 0)
      throw ConfigError("map: bad header line '" + line + "'");
  }
  map.walls.assign(static_cast<std::size_t>(map.rows) * map.cols, 0);
  std::vector<Pos> upper, lower;
  int seen1 = 0, seen2 = 0;
  for (int r = 0; r < map.rows; ++r) {
    if (!std::getline(in, line))
      throw ConfigError("map: expected " + std::to_string(map.rows) +
                        " grid rows, got " + std::to_string(r));
    if (static_cast<int>(line.size()) != map.cols)
      throw ConfigError("map: row " + std::to_string(r) + " has length " +
                        std::to_string(line.size()) + ", expected " +
                        std::to_string(map.cols));
    for (int c = 0; c < map.cols; ++c) {
      const Pos p{r, c};
      switch (line[c]) {
        case '#':
          map.walls[static_cast<std::size_t>(r) * map.cols + c] = 1;
          break;
        case '.':
          break;
        case 'c':
          map.cans.push_back(p);
          break;
        case 'B':
          upper.push_back(p);
          break;
        case 'b':
          lower.push_back(p);
          break;
        case '1':
          map.agents[0] = p;
          ++seen1;
          break;
        case '2':
          map.agents[1] = p;
          ++seen2;
          break;
        default:
          throw ConfigError(std::string("map: unknown character '") + line[c] +
                            "' at row " + std::to_string(r) + " col " +
                            std::to_string(c));
      }
    }
  }
  while (std::getline(in, line))
    if (!line.empty())
      throw ConfigError("map: trailing content after grid: '" + line + "'");
  if (seen1 != 1 || seen2 != 1)
    throw ConfigError("map: need exactly one '1' and one '2' start cell");
  if (map.cans.empty()) throw ConfigError("map: no cans");
  if (upper.empty() && lower.empty()) throw ConfigError("map: no bins");
  map.upper_bins = static_cast<int>(upper.size());
  map.bins = std::move(upper);
  map.bins.insert(map.bins.end(), lower.begin(), lower.end());
  return map;
}

// Layouts read off the task figures; data/maps/*.map hold byte-identical
// copies for eyeballing, asserted equal in the tests.
inline const std::string& map_text(Task t) {
  static const std::string room =
      "11 11\n"
      "###########\n"
      "#....#....#\n"
      "#.1..#..2.#\n"
      "#....#....#\n"
      "#..c.#.c..#\n"
      "#....#....#\n"
      "#.........#\n"
      "#....#....#\n"
      "#..B.#.B..#\n"
      "#....#....#\n"
      "###########\n";
  static const std::string ring =
      "11 11\n"
      "###########\n"
      "#1.......2#\n"
      "#.#######.#\n"
      "#.#######.#\n"
      "#.#######.#\n"
      "#c#######c#\n"
      "#.#######.#\n"
      "#.#######.#\n"
      "#.#######.#\n"
      "#..B...B..#\n"
      "###########\n";
  static const std::string coordination =
      "7 15\n"
      "###############\n"
      "#......B......#\n"
      "#.............#\n"
      "#.1..c...c..2.#\n"
      "#.............#\n"
      "#......b......#\n"
      "###############\n";
  switch (t) {
    case Task::Room:
      return room;
    case Task::Ring:
      return ring;
    case Task::Coordination:
      return coordination;
  }
  throw ArgumentError("bad task enum");
}

struct GridState {
  Task task = Task::Room;
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> walls;
  std::vector<Can> cans;
  std::vector<Pos> bins;
  int upper_bins = 0;
  std::array<AgentState, kNumAgents> agents;
  int step = 0;
  bool done = false;

  bool wall(Pos p) const {
    return walls[static_cast<std::size_t>(p.row) * cols + p.col] != 0;
  }
  bool in_grid(Pos p) const {
    return p.row >= 0 && p.row < rows && p.col >= 0 && p.col < cols;
  }
};

inline int carrier_of(const GridState& s, int can) {
  for (int i = 0; i < kNumAgents; ++i)
    if (s.agents[i].carrying == can) return i;
  return -1;
}

inline int bin_at(const GridState& s, Pos p) {
  for (std::size_t b = 0; b < s.bins.size(); ++b)
    if (s.bins[b] == p) return static_cast<int>(b);
  return -1;
}

// Dynamics are fully deterministic; the seed parameter exists for interface
// symmetry and is unused.
inline GridState reset(Task task, std::uint64_t /*seed*/ = 0) {
  const MapData map = parse_map(map_text(task));
  const int want_upper = task == Task::Coordination ? 1 : 2;
  if (map.cans.size() != 2 || map.bins.size() != 2 ||
      map.upper_bins != want_upper)
    throw ConfigError("map for " + std::string(task_name(task)) +
                      " must have 2 cans and 2 bins of the right kinds");
  GridState s;
  s.task = task;
  s.rows = map.rows;
  s.cols = map.cols;
  s.walls = map.walls;
  for (Pos p : map.cans) s.cans.push_back({p, true});
  s.bins = map.bins;
  s.upper_bins = map.upper_bins;
  for (int i = 0; i < kNumAgents; ++i) s.agents[i] = {map.agents[i], -1};
  return s;
}

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

// Simultaneous step: all moves resolve first (illegal ones are no-ops,
// co-occupancy allowed), carried cans follow their carriers, then pick-up /
// put-down resolve in agent order (the lower index wins contested pick-ups).
inline StepResult step(GridState& s, const std::array<int, kNumAgents>& actions) {
  if (s.done) throw StateError("step() on a finished episode");
  for (int a : actions)
    if (a < 0 || a >= kNumActions)
      throw ArgumentError("action index " + std::to_string(a) + " out of range");

  for (int i = 0; i < kNumAgents; ++i) {
    Pos p = s.agents[i].pos;
    switch (actions[i]) {
      case kUp:
        p.row -= 1;
        break;
      case kDown:
        p.row += 1;
        break;
      case kLeft:
        p.col -= 1;
        break;
      case kRight:
        p.col += 1;
        break;
      default:
        break;
    }
    if (s.in_grid(p) && !s.wall(p)) s.agents[i].pos = p;
  }
  for (int i = 0; i < kNumAgents; ++i)
    if (s.agents[i].carrying >= 0)
      s.cans[s.agents[i].carrying].pos = s.agents[i].pos;

  int dumps_now = 0;
  for (int i = 0; i < kNumAgents; ++i) {
    AgentState& ag = s.agents[i];
    if (actions[i] == kPickUp && ag.carrying < 0) {
      for (std::size_t k = 0; k < s.cans.size(); ++k) {
        if (s.cans[k].alive && carrier_of(s, static_cast<int>(k)) < 0 &&
            s.cans[k].pos == ag.pos) {
          ag.carrying = static_cast<int>(k);
          break;
        }
      }
    } else if (actions[i] == kPutDown && ag.carrying >= 0) {
      Can& can = s.cans[ag.carrying];
      ag.carrying = -1;
      can.pos = ag.pos;
      if (bin_at(s, ag.pos) >= 0) {
        can.alive = false;
        ++dumps_now;
      }
    }
  }

  int dumped_total = 0;
  for (const Can& c : s.cans)
    if (!c.alive) ++dumped_total;

  double reward = 0.0;
  if (s.task != Task::Coordination) {
    reward = 0.5 * dumps_now;
  } else if (dumps_now > 0 && dumped_total == static_cast<int>(s.cans.size())) {
    // single payout at the second dump, by where the two cans ended up
    int upper = 0;
    for (const Can& c : s.cans)
      if (bin_at(s, c.pos) < s.upper_bins) ++upper;
    if (upper == 2)
      reward = 1.0;
    else if (upper == 0)
      reward = 0.5;
    else
      reward = 0.1;
  }

  s.step += 1;
  s.done = s.step >= horizon(s.task) ||
           dumped_total == static_cast<int>(s.cans.size());
  return {reward, s.done};
}

// Observation layout (flattened row-major channels, one value per cell):
//   ch0 self, ch1 teammate, ch2..3 cans, ch4..5 bins, ch6 walls,
// then two carry flags (self first). Carried cans show at the carrier's cell.
inline constexpr int kObsChannels = 7;

inline int obs_width(Task t) {
  const int cells = t == Task::Coordination ? 7 * 15 : 11 * 11;
  return kObsChannels * cells + kNumAgents;
}

inline Eigen::VectorXd observe(const GridState& s, int agent) {
  if (agent < 0 || agent >= kNumAgents) throw ArgumentError("bad agent index");
  const int cells = s.rows * s.cols;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kObsChannels * cells + kNumAgents);
  auto at = [&](int channel, Pos p) -> double& {
    return v[channel * cells + p.row * s.cols + p.col];
  };
  at(0, s.agents[agent].pos) = 1.0;
  at(1, s.agents[1 - agent].pos) = 1.0;
  for (int k = 0; k < 2; ++k)
    if (s.cans[k].alive) at(2 + k, s.cans[k].pos) = 1.0;
  for (int b = 0; b < 2; ++b) at(4 + b, s.bins[b]) = 1.0;
  for (int r = 0; r < s.rows; ++r)
    for (int c = 0; c < s.cols; ++c)
      if (s.wall({r, c})) at(6, {r, c}) = 1.0;
  v[kObsChannels * cells] = s.agents[agent].carrying >= 0 ? 1.0 : 0.0;
  v[kObsChannels * cells + 1] = s.agents[1 - agent].carrying >= 0 ? 1.0 : 0.0;
  return v;
}

// Cell precedence: agents over cans over bins over walls. Agents render as
// their digit, or '!' / '@' (shifted 1 / 2) while carrying.
inline std::string render_ascii(const GridState& s) {
  std::string out;
  out.reserve(static_cast<std::size_t>(s.rows) * (s.cols + 1));
  for (int r = 0; r < s.rows; ++r) {
    for (int c = 0; c < s.cols; ++c) {
      const Pos p{r, c};
      char ch = s.wall(p) ? '#' : '.';
      for (int b = static_cast<int>(s.bins.size()) - 1; b >= 0; --b)
        if (s.bins[b] == p) ch = b < s.upper_bins ? 'B' : 'b';
      for (int k = static_cast<int>(s.cans.size()) - 1; k >= 0; --k)
        if (s.cans[k].alive && carrier_of(s, k) < 0 && s.cans[k].pos == p)
          ch = 'c';
      for (int i = kNumAgents - 1; i >= 0; --i)
        if (s.agents[i].pos == p)
          ch = s.agents[i].carrying >= 0 ? "!@"[i] : "12"[i];
      out += ch;
    }
    out += '\n';
  }
  return out;
}

}  // namespace hmarl::matc
