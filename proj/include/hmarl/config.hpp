#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "hmarl/errors.hpp"
#include "hmarl/goals.hpp"
#include "hmarl/matc.hpp"

namespace hmarl::config {

enum class Architecture { IlDqn, LowLevelOnly, HIl, HComm, HQmix };
enum class ReplayMode { Uniform, Acer };

inline const char* arch_name(Architecture a) {
  switch (a) {
    case Architecture::IlDqn: return "il-dqn";
    case Architecture::LowLevelOnly: return "low-level-only";
    case Architecture::HIl: return "h-il";
    case Architecture::HComm: return "h-comm";
    case Architecture::HQmix: return "h-qmix";
  }
  throw ArgumentError("bad architecture enum");
}

inline Architecture arch_from_name(std::string_view name) {
  if (name == "il-dqn") return Architecture::IlDqn;
  if (name == "low-level-only") return Architecture::LowLevelOnly;
  if (name == "h-il") return Architecture::HIl;
  if (name == "h-comm") return Architecture::HComm;
  if (name == "h-qmix") return Architecture::HQmix;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

inline const char* replay_name(ReplayMode r) {
  return r == ReplayMode::Uniform ? "uniform" : "acer";
}

inline ReplayMode replay_from_name(std::string_view name) {
  if (name == "uniform") return ReplayMode::Uniform;
  if (name == "acer") return ReplayMode::Acer;
  throw ConfigError("unknown replay mode '" + std::string(name) + "'");
}

inline const char* termination_name(goals::Termination t) {
  return t == goals::Termination::Sync ? "sync" : "async";
}

// Defaults are the full hierarchical independent-learner setup on the Room
// task. The flat learner swaps in its own gamma and buffer size at parse
// time when those keys are not set explicitly.
struct ExperimentConfig {
  matc::Task task = matc::Task::Room;
  Architecture architecture = Architecture::HIl;
  goals::Termination termination = goals::Termination::Async;
  ReplayMode replay = ReplayMode::Uniform;
  int stride = 1;
  double gamma_high = 0.95;
  double gamma_low = 0.9;
  double lr_high = 0.00025;
  double lr_low = 0.0005;
  long buffer_high = 5000;
  long buffer_low = 5000;
  long warmup_updates = 50000;
  long update_every = 20;
  long eps_low_updates = 10000;
  long eps_high_updates = 100000;
  long target_sync = 500;
  int trials = 5;
  long episodes = 30000;
  std::uint64_t seed = 1;
  int batch_size = 32;
};

inline void validate(const ExperimentConfig& c) {
  const auto bad = [](const std::string& field) {
    throw ConfigError("config field out of range: " + field);
  };
  if (c.stride < 1) bad("stride");
  if (!(c.gamma_high > 0.0) || c.gamma_high > 1.0) bad("gamma_high");
  if (!(c.gamma_low > 0.0) || c.gamma_low > 1.0) bad("gamma_low");
  if (!(c.lr_high > 0.0)) bad("lr_high");
  if (!(c.lr_low > 0.0)) bad("lr_low");
  if (c.buffer_high < 1) bad("buffer_high");
  if (c.buffer_low < 1) bad("buffer_low");
  if (c.warmup_updates < 0) bad("warmup_updates");
  if (c.update_every < 1) bad("update_every");
  if (c.eps_low_updates < 1) bad("eps_low_updates");
  if (c.eps_high_updates < 1) bad("eps_high_updates");
  if (c.target_sync < 1) bad("target_sync");
  if (c.trials < 1) bad("trials");
  if (c.episodes < 1) bad("episodes");
  if (c.batch_size < 1) bad("batch_size");
  // A batch larger than a buffer can never be sampled, which would stall the
  // update cadence forever.
  if (c.batch_size > c.buffer_low || c.batch_size > c.buffer_high)
    bad("batch_size");
  if (c.replay == ReplayMode::Acer && (c.architecture == Architecture::IlDqn ||
                                       c.architecture == Architecture::HQmix ||
                                       c.architecture == Architecture::LowLevelOnly))
    throw ConfigError(
        "config field out of range: replay (acer applies only to h-il and "
        "h-comm)");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw ConfigError("invalid number for key '" + std::string(key) + "': '" +
                      std::string(v) + "'");
  return out;
}

inline long parse_long(std::string_view key, std::string_view v) {
  long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw ConfigError("invalid integer for key '" + std::string(key) + "': '" +
                      std::string(v) + "'");
  return out;
}

inline std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw ConfigError("invalid integer for key '" + std::string(key) + "': '" +
                      std::string(v) + "'");
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

inline ExperimentConfig parse_string(std::string_view text) {
  ExperimentConfig c;
  std::set<std::string, std::less<>> seen;
  std::string line;
  std::istringstream in{std::string(text)};
  while (std::getline(in, line)) {
    const std::string_view stripped = detail::trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("malformed config line (expected key=value): '" +
                        std::string(stripped) + "'");
    const std::string key{detail::trim(stripped.substr(0, eq))};
    const std::string_view val = detail::trim(stripped.substr(eq + 1));
    if (!seen.insert(key).second)
      throw ConfigError("duplicate key '" + key + "'");

    if (key == "task") c.task = matc::task_from_name(val);
    else if (key == "architecture") c.architecture = arch_from_name(val);
    else if (key == "termination") c.termination = goals::termination_from_name(val);
    else if (key == "replay") c.replay = replay_from_name(val);
    else if (key == "stride") c.stride = static_cast<int>(detail::parse_long(key, val));
    else if (key == "gamma_high") c.gamma_high = detail::parse_double(key, val);
    else if (key == "gamma_low") c.gamma_low = detail::parse_double(key, val);
    else if (key == "lr_high") c.lr_high = detail::parse_double(key, val);
    else if (key == "lr_low") c.lr_low = detail::parse_double(key, val);
    else if (key == "buffer_high") c.buffer_high = detail::parse_long(key, val);
    else if (key == "buffer_low") c.buffer_low = detail::parse_long(key, val);
    else if (key == "warmup_updates") c.warmup_updates = detail::parse_long(key, val);
    else if (key == "update_every") c.update_every = detail::parse_long(key, val);
    else if (key == "eps_low_updates") c.eps_low_updates = detail::parse_long(key, val);
    else if (key == "eps_high_updates") c.eps_high_updates = detail::parse_long(key, val);
    else if (key == "target_sync") c.target_sync = detail::parse_long(key, val);
    else if (key == "trials") c.trials = static_cast<int>(detail::parse_long(key, val));
    else if (key == "episodes") c.episodes = detail::parse_long(key, val);
    else if (key == "seed") c.seed = detail::parse_u64(key, val);
    else if (key == "batch_size") c.batch_size = static_cast<int>(detail::parse_long(key, val));
    else throw ConfigError("unknown key '" + key + "'");
  }

  if (c.architecture == Architecture::IlDqn) {
    if (!seen.count("gamma_high")) c.gamma_high = 0.99;
    if (!seen.count("buffer_high")) c.buffer_high = 10000;
  }
  validate(c);
  return c;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_string(text.str());
}

// Canonical form: every key, fixed order, shortest round-trip numbers.
inline std::string serialize(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "task=" << matc::task_name(c.task) << '\n'
      << "architecture=" << arch_name(c.architecture) << '\n'
      << "termination=" << termination_name(c.termination) << '\n'
      << "replay=" << replay_name(c.replay) << '\n'
      << "stride=" << c.stride << '\n'
      << "gamma_high=" << detail::format_double(c.gamma_high) << '\n'
      << "gamma_low=" << detail::format_double(c.gamma_low) << '\n'
      << "lr_high=" << detail::format_double(c.lr_high) << '\n'
      << "lr_low=" << detail::format_double(c.lr_low) << '\n'
      << "buffer_high=" << c.buffer_high << '\n'
      << "buffer_low=" << c.buffer_low << '\n'
      << "warmup_updates=" << c.warmup_updates << '\n'
      << "update_every=" << c.update_every << '\n'
      << "eps_low_updates=" << c.eps_low_updates << '\n'
      << "eps_high_updates=" << c.eps_high_updates << '\n'
      << "target_sync=" << c.target_sync << '\n'
      << "trials=" << c.trials << '\n'
      << "episodes=" << c.episodes << '\n'
      << "seed=" << c.seed << '\n'
      << "batch_size=" << c.batch_size << '\n';
  return out.str();
}

}  // namespace hmarl::config
