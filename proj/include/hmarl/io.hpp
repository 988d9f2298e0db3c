#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hmarl/config.hpp"
#include "hmarl/harness.hpp"
#include "hmarl/net.hpp"

namespace hmarl::io {

inline constexpr std::string_view kToolVersion = "0.1.0";

namespace detail {

using config::detail::format_double;

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

inline void close_checked(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

// CSVs here are plain: no quoting, fixed column counts.
inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline IoError csv_error(const std::filesystem::path& path, long line_no,
                         const std::string& what) {
  return IoError(path.string() + " line " + std::to_string(line_no) + ": " +
                 what);
}

inline double csv_double(std::string_view field, const std::filesystem::path& p,
                         long line_no) {
  double v = 0.0;
  const auto r = std::from_chars(field.data(), field.data() + field.size(), v);
  if (r.ec != std::errc{} || r.ptr != field.data() + field.size())
    throw csv_error(p, line_no, "bad number '" + std::string(field) + "'");
  return v;
}

inline long csv_long(std::string_view field, const std::filesystem::path& p,
                     long line_no) {
  long v = 0;
  const auto r = std::from_chars(field.data(), field.data() + field.size(), v);
  if (r.ec != std::errc{} || r.ptr != field.data() + field.size())
    throw csv_error(p, line_no, "bad integer '" + std::string(field) + "'");
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Metric files

inline constexpr std::string_view kMetricsHeader =
    "episode,reward,steps,epsilon_high,epsilon_low,loss_high,loss_low";
inline constexpr std::string_view kAggregateHeader =
    "episode,mean_reward,std_reward,mean_steps,std_steps";

inline void write_metrics_csv(const std::filesystem::path& path,
                              const harness::TrialMetrics& m) {
  auto out = detail::open_out(path);
  out << kMetricsHeader << '\n';
  for (std::size_t i = 0; i < m.reward.size(); ++i)
    out << (i + 1) << ',' << detail::format_double(m.reward[i]) << ','
        << m.steps[i] << ',' << detail::format_double(m.eps_high[i]) << ','
        << detail::format_double(m.eps_low[i]) << ','
        << detail::format_double(m.loss_high[i]) << ','
        << detail::format_double(m.loss_low[i]) << '\n';
  detail::close_checked(out, path);
}

struct AggregateRow {
  long episode = 0;
  double mean_reward = 0.0, std_reward = 0.0;
  double mean_steps = 0.0, std_steps = 0.0;
};

// Episode-aligned mean and population standard deviation across trials.
inline std::vector<AggregateRow> aggregate(
    const std::vector<const harness::TrialMetrics*>& trials) {
  if (trials.empty()) throw ArgumentError("nothing to aggregate");
  const std::size_t n = trials[0]->reward.size();
  for (const auto* t : trials)
    if (t->reward.size() != n)
      throw AlignmentError("trials disagree on the episode count");

  const double k = static_cast<double>(trials.size());
  std::vector<AggregateRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    AggregateRow& row = rows[i];
    row.episode = static_cast<long>(i) + 1;
    for (const auto* t : trials) {
      row.mean_reward += t->reward[i];
      row.mean_steps += static_cast<double>(t->steps[i]);
    }
    row.mean_reward /= k;
    row.mean_steps /= k;
    for (const auto* t : trials) {
      const double dr = t->reward[i] - row.mean_reward;
      const double ds = static_cast<double>(t->steps[i]) - row.mean_steps;
      row.std_reward += dr * dr;
      row.std_steps += ds * ds;
    }
    row.std_reward = std::sqrt(row.std_reward / k);
    row.std_steps = std::sqrt(row.std_steps / k);
  }
  return rows;
}

inline void write_aggregate_csv(const std::filesystem::path& path,
                                const std::vector<AggregateRow>& rows) {
  auto out = detail::open_out(path);
  out << kAggregateHeader << '\n';
  for (const AggregateRow& r : rows)
    out << r.episode << ',' << detail::format_double(r.mean_reward) << ','
        << detail::format_double(r.std_reward) << ','
        << detail::format_double(r.mean_steps) << ','
        << detail::format_double(r.std_steps) << '\n';
  detail::close_checked(out, path);
}

inline std::vector<AggregateRow> read_aggregate_csv(
    const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != kAggregateHeader)
    throw detail::csv_error(path, 1,
                            "expected header '" + std::string(kAggregateHeader) +
                                "'");
  std::vector<AggregateRow> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != 5)
      throw detail::csv_error(path, line_no, "expected 5 fields");
    AggregateRow r;
    r.episode = detail::csv_long(fields[0], path, line_no);
    r.mean_reward = detail::csv_double(fields[1], path, line_no);
    r.std_reward = detail::csv_double(fields[2], path, line_no);
    r.mean_steps = detail::csv_double(fields[3], path, line_no);
    r.std_steps = detail::csv_double(fields[4], path, line_no);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Saved greedy rollouts; replayed by the render subcommand.

inline void write_trajectory(const std::filesystem::path& path,
                             const harness::Trajectory& tr) {
  auto out = detail::open_out(path);
  out << "hmarl-trajectory v1\n";
  out << "task " << matc::task_name(tr.task) << '\n';
  out << "steps " << tr.steps << '\n';
  out << "reward " << detail::format_double(tr.total_reward) << '\n';
  for (std::size_t i = 0; i < tr.frames.size(); ++i)
    out << "frame " << i << '\n' << tr.frames[i];
  detail::close_checked(out, path);
}

inline harness::Trajectory read_trajectory(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  const auto expect = [&](std::string_view prefix) {
    std::string line;
    if (!std::getline(in, line) || !line.starts_with(prefix))
      throw IoError(path.string() + ": expected '" + std::string(prefix) +
                    "' header line");
    return line.substr(prefix.size());
  };
  if (!expect("hmarl-trajectory v1").empty())
    throw IoError(path.string() + ": unsupported trajectory version");

  harness::Trajectory tr;
  tr.task = matc::task_from_name(expect("task "));
  tr.steps = std::stol(expect("steps "));
  tr.total_reward = std::stod(expect("reward "));

  std::string line;
  while (std::getline(in, line)) {
    if (line.starts_with("frame "))
      tr.frames.emplace_back();
    else if (tr.frames.empty())
      throw IoError(path.string() + ": grid row before the first frame marker");
    else
      tr.frames.back() += line + '\n';
  }
  if (tr.frames.size() != static_cast<std::size_t>(tr.steps) + 1)
    throw IoError(path.string() + ": frame count does not match the step count");
  return tr;
}

// ---------------------------------------------------------------------------
// Checkpoints: flat parameter dump, one shortest-round-trip value per line.

inline void write_checkpoint(const std::filesystem::path& path,
                             const net::Graph& g) {
  auto out = detail::open_out(path);
  const auto params = g.parameters();
  out << "hmarl-checkpoint v1 " << params.size() << '\n';
  for (const double v : params) out << detail::format_double(v) << '\n';
  detail::close_checked(out, path);
}

inline void read_checkpoint(const std::filesystem::path& path, net::Graph& g) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("hmarl-checkpoint v1 "))
    throw IoError(path.string() + ": not a checkpoint file");
  const std::size_t count = std::stoul(line.substr(20));
  const auto params = g.parameters();
  if (count != params.size())
    throw DimensionError("checkpoint holds " + std::to_string(count) +
                         " parameters, graph expects " +
                         std::to_string(params.size()));
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line))
      throw IoError(path.string() + ": truncated checkpoint");
    params[i] = detail::csv_double(line, path, static_cast<long>(i) + 2);
  }
}

// ---------------------------------------------------------------------------
// Run manifest

inline std::string timestamp_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  config::ExperimentConfig config;
  std::vector<std::string> goal_names;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> trial_files;  // paths relative to the manifest
  std::string aggregate_file;
  std::vector<std::string> checkpoint_files;
  std::string trajectory_file;
  std::string started;
  std::string finished;                 // empty until finalized
  std::string status = "running";      // running | complete | failed
  std::vector<std::string> trial_errors;
};

inline nlohmann::ordered_json config_json(const config::ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["task"] = matc::task_name(c.task);
  j["architecture"] = config::arch_name(c.architecture);
  j["termination"] = config::termination_name(c.termination);
  j["replay"] = config::replay_name(c.replay);
  j["stride"] = c.stride;
  j["gamma_high"] = c.gamma_high;
  j["gamma_low"] = c.gamma_low;
  j["lr_high"] = c.lr_high;
  j["lr_low"] = c.lr_low;
  j["buffer_high"] = c.buffer_high;
  j["buffer_low"] = c.buffer_low;
  j["warmup_updates"] = c.warmup_updates;
  j["update_every"] = c.update_every;
  j["eps_low_updates"] = c.eps_low_updates;
  j["eps_high_updates"] = c.eps_high_updates;
  j["target_sync"] = c.target_sync;
  j["trials"] = c.trials;
  j["episodes"] = c.episodes;
  j["seed"] = c.seed;
  j["batch_size"] = c.batch_size;
  return j;
}

inline nlohmann::ordered_json manifest_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool"] = "hmarl";
  j["version"] = std::string(kToolVersion);
  j["status"] = m.status;
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["config"] = config_json(m.config);
  j["goal_set"] = m.goal_names;
  j["seeds"] = m.seeds;
  j["artifacts"]["trials"] = m.trial_files;
  j["artifacts"]["aggregate"] = m.aggregate_file;
  j["artifacts"]["checkpoints"] = m.checkpoint_files;
  j["artifacts"]["trajectory"] = m.trajectory_file;
  j["trial_errors"] = m.trial_errors;
  return j;
}

inline void write_manifest(const std::filesystem::path& path,
                           const RunManifest& m) {
  auto out = detail::open_out(path);
  out << manifest_json(m).dump(2) << '\n';
  detail::close_checked(out, path);
}

}  // namespace hmarl::io
