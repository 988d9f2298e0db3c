#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "hmarl/replay.hpp"
#include "hmarl/rng.hpp"
#include "support/stats.hpp"

using namespace hmarl;
using namespace hmarl::replay;
using Eigen::VectorXd;

namespace {

VectorXd tag(double v) { return VectorXd::Constant(1, v); }

HighLevelTransition make_hlt(int start, int tau, int goal,
                             const std::vector<double>& team, bool done,
                             int agent = 0) {
  HighLevelTransition t;
  t.start = start;
  t.tau = tau;
  t.goal = goal;
  t.rewards.assign(team.begin() + start, team.begin() + start + tau);
  t.obs = tag(start);
  t.next_obs = tag(start + tau);
  t.done = done;
  t.agent = agent;
  return t;
}

std::vector<VectorXd> trail_for(const HighLevelTransition& t) {
  std::vector<VectorXd> trail;
  for (int k = 0; k < t.tau; ++k) trail.push_back(tag(t.start + k));
  return trail;
}

std::vector<HighLevelTransition> random_stream(Rng& rng, int T,
                                               const std::vector<double>& team) {
  std::vector<HighLevelTransition> out;
  int t = 0;
  while (t < T) {
    const int tau = 1 + rng.uniform_int(std::min(15, T - t));
    out.push_back(make_hlt(t, tau, rng.uniform_int(6), team, t + tau == T));
    t += tau;
  }
  return out;
}

}  // namespace

TEST_CASE("augment expands a transition into suffix views") {
  std::vector<double> team = {0.1, 0.2, 0.3, 0.4, 0.5};

  SECTION("tau=3, stride=1") {
    const HighLevelTransition t = make_hlt(0, 3, 2, team, true, 1);
    const auto subs = augment(t, 1, trail_for(t));
    REQUIRE(subs.size() == 3);
    CHECK(subs[0].residual == 3);
    CHECK(subs[1].residual == 2);
    CHECK(subs[2].residual == 1);
    CHECK(subs[1].rewards == std::vector<double>{0.2, 0.3});
    CHECK(subs[2].rewards == std::vector<double>{0.3});
    for (int k = 0; k < 3; ++k) {
      CHECK(subs[k].obs[0] == k);            // trail observation at t+k
      CHECK(subs[k].next_obs[0] == 3.0);     // shared endpoint
      CHECK(subs[k].goal == 2);              // original goal kept
      CHECK(subs[k].done);
      CHECK(subs[k].agent == 1);
    }
  }
  SECTION("tau=1 degenerates to the original") {
    const HighLevelTransition t = make_hlt(2, 1, 4, team, false);
    const auto subs = augment(t, 1, trail_for(t));
    REQUIRE(subs.size() == 1);
    CHECK(subs[0].residual == 1);
    CHECK(subs[0].rewards == t.rewards);
    CHECK(subs[0].obs[0] == t.obs[0]);
  }
  SECTION("tau=5, stride=2 interpolates at intervals") {
    const HighLevelTransition t = make_hlt(0, 5, 0, team, false);
    const auto subs = augment(t, 2, trail_for(t));
    REQUIRE(subs.size() == 3);
    CHECK(subs[0].residual == 5);
    CHECK(subs[1].residual == 3);
    CHECK(subs[2].residual == 1);
    CHECK(subs[1].obs[0] == 2.0);
  }
  SECTION("count equals tau for stride 1, for every legal tau") {
    std::vector<double> longteam(20, 0.0);
    for (int tau = 1; tau <= 15; ++tau) {
      const HighLevelTransition t = make_hlt(0, tau, 0, longteam, false);
      CHECK(augment(t, 1, trail_for(t)).size() == static_cast<std::size_t>(tau));
    }
  }
  SECTION("validation") {
    HighLevelTransition t = make_hlt(0, 3, 0, team, false);
    CHECK_THROWS_AS(augment(t, 0, trail_for(t)), ArgumentError);
    CHECK_THROWS_AS(augment(t, 1, {}), ArgumentError);
    t.rewards.pop_back();
    CHECK_THROWS_AS(augment(t, 1, trail_for(t)), ArgumentError);
  }
}

TEST_CASE("uniform buffer ring semantics") {
  UniformBuffer<int> buf(3);
  CHECK_THROWS_AS(UniformBuffer<int>(0), ArgumentError);
  for (int i = 1; i <= 5; ++i) buf.push(i);
  REQUIRE(buf.size() == 3);
  CHECK(buf.at(0) == 3);  // oldest survivor
  CHECK(buf.at(1) == 4);
  CHECK(buf.at(2) == 5);
}

TEST_CASE("uniform buffer sampling") {
  UniformBuffer<int> buf(16);
  for (int i = 0; i < 10; ++i) buf.push(i);
  Rng rng(5);

  SECTION("underfull request") {
    CHECK_THROWS_AS(buf.sample(11, rng), UnderfullError);
  }
  SECTION("batch == size is a permutation") {
    auto all = buf.sample(10, rng);
    std::vector<int> got;
    for (const int* p : all) got.push_back(*p);
    std::sort(got.begin(), got.end());
    CHECK(got == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  }
  SECTION("without replacement within a batch") {
    for (int trial = 0; trial < 100; ++trial) {
      auto s = buf.sample(6, rng);
      std::vector<const int*> uniq(s);
      std::sort(uniq.begin(), uniq.end());
      CHECK(std::adjacent_find(uniq.begin(), uniq.end()) == uniq.end());
    }
  }
  SECTION("selection frequencies are uniform") {
    std::vector<long> counts(10, 0);
    for (int trial = 0; trial < 10000; ++trial)
      for (const int* p : buf.sample(3, rng)) counts[*p] += 1;
    CHECK(hmarl::testing::uniform_at_p01(counts));
  }
  SECTION("deterministic under a fixed rng") {
    Rng a(9), b(9);
    auto sa = buf.sample(4, a);
    auto sb = buf.sample(4, b);
    for (std::size_t i = 0; i < 4; ++i) CHECK(*sa[i] == *sb[i]);
  }
}

namespace {
SubTransition make_sub(int goal, int residual, double obs_tag) {
  SubTransition s;
  s.goal = goal;
  s.residual = residual;
  s.rewards.assign(residual, 0.25);
  s.obs = tag(obs_tag);
  s.next_obs = tag(obs_tag + residual);
  return s;
}
}  // namespace

TEST_CASE("aligned buffer keeps agents in lockstep") {
  AlignedBuffer buf(8, 2);

  SECTION("push and sample share slots") {
    for (long t = 0; t < 5; ++t)
      buf.push_concurrent(t, {make_sub(0, 1, t), make_sub(1, 2, t + 100)});
    Rng rng(3);
    const auto slots = buf.sample_concurrent(3, rng);
    for (const auto* s : slots) {
      REQUIRE(s->entries.size() == 2);
      CHECK(s->entries[0].obs[0] + 100 == s->entries[1].obs[0]);  // same timestep
    }
  }
  SECTION("missing agent entry") {
    CHECK_THROWS_AS(buf.push_concurrent(0, {make_sub(0, 1, 0), std::nullopt}),
                    AlignmentError);
    CHECK_THROWS_AS(buf.push_concurrent(0, {make_sub(0, 1, 0)}), AlignmentError);
  }
  SECTION("timesteps must advance") {
    buf.push_concurrent(4, {make_sub(0, 1, 0), make_sub(0, 1, 0)});
    CHECK_THROWS_AS(buf.push_concurrent(4, {make_sub(0, 1, 0), make_sub(0, 1, 0)}),
                    AlignmentError);
    CHECK_THROWS_AS(buf.push_concurrent(1, {make_sub(0, 1, 0), make_sub(0, 1, 0)}),
                    AlignmentError);
  }
  SECTION("whole-slot FIFO eviction") {
    AlignedBuffer small(3, 2);
    for (long t = 0; t < 4; ++t)
      small.push_concurrent(t, {make_sub(0, 1, t), make_sub(0, 1, t)});
    REQUIRE(small.size() == 3);
    CHECK(small.at(0).timestep == 1);
    CHECK(small.at(2).timestep == 3);
    for (std::size_t i = 0; i < small.size(); ++i)
      CHECK(small.at(i).entries.size() == 2);  // never a partial slot
  }
  SECTION("underfull sampling") {
    Rng rng(1);
    CHECK_THROWS_AS(buf.sample_concurrent(1, rng), UnderfullError);
  }
}

TEST_CASE("aligned buffer sampling is uniform and identical across agents") {
  AlignedBuffer buf(10, 2);
  for (long t = 0; t < 10; ++t)
    buf.push_concurrent(t, {make_sub(0, 1, t), make_sub(0, 1, t)});
  Rng rng(17);

  std::vector<long> counts(10, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto slots = buf.sample_concurrent(4, rng);
    for (const auto* s : slots) {
      counts[s->timestep] += 1;
      // the slot IS the alignment: both agents' entries ride along
      CHECK(s->entries[0].obs[0] == s->entries[1].obs[0]);
    }
  }
  CHECK(hmarl::testing::uniform_at_p01(counts));

  // batch == size -> permutation of all slots
  const auto all = buf.sample_concurrent(10, rng);
  std::vector<long> ts;
  for (const auto* s : all) ts.push_back(s->timestep);
  std::sort(ts.begin(), ts.end());
  for (long t = 0; t < 10; ++t) CHECK(ts[t] == t);
}

TEST_CASE("aligned buffer with one agent matches the uniform buffer") {
  UniformBuffer<SubTransition> uni(4);
  AlignedBuffer ali(4, 1);
  Rng rng(8);
  for (long t = 0; t < 7; ++t) {
    SubTransition s = make_sub(rng.uniform_int(6), 1 + rng.uniform_int(5), t);
    uni.push(s);
    ali.push_concurrent(t, {s});
  }
  REQUIRE(uni.size() == ali.size());
  for (std::size_t i = 0; i < uni.size(); ++i) {
    CHECK(uni.at(i).goal == ali.at(i).entries[0].goal);
    CHECK(uni.at(i).residual == ali.at(i).entries[0].residual);
    CHECK(uni.at(i).obs[0] == ali.at(i).entries[0].obs[0]);
  }
}

TEST_CASE("aligned buffer dump renders one line per slot") {
  AlignedBuffer buf(4, 2);
  for (long t = 0; t < 3; ++t)
    buf.push_concurrent(t, {make_sub(1, 2, t), make_sub(3, 1, t)});
  std::ostringstream os;
  buf.dump(os);
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    long ts = -1;
    std::istringstream(line) >> ts;
    CHECK(ts == lines);
    CHECK(line.find(" | 1 2 ") != std::string::npos);
    ++lines;
  }
  CHECK(lines == 3);
}

TEST_CASE("trim reproduces the worked two-agent example") {
  // agent 1 holds one goal over [0,9); agent 2 switches at 5
  std::vector<double> team(9);
  for (int t = 0; t < 9; ++t) team[t] = 0.1 * t;
  std::array<std::vector<HighLevelTransition>, 2> streams;
  streams[0] = {make_hlt(0, 9, 7, team, true, 0)};
  streams[1] = {make_hlt(0, 5, 3, team, false, 1), make_hlt(5, 4, 4, team, true, 1)};
  std::vector<std::array<VectorXd, 2>> trail;
  for (int t = 0; t <= 9; ++t) trail.push_back({tag(t), tag(t + 100)});

  const auto joint = trim_async(streams, trail, true);
  REQUIRE(joint.size() == 2);

  CHECK(joint[0].start == 0);
  CHECK(joint[0].taus == std::array<int, 2>{5, 5});
  CHECK(joint[0].goals == std::array<int, 2>{7, 3});  // agent1's goal spans both
  CHECK(joint[0].rewards == std::vector<double>(team.begin(), team.begin() + 5));
  CHECK(joint[0].obs[0][0] == 0.0);
  CHECK(joint[0].obs[1][0] == 100.0);
  CHECK(joint[0].next_obs[0][0] == 5.0);
  CHECK(!joint[0].done);

  CHECK(joint[1].start == 5);
  CHECK(joint[1].taus == std::array<int, 2>{4, 4});
  CHECK(joint[1].goals == std::array<int, 2>{7, 4});
  CHECK(joint[1].rewards == std::vector<double>(team.begin() + 5, team.end()));
  CHECK(joint[1].done);
}

TEST_CASE("trim of synchronized streams is a zip") {
  std::vector<double> team(7, 0.5);
  std::array<std::vector<HighLevelTransition>, 2> streams;
  streams[0] = {make_hlt(0, 4, 1, team, false), make_hlt(4, 3, 2, team, true)};
  streams[1] = {make_hlt(0, 4, 5, team, false), make_hlt(4, 3, 0, team, true)};
  std::vector<std::array<VectorXd, 2>> trail;
  for (int t = 0; t <= 7; ++t) trail.push_back({tag(t), tag(t)});

  const auto joint = trim_async(streams, trail, true);
  REQUIRE(joint.size() == 2);
  CHECK(joint[0].goals == std::array<int, 2>{1, 5});
  CHECK(joint[0].taus == std::array<int, 2>{4, 4});
  CHECK(joint[1].goals == std::array<int, 2>{2, 0});
  CHECK(joint[1].start == 4);
  CHECK(joint[1].done);
}

TEST_CASE("trim partition and discounted-return composition on random episodes") {
  Rng rng(31);
  const double gamma = 0.95;
  for (int episode = 0; episode < 200; ++episode) {
    const int T = 1 + rng.uniform_int(40);
    std::vector<double> team(T);
    for (double& r : team) r = rng.uniform(-1.0, 1.0);
    std::array<std::vector<HighLevelTransition>, 2> streams = {
        random_stream(rng, T, team), random_stream(rng, T, team)};
    std::vector<std::array<VectorXd, 2>> trail;
    for (int t = 0; t <= T; ++t) trail.push_back({tag(t), tag(t)});
    const bool done = rng.uniform() < 0.5;

    const auto joint = trim_async(streams, trail, done);

    // partition: boundaries are exactly the union of input boundaries
    std::vector<int> expect{0};
    for (const auto& stream : streams)
      for (const auto& tr : stream) expect.push_back(tr.start + tr.tau);
    std::sort(expect.begin(), expect.end());
    expect.erase(std::unique(expect.begin(), expect.end()), expect.end());
    REQUIRE(joint.size() == expect.size() - 1);
    int cover = 0;
    for (std::size_t i = 0; i < joint.size(); ++i) {
      REQUIRE(joint[i].start == expect[i]);
      REQUIRE(joint[i].taus[0] == expect[i + 1] - expect[i]);
      REQUIRE(joint[i].taus[0] == joint[i].taus[1]);
      REQUIRE(static_cast<int>(joint[i].rewards.size()) == joint[i].taus[0]);
      cover += joint[i].taus[0];
      REQUIRE(joint[i].done == (done && expect[i + 1] == T));
    }
    REQUIRE(cover == T);

    // each agent's goal label comes from its covering transition
    for (const auto& jt : joint) {
      for (int a = 0; a < 2; ++a) {
        int found = -1;
        for (const auto& tr : streams[a])
          if (tr.start <= jt.start && jt.start < tr.start + tr.tau) found = tr.goal;
        REQUIRE(jt.goals[a] == found);
      }
    }

    // discounted-return composition per original transition
    for (const auto& stream : streams) {
      for (const auto& tr : stream) {
        double direct = 0.0;
        for (int k = 0; k < tr.tau; ++k)
          direct += std::pow(gamma, k) * tr.rewards[k];
        double composed = 0.0;
        for (const auto& jt : joint) {
          if (jt.start < tr.start || jt.start >= tr.start + tr.tau) continue;
          double seg = 0.0;
          for (std::size_t j = 0; j < jt.rewards.size(); ++j)
            seg += std::pow(gamma, static_cast<double>(j)) * jt.rewards[j];
          composed += std::pow(gamma, jt.start - tr.start) * seg;
        }
        REQUIRE(std::abs(direct - composed) < 1e-12);
      }
    }
  }
}

TEST_CASE("trim validation") {
  std::vector<double> team(9, 0.0);
  std::vector<std::array<VectorXd, 2>> trail;
  for (int t = 0; t <= 9; ++t) trail.push_back({tag(t), tag(t)});

  SECTION("unequal episode lengths") {
    std::array<std::vector<HighLevelTransition>, 2> streams = {
        std::vector<HighLevelTransition>{make_hlt(0, 9, 0, team, true)},
        std::vector<HighLevelTransition>{make_hlt(0, 5, 0, team, true)}};
    CHECK_THROWS_AS(trim_async(streams, trail, true), AlignmentError);
  }
  SECTION("gap in a stream") {
    std::array<std::vector<HighLevelTransition>, 2> streams = {
        std::vector<HighLevelTransition>{make_hlt(0, 4, 0, team, false),
                                         make_hlt(5, 4, 0, team, true)},
        std::vector<HighLevelTransition>{make_hlt(0, 9, 0, team, true)}};
    CHECK_THROWS_AS(trim_async(streams, trail, true), AlignmentError);
  }
  SECTION("trail must have T+1 entries") {
    std::array<std::vector<HighLevelTransition>, 2> streams = {
        std::vector<HighLevelTransition>{make_hlt(0, 9, 0, team, true)},
        std::vector<HighLevelTransition>{make_hlt(0, 9, 0, team, true)}};
    std::vector<std::array<VectorXd, 2>> short_trail(trail.begin(), trail.end() - 1);
    CHECK_THROWS_AS(trim_async(streams, short_trail, true), AlignmentError);
  }
  SECTION("empty episode yields nothing") {
    std::array<std::vector<HighLevelTransition>, 2> streams;
    CHECK(trim_async(streams, {}, false).empty());
  }
}
