#pragma once

// Finite-difference gradient oracle, independent of the graph's own backward
// pass: the loss is an explicit weighted sum of outputs, differentiated by
// central differences over every parameter (and input entry).

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "hmarl/net.hpp"
#include "hmarl/rng.hpp"

namespace hmarl::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradTol = 1e-4;

struct GraphCase {
  net::Graph graph;
  std::vector<std::pair<net::NodeId, net::Matrix>> inputs;
  // aligned with graph.output_ids(): fixed weights defining the scalar loss
  std::vector<std::pair<net::NodeId, net::Matrix>> loss_weights;
};

inline double loss_value(GraphCase& c) {
  c.graph.forward(c.inputs);
  double loss = 0.0;
  for (const auto& [id, w] : c.loss_weights)
    loss += (w.array() * c.graph.value(id).array()).sum();
  return loss;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Worst relative error between backward() parameter gradients and central
// finite differences of the scalar loss.
inline double max_param_grad_rel_err(GraphCase& c, double h = kFdStep) {
  loss_value(c);
  const std::vector<double> analytic = c.graph.backward(c.loss_weights);
  auto params = c.graph.parameters();
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double lp = loss_value(c);
    params[i] = keep - h;
    const double lm = loss_value(c);
    params[i] = keep;
    worst = std::max(worst, rel_err((lp - lm) / (2.0 * h), analytic[i]));
  }
  return worst;
}

// Same check for the gradients exposed at input nodes (graph chaining).
inline double max_input_grad_rel_err(GraphCase& c, double h = kFdStep) {
  loss_value(c);
  c.graph.backward(c.loss_weights);
  std::vector<net::Matrix> analytic;
  for (const auto& [id, m] : c.inputs) analytic.push_back(c.graph.gradient(id));
  double worst = 0.0;
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    net::Matrix& m = c.inputs[k].second;
    for (int r = 0; r < m.rows(); ++r)
      for (int col = 0; col < m.cols(); ++col) {
        const double keep = m(r, col);
        m(r, col) = keep + h;
        const double lp = loss_value(c);
        m(r, col) = keep - h;
        const double lm = loss_value(c);
        m(r, col) = keep;
        worst = std::max(worst, rel_err((lp - lm) / (2.0 * h), analytic[k](r, col)));
      }
  }
  return worst;
}

// Random feedforward topology: dense layers (sometimes sharing parameter
// groups), all four activations, concat, mean-over-set, and
// hypernetwork-style weighted mixes whose W/b come from other nodes.
inline GraphCase random_graph_case(Rng& rng, int batch) {
  GraphCase c;
  net::Graph& g = c.graph;

  struct Made {
    net::NodeId id;
    int width;
  };
  std::vector<Made> pool;

  const int n_inputs = 1 + rng.uniform_int(3);
  for (int i = 0; i < n_inputs; ++i) {
    const int w = 1 + rng.uniform_int(5);
    pool.push_back({g.input(w), w});
  }
  auto pick = [&]() -> const Made& { return pool[rng.uniform_int(static_cast<int>(pool.size()))]; };

  const int ops = 3 + rng.uniform_int(6);
  for (int op = 0; op < ops; ++op) {
    switch (rng.uniform_int(6)) {
      case 0: {  // fresh dense
        const Made& in = pick();
        const int out_w = 1 + rng.uniform_int(4);
        pool.push_back({g.dense(in.id, out_w), out_w});
        break;
      }
      case 1: {  // dense sharing an existing group, if any fits
        std::vector<std::pair<net::GroupId, net::NodeId>> fits;
        for (std::size_t gi = 0; gi < g.groups().size(); ++gi)
          for (const Made& m : pool)
            if (m.width == g.groups()[gi].cols)
              fits.push_back({static_cast<net::GroupId>(gi), m.id});
        if (fits.empty()) {
          const Made& in = pick();
          const int out_w = 1 + rng.uniform_int(4);
          pool.push_back({g.dense(in.id, out_w), out_w});
        } else {
          auto [gid, nid] = fits[rng.uniform_int(static_cast<int>(fits.size()))];
          const net::NodeId made = g.dense_shared(nid, gid);
          pool.push_back({made, g.width_of(made)});
        }
        break;
      }
      case 2: {  // activation
        const Made& in = pick();
        const net::Act acts[] = {net::Act::Relu, net::Act::Elu, net::Act::Abs,
                                 net::Act::Identity};
        pool.push_back({g.activation(in.id, acts[rng.uniform_int(4)]), in.width});
        break;
      }
      case 3: {  // concat
        const Made a = pick();
        const Made b = pick();
        pool.push_back({g.concat({a.id, b.id}), a.width + b.width});
        break;
      }
      case 4: {  // mean over two same-width nodes, else fall back to identity
        std::vector<std::pair<net::NodeId, net::NodeId>> pairs;
        for (std::size_t i = 0; i < pool.size(); ++i)
          for (std::size_t j = i + 1; j < pool.size(); ++j)
            if (pool[i].width == pool[j].width) pairs.push_back({pool[i].id, pool[j].id});
        if (pairs.empty()) {
          const Made& in = pick();
          pool.push_back({g.activation(in.id, net::Act::Identity), in.width});
        } else {
          auto [a, b] = pairs[rng.uniform_int(static_cast<int>(pairs.size()))];
          pool.push_back({g.mean_of({a, b}), g.width_of(a)});
        }
        break;
      }
      case 5: {  // hypernetwork-style weighted mix
        std::vector<Made> smalls;
        for (const Made& m : pool)
          if (m.width <= 4) smalls.push_back(m);
        if (smalls.empty()) smalls = pool;
        const Made x = smalls[rng.uniform_int(static_cast<int>(smalls.size()))];
        const int out_w = 1 + rng.uniform_int(3);
        net::NodeId w = g.dense(pick().id, x.width * out_w);
        if (rng.uniform() < 0.5) w = g.abs(w);
        const net::NodeId b = g.dense(pick().id, out_w);
        pool.push_back({g.linear_from(x.id, w, b), out_w});
        break;
      }
    }
  }

  g.mark_output(pool.back().id);
  if (rng.uniform() < 0.3) {
    const Made& extra = pick();
    if (extra.id != pool.back().id) g.mark_output(extra.id);
  }
  g.init_params(rng);

  for (net::NodeId id : g.input_ids()) {
    net::Matrix m(g.width_of(id), batch);
    for (int r = 0; r < m.rows(); ++r)
      for (int col = 0; col < batch; ++col) m(r, col) = rng.uniform(-1.0, 1.0);
    c.inputs.push_back({id, std::move(m)});
  }
  for (net::NodeId id : g.output_ids()) {
    net::Matrix m(g.width_of(id), batch);
    for (int r = 0; r < m.rows(); ++r)
      for (int col = 0; col < batch; ++col) m(r, col) = rng.uniform(-1.0, 1.0);
    c.loss_weights.push_back({id, std::move(m)});
  }
  return c;
}

}  // namespace hmarl::testing
