#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hmarl/errors.hpp"
#include "hmarl/rng.hpp"

namespace hmarl::net {

using Matrix = Eigen::MatrixXd;  // column = one sample, rows = feature width
using RowMajorMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

using NodeId = int;
using GroupId = int;

enum class Act { Relu, Elu, Abs, Identity };

// One dense layer's parameter block inside the flat parameter array:
// a row-major (rows x cols) weight matrix followed by a bias of length rows.
struct DenseGroup {
  std::string name;
  int rows = 0;  // output width
  int cols = 0;  // input width
  std::size_t w_offset = 0;
  std::size_t b_offset = 0;
};

// A static feedforward computation graph over double-precision vectors.
//
// Topology is fixed at construction; values flow per call. Nodes may only
// reference earlier nodes, so creation order is a topological order. Several
// dense nodes may share one parameter group (weight sharing), and a
// weighted-mix node takes its weight matrix and bias from the *outputs* of
// other nodes, which is how hypernetwork-generated layers are wired.
class Graph {
  enum class Kind { Input, Dense, Activation, Concat, Mean, LinearFrom };

  struct Node {
    Kind kind;
    int width = 0;
    std::vector<NodeId> inputs;
    Act act = Act::Identity;
    GroupId group = -1;
  };

 public:
  NodeId input(int width) {
    if (width <= 0) throw DimensionError("input width must be positive");
    Node n;
    n.kind = Kind::Input;
    n.width = width;
    input_ids_.push_back(static_cast<NodeId>(nodes_.size()));
    return push(std::move(n));
  }

  // Dense layer with a fresh parameter group.
  NodeId dense(NodeId in, int out_width) {
    return dense_shared(in, add_group(out_width, width_of(in)));
  }

  // Dense layer reusing an existing group (parameter sharing).
  NodeId dense_shared(NodeId in, GroupId g) {
    check_node(in);
    const DenseGroup& grp = group(g);
    if (grp.cols != width_of(in))
      throw DimensionError("dense input width " + std::to_string(width_of(in)) +
                           " does not match group cols " + std::to_string(grp.cols));
    Node n;
    n.kind = Kind::Dense;
    n.width = grp.rows;
    n.inputs = {in};
    n.group = g;
    return push(std::move(n));
  }

  NodeId activation(NodeId in, Act a) {
    check_node(in);
    Node n;
    n.kind = Kind::Activation;
    n.width = width_of(in);
    n.inputs = {in};
    n.act = a;
    return push(std::move(n));
  }

  NodeId relu(NodeId in) { return activation(in, Act::Relu); }
  NodeId elu(NodeId in) { return activation(in, Act::Elu); }
  NodeId abs(NodeId in) { return activation(in, Act::Abs); }

  NodeId concat(std::vector<NodeId> ins) {
    if (ins.empty()) throw DimensionError("concat needs at least one input");
    int w = 0;
    for (NodeId id : ins) {
      check_node(id);
      w += width_of(id);
    }
    Node n;
    n.kind = Kind::Concat;
    n.width = w;
    n.inputs = std::move(ins);
    return push(std::move(n));
  }

  // Elementwise arithmetic mean over a set of same-width vectors.
  NodeId mean_of(std::vector<NodeId> ins) {
    if (ins.empty()) throw DimensionError("mean needs at least one input");
    const int w = width_of(ins.front());
    for (NodeId id : ins) {
      check_node(id);
      if (width_of(id) != w) throw DimensionError("mean inputs must share width");
    }
    Node n;
    n.kind = Kind::Mean;
    n.width = w;
    n.inputs = std::move(ins);
    return push(std::move(n));
  }

  // Weighted-mix node: y = W x + b where W (out x in, row-major) is the
  // output of `weights` and b the output of `bias`. Gradients propagate to
  // the data path and to both producing paths.
  NodeId linear_from(NodeId x, NodeId weights, NodeId bias) {
    check_node(x);
    check_node(weights);
    check_node(bias);
    const int in_w = width_of(x);
    const int out_w = width_of(bias);
    if (width_of(weights) != in_w * out_w)
      throw DimensionError("weighted-mix weight width " +
                           std::to_string(width_of(weights)) + " != " +
                           std::to_string(in_w) + "*" + std::to_string(out_w));
    Node n;
    n.kind = Kind::LinearFrom;
    n.width = out_w;
    n.inputs = {x, weights, bias};
    return push(std::move(n));
  }

  void mark_output(NodeId id) {
    check_node(id);
    output_ids_.push_back(id);
  }

  // Uniform weights in [-1/sqrt(fan_in), +1/sqrt(fan_in)], zero biases.
  void init_params(Rng& rng) {
    for (const DenseGroup& g : groups_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(g.cols));
      for (int i = 0; i < g.rows * g.cols; ++i)
        params_[g.w_offset + i] = rng.uniform(-bound, bound);
      for (int i = 0; i < g.rows; ++i) params_[g.b_offset + i] = 0.0;
    }
  }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t param_count() const { return params_.size(); }
  const std::vector<DenseGroup>& groups() const { return groups_; }
  const std::vector<NodeId>& input_ids() const { return input_ids_; }
  const std::vector<NodeId>& output_ids() const { return output_ids_; }
  int width_of(NodeId id) const {
    check_node(id);
    return nodes_[id].width;
  }

  // Evaluates the graph on a batch (each matrix column is one sample).
  void forward(const std::vector<std::pair<NodeId, Matrix>>& inputs) {
    bind_and_check(inputs);
    for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) eval(id);
    has_forward_ = true;
  }

  const Matrix& value(NodeId id) const {
    check_node(id);
    if (!has_forward_) throw StateError("value() before forward()");
    return values_[id];
  }

  // Reverse-mode pass. `out_grads` seeds dLoss/dOutput for any subset of the
  // marked outputs (missing ones count as zero). Returns dLoss/dParameter.
  std::vector<double> backward(const std::vector<std::pair<NodeId, Matrix>>& out_grads) {
    if (!has_forward_) throw StateError("backward() before forward()");
    grads_.assign(nodes_.size(), Matrix());
    for (const auto& [id, g] : out_grads) {
      check_node(id);
      if (g.rows() != width_of(id) || g.cols() != batch_)
        throw DimensionError("output gradient shape mismatch");
      grad(id) += g;
    }
    std::vector<double> pg(params_.size(), 0.0);
    for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
      if (grads_[id].size() != 0) propagate(id, pg);
    }
    for (NodeId id : input_ids_) grad(id);  // unreached inputs read as zero
    has_backward_ = true;
    return pg;
  }

  // Gradient that reached a node's output in the last backward pass
  // (commonly queried for input nodes when chaining graphs).
  const Matrix& gradient(NodeId id) const {
    check_node(id);
    if (!has_backward_) throw StateError("gradient() before backward()");
    return grads_[id];
  }

  bool same_structure(const Graph& other) const {
    if (nodes_.size() != other.nodes_.size()) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& a = nodes_[i];
      const Node& b = other.nodes_[i];
      if (a.kind != b.kind || a.width != b.width || a.inputs != b.inputs ||
          a.act != b.act || a.group != b.group)
        return false;
    }
    if (groups_.size() != other.groups_.size()) return false;
    for (std::size_t i = 0; i < groups_.size(); ++i)
      if (groups_[i].rows != other.groups_[i].rows ||
          groups_[i].cols != other.groups_[i].cols)
        return false;
    return params_.size() == other.params_.size();
  }

 private:
  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    values_.emplace_back();
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  GroupId add_group(int rows, int cols) {
    DenseGroup g;
    g.name = "dense" + std::to_string(groups_.size());
    g.rows = rows;
    g.cols = cols;
    g.w_offset = params_.size();
    g.b_offset = g.w_offset + static_cast<std::size_t>(rows) * cols;
    params_.resize(g.b_offset + rows, 0.0);
    groups_.push_back(std::move(g));
    return static_cast<GroupId>(groups_.size()) - 1;
  }

  const DenseGroup& group(GroupId g) const {
    if (g < 0 || g >= static_cast<GroupId>(groups_.size()))
      throw StructureError("unknown parameter group");
    return groups_[g];
  }

  void check_node(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
      throw StructureError("unknown node id " + std::to_string(id));
  }

  void bind_and_check(const std::vector<std::pair<NodeId, Matrix>>& inputs) {
    has_forward_ = false;
    has_backward_ = false;
    batch_ = -1;
    std::vector<bool> bound(nodes_.size(), false);
    for (const auto& [id, m] : inputs) {
      check_node(id);
      if (nodes_[id].kind != Kind::Input)
        throw StructureError("node " + std::to_string(id) + " is not an input");
      if (m.rows() != width_of(id))
        throw DimensionError("input " + std::to_string(id) + " expects width " +
                             std::to_string(width_of(id)) + ", got " +
                             std::to_string(m.rows()));
      if (batch_ == -1) batch_ = static_cast<int>(m.cols());
      if (m.cols() != batch_) throw DimensionError("inputs disagree on batch size");
      values_[id] = m;
      bound[id] = true;
    }
    if (batch_ <= 0) throw MissingInputError("forward() with no inputs");
    for (NodeId id : input_ids_)
      if (!bound[id])
        throw MissingInputError("input node " + std::to_string(id) + " unbound");
  }

  void eval(NodeId id) {
    Node& n = nodes_[id];
    Matrix& out = values_[id];
    switch (n.kind) {
      case Kind::Input:
        break;
      case Kind::Dense: {
        const DenseGroup& g = groups_[n.group];
        ConstRowMajorMap w(params_.data() + g.w_offset, g.rows, g.cols);
        Eigen::Map<const Eigen::VectorXd> b(params_.data() + g.b_offset, g.rows);
        out.noalias() = w * values_[n.inputs[0]];
        out.colwise() += b;
        break;
      }
      case Kind::Activation: {
        const Matrix& x = values_[n.inputs[0]];
        switch (n.act) {
          case Act::Relu:
            out = x.cwiseMax(0.0);
            break;
          case Act::Elu:
            out = (x.array() >= 0.0).select(x.array(), x.array().exp() - 1.0);
            break;
          case Act::Abs:
            out = x.cwiseAbs();
            break;
          case Act::Identity:
            out = x;
            break;
        }
        break;
      }
      case Kind::Concat: {
        out.resize(n.width, batch_);
        int row = 0;
        for (NodeId in : n.inputs) {
          out.middleRows(row, width_of(in)) = values_[in];
          row += width_of(in);
        }
        break;
      }
      case Kind::Mean: {
        out = values_[n.inputs[0]];
        for (std::size_t i = 1; i < n.inputs.size(); ++i) out += values_[n.inputs[i]];
        out /= static_cast<double>(n.inputs.size());
        break;
      }
      case Kind::LinearFrom: {
        const Matrix& x = values_[n.inputs[0]];
        const Matrix& w = values_[n.inputs[1]];
        const Matrix& b = values_[n.inputs[2]];
        const int in_w = static_cast<int>(x.rows());
        out.resize(n.width, batch_);
        for (int c = 0; c < batch_; ++c) {
          ConstRowMajorMap wm(w.col(c).data(), n.width, in_w);
          out.col(c).noalias() = wm * x.col(c) + b.col(c);
        }
        break;
      }
    }
  }

  Matrix& grad(NodeId id) {
    if (grads_[id].size() == 0) grads_[id] = Matrix::Zero(width_of(id), batch_);
    return grads_[id];
  }

  void propagate(NodeId id, std::vector<double>& pg) {
    const Node& n = nodes_[id];
    const Matrix& dy = grads_[id];
    switch (n.kind) {
      case Kind::Input:
        break;
      case Kind::Dense: {
        const DenseGroup& g = groups_[n.group];
        ConstRowMajorMap w(params_.data() + g.w_offset, g.rows, g.cols);
        RowMajorMap dw(pg.data() + g.w_offset, g.rows, g.cols);
        Eigen::Map<Eigen::VectorXd> db(pg.data() + g.b_offset, g.rows);
        const Matrix& x = values_[n.inputs[0]];
        dw.noalias() += dy * x.transpose();
        db.noalias() += dy.rowwise().sum();
        grad(n.inputs[0]).noalias() += w.transpose() * dy;
        break;
      }
      case Kind::Activation: {
        const Matrix& x = values_[n.inputs[0]];
        Matrix& dx = grad(n.inputs[0]);
        switch (n.act) {
          case Act::Relu:
            dx.array() += dy.array() * (x.array() > 0.0).cast<double>();
            break;
          case Act::Elu:
            dx.array() +=
                dy.array() * (x.array() >= 0.0).select(1.0, x.array().exp());
            break;
          case Act::Abs:
            dx.array() += dy.array() * x.array().sign();
            break;
          case Act::Identity:
            dx += dy;
            break;
        }
        break;
      }
      case Kind::Concat: {
        int row = 0;
        for (NodeId in : n.inputs) {
          grad(in) += dy.middleRows(row, width_of(in));
          row += width_of(in);
        }
        break;
      }
      case Kind::Mean: {
        const double scale = 1.0 / static_cast<double>(n.inputs.size());
        for (NodeId in : n.inputs) grad(in) += scale * dy;
        break;
      }
      case Kind::LinearFrom: {
        const Matrix& x = values_[n.inputs[0]];
        const Matrix& w = values_[n.inputs[1]];
        const int in_w = static_cast<int>(x.rows());
        Matrix& dx = grad(n.inputs[0]);
        Matrix& dw = grad(n.inputs[1]);
        Matrix& db = grad(n.inputs[2]);
        for (int c = 0; c < batch_; ++c) {
          ConstRowMajorMap wm(w.col(c).data(), n.width, in_w);
          RowMajorMap dwm(dw.col(c).data(), n.width, in_w);
          dx.col(c).noalias() += wm.transpose() * dy.col(c);
          dwm.noalias() += dy.col(c) * x.col(c).transpose();
          db.col(c) += dy.col(c);
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<DenseGroup> groups_;
  std::vector<double> params_;
  std::vector<NodeId> input_ids_;
  std::vector<NodeId> output_ids_;

  std::vector<Matrix> values_;
  std::vector<Matrix> grads_;
  int batch_ = 0;
  bool has_forward_ = false;
  bool has_backward_ = false;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState(std::size_t n, double learning_rate)
      : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

inline void adam_step(std::span<double> params, std::span<const double> grads,
                      AdamState& s) {
  if (params.size() != grads.size() || params.size() != s.m.size())
    throw DimensionError("adam_step shape mismatch");
  s.step += 1;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    params[i] -= s.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + s.epsilon);
  }
}

// Copies online parameters into the target graph (hard update).
inline void sync_target(const Graph& online, Graph& target) {
  if (!online.same_structure(target))
    throw StructureError("sync_target: graphs differ structurally");
  auto src = online.parameters();
  auto dst = target.parameters();
  std::copy(src.begin(), src.end(), dst.begin());
}

// ---------------------------------------------------------------------------
// Checkpoints: a textual header of "name rows cols" lines, a blank line,
// then the flat parameter array as little-endian 64-bit floats.

inline void save_checkpoint(const Graph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const DenseGroup& grp : g.groups())
    out << grp.name << ' ' << grp.rows << ' ' << grp.cols << '\n';
  out << '\n';
  auto params = g.parameters();
  static_assert(sizeof(double) == 8);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(params.data()),
              static_cast<std::streamsize>(params.size() * 8));
  } else {
    for (double d : params) {
      std::uint64_t u;
      std::memcpy(&u, &d, 8);
      for (int b = 0; b < 8; ++b) out.put(static_cast<char>((u >> (8 * b)) & 0xff));
    }
  }
  if (!out) throw IoError("short write to " + path.string());
}

inline void load_checkpoint(Graph& g, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t idx = 0;
  while (std::getline(in, line) && !line.empty()) {
    std::istringstream ls(line);
    std::string name;
    int rows = 0, cols = 0;
    if (!(ls >> name >> rows >> cols))
      throw IoError("malformed checkpoint header line: " + line);
    if (idx >= g.groups().size() || g.groups()[idx].rows != rows ||
        g.groups()[idx].cols != cols)
      throw StructureError("checkpoint layer " + name + " does not match graph");
    ++idx;
  }
  if (idx != g.groups().size())
    throw StructureError("checkpoint lists fewer layers than graph has");
  auto params = g.parameters();
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(params.data()),
            static_cast<std::streamsize>(params.size() * 8));
    if (static_cast<std::size_t>(in.gcount()) != params.size() * 8)
      throw IoError("checkpoint truncated: " + path.string());
  } else {
    for (double& d : params) {
      std::uint64_t u = 0;
      for (int b = 0; b < 8; ++b) {
        int c = in.get();
        if (c == EOF) throw IoError("checkpoint truncated: " + path.string());
        u |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
      }
      std::memcpy(&d, &u, 8);
    }
  }
}

}  // namespace hmarl::net
