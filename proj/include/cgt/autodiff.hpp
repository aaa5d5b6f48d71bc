#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace cgt::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

enum class Init { Uniform, Embedding, Zeros, Ones };

struct Parameter {
  std::string name;
  Matrix value;
};

/// Named trainable tensors in creation order.
class ParameterStore {
 public:
  /// Uniform init draws from U(-1/sqrt(rows), 1/sqrt(rows)) (rows = fan-in);
  /// Embedding init uses the column count instead. Throws ConfigError on a
  /// duplicate name.
  int create(const std::string& name, int rows, int cols, Init init, Rng& rng);

  int index(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Parameter& at(int i) { return params_[static_cast<std::size_t>(i)]; }
  const Parameter& at(int i) const { return params_[static_cast<std::size_t>(i)]; }
  Parameter& get(const std::string& name) { return at(index(name)); }
  const Parameter& get(const std::string& name) const { return at(index(name)); }
  int size() const { return static_cast<int>(params_.size()); }
  std::size_t scalar_count() const;
  bool all_finite() const;

 private:
  std::deque<Parameter> params_;
  std::map<std::string, int, std::less<>> index_;
};

/// Gradient buffers aligned with a ParameterStore.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterStore& store);

  Matrix& at(int i);
  bool touched(int i) const { return grads_[static_cast<std::size_t>(i)].size() != 0; }
  const Matrix* find(int i) const;
  void add(const Gradients& other);
  void scale(double s);
  void zero();
  int size() const { return static_cast<int>(grads_.size()); }

 private:
  std::vector<std::pair<int, int>> shapes_;
  std::vector<Matrix> grads_;
};

class Graph;

/// Handle to a node of a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Values are row-major matrices; sequences are L x d with
/// one row per position.
class Graph {
 public:
  /// Parameter gradients are accumulated into `grads` by backward().
  explicit Graph(const ParameterStore* store = nullptr, Gradients* grads = nullptr);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix m);
  /// A leaf whose gradient is kept (for gradient checks on inputs).
  Var input(Matrix m);
  Var param(int index);
  Var param(const std::string& name);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;
  int rows(Var v) const { return static_cast<int>(value(v).rows()); }
  int cols(Var v) const { return static_cast<int>(value(v).cols()); }
  std::size_t node_count() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 loss and runs the tape backwards.
  void backward(Var loss);

  // Linear algebra
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_row(Var a, Var row);   // broadcast a 1 x n row over every row of a
  Var mul_col(Var a, Var col);   // scale row i of a by col(i, 0)
  Var scale(Var a, double s);
  Var affine(Var a, double s, double t);  // s * a + t
  Var linear(Var x, Var w, Var b);        // x w + b (b may be invalid)

  // Nonlinearities
  Var gelu(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var log(Var a);

  /// Row softmax. `mask` (same shape, nonzero = allowed) may be null; fully
  /// masked rows produce zeros.
  Var softmax_rows(Var a, const Matrix* mask = nullptr);
  Var row_dot(Var a, Var b);  // L x 1
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

  // Shape
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_cols(Var a, int start, int count);
  Var slice_rows(Var a, int start, int count);
  Var gather_rows(Var a, const std::vector<int>& rows);
  /// Window of `k` neighbor rows laid side by side (L x k*d), zero outside the
  /// sequence. Centered windows cover [i-w, i+w]; causal ones [i-k+1, i].
  Var unfold(Var a, int k, bool causal);
  Var segment_mean(Var a, const std::vector<int>& offsets);

  // Lookups
  Var embedding(Var table, const std::vector<int>& ids);
  /// For each row of `ids` (token x char slots) concatenates the table rows;
  /// id 0 (padding) contributes zeros. Output: tokens x (slots * dim).
  Var char_features(Var table, const std::vector<std::vector<int>>& ids, int slots);

  // Reductions and selection
  Var sum(Var a);
  Var gather_elements(Var a, const std::vector<std::pair<int, int>>& at);  // n x 1
  Var masked_row_sum(Var a, const Matrix& mask);                          // L x 1

  /// Inverted dropout; identity when rate == 0.
  Var dropout(Var a, double rate, Rng& rng);

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool needs_grad = false;
    int param = -1;
    std::function<void()> back;
  };

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Matrix& val(Var v) const { return node(v).ref ? *node(v).ref : node(v).value; }
  bool needs(Var v) const { return node(v).needs_grad; }
  Var push(Matrix value, std::initializer_list<Var> parents);
  Var push(Matrix value, const std::vector<Var>& parents);
  template <typename E>
  void acc(Var v, const E& g);
  Matrix& grad_ref(Var v);

  const ParameterStore* store_;
  Gradients* grads_;
  std::deque<Node> nodes_;
};

}  // namespace cgt::nn
