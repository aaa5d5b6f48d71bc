#include "cgt/autodiff.hpp"

#include <cmath>
#include <limits>

#include "cgt/errors.hpp"

namespace cgt::nn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

// ---- ParameterStore ---------------------------------------------------------

int ParameterStore::create(const std::string& name, int rows, int cols, Init init, Rng& rng) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  Parameter p;
  p.name = name;
  p.value = Matrix::Zero(rows, cols);
  if (init == Init::Ones) {
    p.value.setOnes();
  } else if (init == Init::Uniform || init == Init::Embedding) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(init == Init::Uniform ? rows : cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
  }
  const int id = static_cast<int>(params_.size());
  params_.push_back(std::move(p));
  index_.emplace(name, id);
  return id;
}

int ParameterStore::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

bool ParameterStore::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.allFinite()) return false;
  }
  return true;
}

// ---- Gradients --------------------------------------------------------------

Gradients::Gradients(const ParameterStore& store) : grads_(static_cast<std::size_t>(store.size())) {
  for (int i = 0; i < store.size(); ++i) {
    shapes_.emplace_back(static_cast<int>(store.at(i).value.rows()), static_cast<int>(store.at(i).value.cols()));
  }
}

Matrix& Gradients::at(int i) {
  Matrix& g = grads_.at(static_cast<std::size_t>(i));
  if (g.size() == 0) g = Matrix::Zero(shapes_[static_cast<std::size_t>(i)].first, shapes_[static_cast<std::size_t>(i)].second);
  return g;
}

const Matrix* Gradients::find(int i) const {
  const Matrix& g = grads_.at(static_cast<std::size_t>(i));
  return g.size() == 0 ? nullptr : &g;
}

void Gradients::add(const Gradients& other) {
  require(other.grads_.size() == grads_.size(), "gradient stores differ in size");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (other.grads_[i].size() != 0) at(static_cast<int>(i)) += other.grads_[i];
  }
}

void Gradients::scale(double s) {
  for (auto& g : grads_) {
    if (g.size() != 0) g *= s;
  }
}

void Gradients::zero() {
  for (auto& g : grads_) g.resize(0, 0);
}

// ---- Graph core -------------------------------------------------------------

Graph::Graph(const ParameterStore* store, Gradients* grads) : store_(store), grads_(grads) {}

Var Graph::push(Matrix value, std::initializer_list<Var> parents) {
  Node n;
  n.value = std::move(value);
  for (Var p : parents) n.needs_grad = n.needs_grad || (p.valid() && needs(p));
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::push(Matrix value, const std::vector<Var>& parents) {
  Node n;
  n.value = std::move(value);
  for (Var p : parents) n.needs_grad = n.needs_grad || (p.valid() && needs(p));
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Graph::grad_ref(Var v) {
  Node& n = node(v);
  if (n.grad.size() == 0) n.grad = Matrix::Zero(val(v).rows(), val(v).cols());
  return n.grad;
}

template <typename E>
void Graph::acc(Var v, const E& g) {
  if (!needs(v)) return;
  grad_ref(v) += g;
}

Var Graph::constant(Matrix m) { return push(std::move(m), {}); }

Var Graph::input(Matrix m) {
  Var v = push(std::move(m), {});
  node(v).needs_grad = true;
  return v;
}

Var Graph::param(int index) {
  if (!store_) throw ConfigError("graph has no parameter store");
  Node n;
  n.ref = &store_->at(index).value;
  n.needs_grad = grads_ != nullptr;
  n.param = index;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(const std::string& name) {
  if (!store_) throw ConfigError("graph has no parameter store");
  return param(store_->index(name));
}

const Matrix& Graph::value(Var v) const { return val(v); }

const Matrix& Graph::grad(Var v) const {
  static const Matrix empty;
  const Node& n = node(v);
  return n.grad.size() == 0 ? empty : n.grad;
}

void Graph::backward(Var loss) {
  require(val(loss).rows() == 1 && val(loss).cols() == 1, "loss must be 1x1, got " + shape(val(loss)));
  if (!needs(loss)) return;
  grad_ref(loss)(0, 0) += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) continue;
    if (n.back) n.back();
    if (n.param >= 0 && grads_) grads_->at(n.param) += n.grad;
  }
}

// ---- Linear algebra ---------------------------------------------------------

Var Graph::matmul(Var a, Var b) {
  require(val(a).cols() == val(b).rows(), "matmul " + shape(val(a)) + " * " + shape(val(b)));
  Var out = push(val(a) * val(b), {a, b});
  node(out).back = [this, a, b, out] {
    const Matrix& g = node(out).grad;
    if (needs(a)) grad_ref(a).noalias() += g * val(b).transpose();
    if (needs(b)) grad_ref(b).noalias() += val(a).transpose() * g;
  };
  return out;
}

Var Graph::matmul_nt(Var a, Var b) {
  require(val(a).cols() == val(b).cols(), "matmul_nt " + shape(val(a)) + " * " + shape(val(b)) + "^T");
  Var out = push(val(a) * val(b).transpose(), {a, b});
  node(out).back = [this, a, b, out] {
    const Matrix& g = node(out).grad;
    if (needs(a)) grad_ref(a).noalias() += g * val(b);
    if (needs(b)) grad_ref(b).noalias() += g.transpose() * val(a);
  };
  return out;
}

Var Graph::add(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "add " + shape(val(a)) + " + " + shape(val(b)));
  Var out = push(val(a) + val(b), {a, b});
  node(out).back = [this, a, b, out] {
    acc(a, node(out).grad);
    acc(b, node(out).grad);
  };
  return out;
}

Var Graph::sub(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "sub " + shape(val(a)) + " - " + shape(val(b)));
  Var out = push(val(a) - val(b), {a, b});
  node(out).back = [this, a, b, out] {
    acc(a, node(out).grad);
    if (needs(b)) grad_ref(b) -= node(out).grad;
  };
  return out;
}

Var Graph::mul(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "mul " + shape(val(a)) + " .* " + shape(val(b)));
  Var out = push(val(a).cwiseProduct(val(b)), {a, b});
  node(out).back = [this, a, b, out] {
    const Matrix& g = node(out).grad;
    acc(a, g.cwiseProduct(val(b)));
    acc(b, g.cwiseProduct(val(a)));
  };
  return out;
}

Var Graph::add_row(Var a, Var row) {
  require(val(row).rows() == 1 && val(row).cols() == val(a).cols(), "add_row " + shape(val(a)) + " + " + shape(val(row)));
  Matrix v = val(a);
  v.rowwise() += val(row).row(0);
  Var out = push(std::move(v), {a, row});
  node(out).back = [this, a, row, out] {
    const Matrix& g = node(out).grad;
    acc(a, g);
    acc(row, g.colwise().sum());
  };
  return out;
}

Var Graph::mul_col(Var a, Var col) {
  require(val(col).cols() == 1 && val(col).rows() == val(a).rows(), "mul_col " + shape(val(a)) + " * " + shape(val(col)));
  Matrix v = val(a);
  for (Eigen::Index i = 0; i < v.rows(); ++i) v.row(i) *= val(col)(i, 0);
  Var out = push(std::move(v), {a, col});
  node(out).back = [this, a, col, out] {
    const Matrix& g = node(out).grad;
    if (needs(a)) {
      Matrix& ga = grad_ref(a);
      for (Eigen::Index i = 0; i < g.rows(); ++i) ga.row(i) += g.row(i) * val(col)(i, 0);
    }
    if (needs(col)) grad_ref(col) += g.cwiseProduct(val(a)).rowwise().sum();
  };
  return out;
}

Var Graph::scale(Var a, double s) { return affine(a, s, 0.0); }

Var Graph::affine(Var a, double s, double t) {
  Matrix v = (val(a) * s).array() + t;
  Var out = push(std::move(v), {a});
  node(out).back = [this, a, s, out] { acc(a, node(out).grad * s); };
  return out;
}

Var Graph::linear(Var x, Var w, Var b) {
  Var y = matmul(x, w);
  return b.valid() ? add_row(y, b) : y;
}

// ---- Nonlinearities ---------------------------------------------------------

Var Graph::gelu(Var a) {
  const Matrix& x = val(a);
  Matrix v = x.unaryExpr([](double z) { return 0.5 * z * (1.0 + std::erf(z * kInvSqrt2)); });
  Var out = push(std::move(v), {a});
  node(out).back = [this, a, out] {
    Matrix d = val(a).unaryExpr([](double z) {
      return 0.5 * (1.0 + std::erf(z * kInvSqrt2)) + z * kInvSqrt2Pi * std::exp(-0.5 * z * z);
    });
    acc(a, node(out).grad.cwiseProduct(d));
  };
  return out;
}

Var Graph::tanh(Var a) {
  Var out = push(val(a).array().tanh().matrix(), {a});
  node(out).back = [this, a, out] {
    const Matrix& y = val(out);
    acc(a, node(out).grad.cwiseProduct((1.0 - y.array().square()).matrix()));
  };
  return out;
}

Var Graph::sigmoid(Var a) {
  Matrix v = val(a).unaryExpr([](double z) {
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  });
  Var out = push(std::move(v), {a});
  node(out).back = [this, a, out] {
    const Matrix& y = val(out);
    acc(a, node(out).grad.cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  };
  return out;
}

Var Graph::log(Var a) {
  Var out = push(val(a).array().log().matrix(), {a});
  node(out).back = [this, a, out] { acc(a, node(out).grad.cwiseQuotient(val(a))); };
  return out;
}

Var Graph::softmax_rows(Var a, const Matrix* mask) {
  const Matrix& x = val(a);
  if (mask) require(mask->rows() == x.rows() && mask->cols() == x.cols(), "softmax mask " + shape(*mask) + " vs " + shape(x));
  Matrix p = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j) != 0.0) mx = std::max(mx, x(i, j));
    }
    if (mx == -std::numeric_limits<double>::infinity()) continue;
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j) != 0.0) {
        p(i, j) = std::exp(x(i, j) - mx);
        total += p(i, j);
      }
    }
    p.row(i) /= total;
  }
  Var out = push(std::move(p), {a});
  node(out).back = [this, a, out] {
    if (!needs(a)) return;
    const Matrix& y = val(out);
    const Matrix& g = node(out).grad;
    Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    Matrix d = y.cwiseProduct(g);
    for (Eigen::Index i = 0; i < d.rows(); ++i) d.row(i) -= dots(i) * y.row(i);
    grad_ref(a) += d;
  };
  return out;
}

Var Graph::row_dot(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "row_dot " + shape(val(a)) + " . " + shape(val(b)));
  Var out = push(val(a).cwiseProduct(val(b)).rowwise().sum(), {a, b});
  node(out).back = [this, a, b, out] {
    const Matrix& g = node(out).grad;
    if (needs(a)) {
      Matrix& ga = grad_ref(a);
      for (Eigen::Index i = 0; i < g.rows(); ++i) ga.row(i) += g(i, 0) * val(b).row(i);
    }
    if (needs(b)) {
      Matrix& gb = grad_ref(b);
      for (Eigen::Index i = 0; i < g.rows(); ++i) gb.row(i) += g(i, 0) * val(a).row(i);
    }
  };
  return out;
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& in = val(x);
  const Eigen::Index n = in.cols();
  require(val(gamma).rows() == 1 && val(gamma).cols() == n && val(beta).cols() == n, "layer_norm parameters");
  Matrix xhat(in.rows(), n);
  Eigen::VectorXd inv_std(in.rows());
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    const double mean = in.row(i).mean();
    const double var = (in.row(i).array() - mean).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (in.row(i).array() - mean) * inv_std(i);
  }
  Matrix y = xhat;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    y.row(i) = y.row(i).cwiseProduct(val(gamma).row(0)) + val(beta).row(0);
  }
  Var out = push(std::move(y), {x, gamma, beta});
  node(out).back = [this, x, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
    const Matrix& g = node(out).grad;
    if (needs(gamma)) grad_ref(gamma) += g.cwiseProduct(xhat).colwise().sum();
    if (needs(beta)) grad_ref(beta) += g.colwise().sum();
    if (needs(x)) {
      Matrix& gx = grad_ref(x);
      const double n_d = static_cast<double>(xhat.cols());
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        Eigen::RowVectorXd dxhat = g.row(i).cwiseProduct(val(gamma).row(0));
        const double m1 = dxhat.mean();
        const double m2 = dxhat.cwiseProduct(xhat.row(i)).sum() / n_d;
        gx.row(i) += inv_std(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2).matrix();
      }
    }
  };
  return out;
}

// ---- Shape ------------------------------------------------------------------

Var Graph::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const Eigen::Index rows = val(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    require(val(p).rows() == rows, "concat_cols row mismatch");
    cols += val(p).cols();
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    v.middleCols(at, val(p).cols()) = val(p);
    at += val(p).cols();
  }
  Var out = push(std::move(v), parts);
  node(out).back = [this, parts, out] {
    Eigen::Index at = 0;
    for (Var p : parts) {
      const Eigen::Index c = val(p).cols();
      if (needs(p)) grad_ref(p) += node(out).grad.middleCols(at, c);
      at += c;
    }
  };
  return out;
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows of nothing");
  const Eigen::Index cols = val(parts[0]).cols();
  Eigen::Index rows = 0;
  for (Var p : parts) {
    require(val(p).cols() == cols, "concat_rows column mismatch");
    rows += val(p).rows();
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    v.middleRows(at, val(p).rows()) = val(p);
    at += val(p).rows();
  }
  Var out = push(std::move(v), parts);
  node(out).back = [this, parts, out] {
    Eigen::Index at = 0;
    for (Var p : parts) {
      const Eigen::Index r = val(p).rows();
      if (needs(p)) grad_ref(p) += node(out).grad.middleRows(at, r);
      at += r;
    }
  };
  return out;
}

Var Graph::slice_cols(Var a, int start, int count) {
  require(start >= 0 && count >= 0 && start + count <= val(a).cols(), "slice_cols out of range");
  Var out = push(val(a).middleCols(start, count), {a});
  node(out).back = [this, a, start, count, out] {
    if (needs(a)) grad_ref(a).middleCols(start, count) += node(out).grad;
  };
  return out;
}

Var Graph::slice_rows(Var a, int start, int count) {
  require(start >= 0 && count >= 0 && start + count <= val(a).rows(), "slice_rows out of range");
  Var out = push(val(a).middleRows(start, count), {a});
  node(out).back = [this, a, start, count, out] {
    if (needs(a)) grad_ref(a).middleRows(start, count) += node(out).grad;
  };
  return out;
}

Var Graph::gather_rows(Var a, const std::vector<int>& rows) {
  Matrix v(static_cast<Eigen::Index>(rows.size()), val(a).cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < val(a).rows(), "gather_rows index out of range");
    v.row(static_cast<Eigen::Index>(i)) = val(a).row(rows[i]);
  }
  Var out = push(std::move(v), {a});
  node(out).back = [this, a, rows, out] {
    if (!needs(a)) return;
    Matrix& ga = grad_ref(a);
    for (std::size_t i = 0; i < rows.size(); ++i) ga.row(rows[i]) += node(out).grad.row(static_cast<Eigen::Index>(i));
  };
  return out;
}

Var Graph::unfold(Var a, int k, bool causal) {
  require(k >= 1 && (causal || k % 2 == 1), "window size must be odd for centered windows");
  const Matrix& x = val(a);
  const Eigen::Index L = x.rows();
  const Eigen::Index d = x.cols();
  const int first = causal ? -(k - 1) : -(k - 1) / 2;
  Matrix v = Matrix::Zero(L, d * k);
  for (Eigen::Index i = 0; i < L; ++i) {
    for (int s = 0; s < k; ++s) {
      const Eigen::Index src = i + first + s;
      if (src >= 0 && src < L) v.block(i, s * d, 1, d) = x.row(src);
    }
  }
  Var out = push(std::move(v), {a});
  node(out).back = [this, a, k, first, L, d, out] {
    if (!needs(a)) return;
    Matrix& ga = grad_ref(a);
    const Matrix& g = node(out).grad;
    for (Eigen::Index i = 0; i < L; ++i) {
      for (int s = 0; s < k; ++s) {
        const Eigen::Index src = i + first + s;
        if (src >= 0 && src < L) ga.row(src) += g.block(i, s * d, 1, d);
      }
    }
  };
  return out;
}

Var Graph::segment_mean(Var a, const std::vector<int>& offsets) {
  require(!offsets.empty() && offsets.back() == val(a).rows(), "segment offsets must end at the row count");
  const std::size_t n = offsets.size() - 1;
  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(n), val(a).cols());
  for (std::size_t s = 0; s < n; ++s) {
    const int len = offsets[s + 1] - offsets[s];
    require(len > 0, "empty segment");
    v.row(static_cast<Eigen::Index>(s)) = val(a).middleRows(offsets[s], len).colwise().sum() / len;
  }
  Var out = push(std::move(v), {a});
  node(out).back = [this, a, offsets, n, out] {
    if (!needs(a)) return;
    Matrix& ga = grad_ref(a);
    for (std::size_t s = 0; s < n; ++s) {
      const int len = offsets[s + 1] - offsets[s];
      for (int r = offsets[s]; r < offsets[s + 1]; ++r) ga.row(r) += node(out).grad.row(static_cast<Eigen::Index>(s)) / len;
    }
  };
  return out;
}

// ---- Lookups ----------------------------------------------------------------

Var Graph::embedding(Var table, const std::vector<int>& ids) {
  const Matrix& t = val(table);
  Matrix v(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < t.rows(), "embedding id " + std::to_string(ids[i]) + " out of range");
    v.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
  }
  Var out = push(std::move(v), {table});
  node(out).back = [this, table, ids, out] {
    if (!needs(table)) return;
    Matrix& gt = grad_ref(table);
    for (std::size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += node(out).grad.row(static_cast<Eigen::Index>(i));
  };
  return out;
}

Var Graph::char_features(Var table, const std::vector<std::vector<int>>& ids, int slots) {
  const Matrix& t = val(table);
  const Eigen::Index dc = t.cols();
  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(ids.size()), dc * slots);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t s = 0; s < ids[i].size() && static_cast<int>(s) < slots; ++s) {
      const int id = ids[i][s];
      require(id >= 0 && id < t.rows(), "char id out of range");
      if (id != 0) v.block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s) * dc, 1, dc) = t.row(id);
    }
  }
  Var out = push(std::move(v), {table});
  node(out).back = [this, table, ids, slots, dc, out] {
    if (!needs(table)) return;
    Matrix& gt = grad_ref(table);
    const Matrix& g = node(out).grad;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t s = 0; s < ids[i].size() && static_cast<int>(s) < slots; ++s) {
        if (ids[i][s] != 0) gt.row(ids[i][s]) += g.block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s) * dc, 1, dc);
      }
    }
  };
  return out;
}

// ---- Reductions -------------------------------------------------------------

Var Graph::sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = val(a).sum();
  Var out = push(std::move(v), {a});
  node(out).back = [this, a, out] {
    if (needs(a)) grad_ref(a).array() += node(out).grad(0, 0);
  };
  return out;
}

Var Graph::gather_elements(Var a, const std::vector<std::pair<int, int>>& at) {
  Matrix v(static_cast<Eigen::Index>(at.size()), 1);
  for (std::size_t i = 0; i < at.size(); ++i) {
    require(at[i].first >= 0 && at[i].first < val(a).rows() && at[i].second >= 0 && at[i].second < val(a).cols(),
            "gather_elements index out of range");
    v(static_cast<Eigen::Index>(i), 0) = val(a)(at[i].first, at[i].second);
  }
  Var out = push(std::move(v), {a});
  node(out).back = [this, a, at, out] {
    if (!needs(a)) return;
    Matrix& ga = grad_ref(a);
    for (std::size_t i = 0; i < at.size(); ++i) ga(at[i].first, at[i].second) += node(out).grad(static_cast<Eigen::Index>(i), 0);
  };
  return out;
}

Var Graph::masked_row_sum(Var a, const Matrix& mask) {
  require(mask.rows() == val(a).rows() && mask.cols() == val(a).cols(), "masked_row_sum mask shape");
  Var out = push(val(a).cwiseProduct(mask).rowwise().sum(), {a});
  node(out).back = [this, a, mask, out] {
    if (!needs(a)) return;
    Matrix& ga = grad_ref(a);
    const Matrix& g = node(out).grad;
    for (Eigen::Index i = 0; i < ga.rows(); ++i) ga.row(i) += g(i, 0) * mask.row(i);
  };
  return out;
}

Var Graph::dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  require(rate < 1.0, "dropout rate must be below 1");
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(val(a).rows(), val(a).cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  Var out = push(val(a).cwiseProduct(mask), {a});
  node(out).back = [this, a, mask = std::move(mask), out] { acc(a, node(out).grad.cwiseProduct(mask)); };
  return out;
}

}  // namespace cgt::nn
