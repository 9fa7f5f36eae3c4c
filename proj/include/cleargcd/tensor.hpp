#pragma once

// Dense f64 arrays and a single-writer tape for reverse-mode differentiation.
//
// Every value on a tape is a 2-D row-major matrix; scalars are 1x1. A Tensor
// may have any rank when it is only used as data (images are C x H x W).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cleargcd {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

class Tensor {
 public:
  Tensor() : shape_{0, 0} {}
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
  }
  static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }
  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 1 : shape_.front(); }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : numel() / rows(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
    return data_[0];
  }

  std::span<const double> row(std::size_t r) const { return data().subspan(r * cols(), cols()); }
  std::span<double> row(std::size_t r) { return data().subspan(r * cols(), cols()); }

  Tensor reshaped(Shape s) const { return Tensor(std::move(s), data_); }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) {
    requires_grad_ = on;
    if (!on) grad_.reset();
  }

  const std::optional<std::vector<double>>& grad() const { return grad_; }
  std::vector<double>& grad_buffer() {
    if (!grad_) grad_.emplace(data_.size(), 0.0);
    return *grad_;
  }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

enum class OpKind {
  kConstant,
  kParam,
  kMatmul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kAddRow,
  kExp,
  kLog,
  kNeg,
  kScale,
  kRelu,
  kSigmoid,
  kSum,
  kMean,
  kSumRows,
  kGatherRows,
  kConcatRows,
  kL2NormalizeRows,
  kSoftmaxRows,
  kLogSoftmaxRows,
  kStopGradient,
  kCustom,
};

inline constexpr double kNormFloor = 1e-12;

/// Append-only record of primitive applications. Node inputs always precede
/// the node, so reverse append order is a valid topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t) { return push(OpKind::kConstant, {}, std::move(t), false, nullptr); }

  /// Binds a parameter. backward() accumulates into p.grad_buffer() when
  /// p.requires_grad() is set; otherwise the parameter acts as a constant.
  Var param(Tensor& p) {
    Tensor v(p.shape(), p.storage());
    bool rg = p.requires_grad();
    Var out = push(OpKind::kParam, {}, std::move(v), rg, nullptr);
    if (rg) nodes_[out.id].leaf = &p;
    return out;
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }

  // ---- primitives -------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols() != B.rows())
      throw ShapeError("matmul shape mismatch: " + shape_str(A.shape()) + " vs " +
                       shape_str(B.shape()));
    Tensor out({A.rows(), B.cols()});
    mat(out) = cmat(A) * cmat(B);
    return push(OpKind::kMatmul, {a.id, b.id}, std::move(out), needs(a) || needs(b),
                [a, b](Tape& t, std::size_t self) {
                  const auto g = cmat(t.nodes_[self].grad, t.value({&t, self}).shape());
                  if (t.needs(a)) mat(t.grad_of(a), t.value(a).shape()) += g * cmat(t.value(b)).transpose();
                  if (t.needs(b)) mat(t.grad_of(b), t.value(b).shape()) += cmat(t.value(a)).transpose() * g;
                });
  }

  Var transpose(Var a) {
    const Tensor& A = value(a);
    Tensor out({A.cols(), A.rows()});
    mat(out) = cmat(A).transpose();
    return push(OpKind::kTranspose, {a.id}, std::move(out), needs(a),
                [a](Tape& t, std::size_t self) {
                  const auto g = cmat(t.nodes_[self].grad, t.value({&t, self}).shape());
                  mat(t.grad_of(a), t.value(a).shape()) += g.transpose();
                });
  }

  Var add(Var a, Var b) { return binary(OpKind::kAdd, a, b); }
  Var sub(Var a, Var b) { return binary(OpKind::kSub, a, b); }
  Var mul(Var a, Var b) { return binary(OpKind::kMul, a, b); }
  Var div(Var a, Var b) { return binary(OpKind::kDiv, a, b); }

  /// a[m x n] + b[1 x n], b broadcast over rows.
  Var add_row(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (B.numel() != A.cols())
      throw ShapeError("add_row shape mismatch: " + shape_str(A.shape()) + " vs " +
                       shape_str(B.shape()));
    Tensor out = as_matrix(A);
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += B[c];
    return push(OpKind::kAddRow, {a.id, b.id}, std::move(out), needs(a) || needs(b),
                [a, b](Tape& t, std::size_t self) {
                  const auto& g = t.nodes_[self].grad;
                  const std::size_t n = t.value(b).numel();
                  if (t.needs(a)) axpy(t.grad_of(a), g, 1.0);
                  if (t.needs(b)) {
                    auto& gb = t.grad_of(b);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
                  }
                });
  }

  Var exp(Var a) {
    Tensor out = map(value(a), [](double x) { return std::exp(x); });
    return push(OpKind::kExp, {a.id}, std::move(out), needs(a), [a](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      const auto& y = t.nodes_[self].value;
      auto& ga = t.grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    });
  }

  Var log(Var a) {
    const Tensor& A = value(a);
    for (double x : A.data())
      if (!(x > 0.0)) throw DomainError("log of non-positive value " + std::to_string(x));
    Tensor out = map(A, [](double x) { return std::log(x); });
    return push(OpKind::kLog, {a.id}, std::move(out), needs(a), [a](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      const Tensor& x = t.value(a);
      auto& ga = t.grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
    });
  }

  Var neg(Var a) { return scale(a, -1.0, OpKind::kNeg); }
  Var scale(Var a, double s) { return scale(a, s, OpKind::kScale); }

  Var relu(Var a) {
    Tensor out = map(value(a), [](double x) { return x > 0.0 ? x : 0.0; });
    return push(OpKind::kRelu, {a.id}, std::move(out), needs(a), [a](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      const Tensor& x = t.value(a);
      auto& ga = t.grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0) ga[i] += g[i];
    });
  }

  Var sigmoid(Var a) {
    Tensor out = map(value(a), [](double x) {
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
    return push(OpKind::kSigmoid, {a.id}, std::move(out), needs(a), [a](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      const auto& y = t.nodes_[self].value;
      auto& ga = t.grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
  }

  Var sum(Var a) {
    const Tensor& A = value(a);
    double s = 0.0;
    for (double x : A.data()) s += x;
    return push(OpKind::kSum, {a.id}, Tensor::scalar(s), needs(a), [a](Tape& t, std::size_t self) {
      const double g = t.nodes_[self].grad[0];
      for (double& v : t.grad_of(a)) v += g;
    });
  }

  Var mean(Var a) {
    const Tensor& A = value(a);
    if (A.numel() == 0) throw ShapeError("mean of empty tensor");
    const double n = static_cast<double>(A.numel());
    double s = 0.0;
    for (double x : A.data()) s += x;
    return push(OpKind::kMean, {a.id}, Tensor::scalar(s / n), needs(a),
                [a, n](Tape& t, std::size_t self) {
                  const double g = t.nodes_[self].grad[0] / n;
                  for (double& v : t.grad_of(a)) v += g;
                });
  }

  /// Per-row sum: [m x n] -> [m x 1].
  Var sum_rows(Var a) {
    const Tensor& A = value(a);
    Tensor out({A.rows(), 1});
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (double x : A.row(r)) out[r] += x;
    return push(OpKind::kSumRows, {a.id}, std::move(out), needs(a), [a](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      const std::size_t n = t.value(a).cols();
      auto& ga = t.grad_of(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i / n];
    });
  }

  Var gather_rows(Var a, std::vector<std::size_t> idx) {
    const Tensor& A = value(a);
    const std::size_t n = A.cols();
    Tensor out({idx.size(), n});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] >= A.rows())
        throw ShapeError("gather_rows index " + std::to_string(idx[r]) + " out of range for " +
                         shape_str(A.shape()));
      std::copy_n(A.row(idx[r]).begin(), n, out.row(r).begin());
    }
    return push(OpKind::kGatherRows, {a.id}, std::move(out), needs(a),
                [a, idx = std::move(idx), n](Tape& t, std::size_t self) {
                  const auto& g = t.nodes_[self].grad;
                  auto& ga = t.grad_of(a);
                  for (std::size_t r = 0; r < idx.size(); ++r)
                    for (std::size_t c = 0; c < n; ++c) ga[idx[r] * n + c] += g[r * n + c];
                });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows of zero tensors");
    const std::size_t n = value(parts.front()).cols();
    std::size_t m = 0;
    bool any = false;
    std::vector<std::size_t> ids;
    for (Var p : parts) {
      const Tensor& P = value(p);
      if (P.cols() != n)
        throw ShapeError("concat_rows shape mismatch: " + shape_str(value(parts.front()).shape()) +
                         " vs " + shape_str(P.shape()));
      m += P.rows();
      any = any || needs(p);
      ids.push_back(p.id);
    }
    Tensor out({m, n});
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& P = value(p);
      std::copy(P.data().begin(), P.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
      off += P.numel();
    }
    return push(OpKind::kConcatRows, ids, std::move(out), any, [parts](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      std::size_t off = 0;
      for (Var p : parts) {
        const std::size_t len = t.value(p).numel();
        if (t.needs(p)) {
          auto& gp = t.grad_of(p);
          for (std::size_t i = 0; i < len; ++i) gp[i] += g[off + i];
        }
        off += len;
      }
    });
  }

  /// Rows divided by max(||row||, 1e-12).
  Var l2_normalize_rows(Var a) {
    const Tensor& A = value(a);
    Tensor out = as_matrix(A);
    std::vector<double> norms(A.rows());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      double s = 0.0;
      for (double x : A.row(r)) s += x * x;
      norms[r] = std::sqrt(s);
      const double d = std::max(norms[r], kNormFloor);
      for (double& x : out.row(r)) x /= d;
    }
    return push(OpKind::kL2NormalizeRows, {a.id}, std::move(out), needs(a),
                [a, norms = std::move(norms)](Tape& t, std::size_t self) {
                  const auto& g = t.nodes_[self].grad;
                  const Tensor& y = t.nodes_[self].value;
                  const std::size_t n = y.cols();
                  auto& ga = t.grad_of(a);
                  for (std::size_t r = 0; r < y.rows(); ++r) {
                    const double* gr = g.data() + r * n;
                    double* out = ga.data() + r * n;
                    if (norms[r] <= kNormFloor) {
                      for (std::size_t c = 0; c < n; ++c) out[c] += gr[c] / kNormFloor;
                      continue;
                    }
                    double dot = 0.0;
                    for (std::size_t c = 0; c < n; ++c) dot += gr[c] * y(r, c);
                    for (std::size_t c = 0; c < n; ++c) out[c] += (gr[c] - y(r, c) * dot) / norms[r];
                  }
                });
  }

  /// Row softmax of a / temperature, max-subtracted.
  Var softmax_rows(Var a, double temperature = 1.0) {
    check_temperature(temperature);
    Tensor out = softmax_values(value(a), temperature, false);
    return push(OpKind::kSoftmaxRows, {a.id}, std::move(out), needs(a),
                [a, temperature](Tape& t, std::size_t self) {
                  const auto& g = t.nodes_[self].grad;
                  const Tensor& y = t.nodes_[self].value;
                  const std::size_t n = y.cols();
                  auto& ga = t.grad_of(a);
                  for (std::size_t r = 0; r < y.rows(); ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y(r, c);
                    for (std::size_t c = 0; c < n; ++c)
                      ga[r * n + c] += y(r, c) * (g[r * n + c] - dot) / temperature;
                  }
                });
  }

  Var log_softmax_rows(Var a, double temperature = 1.0) {
    check_temperature(temperature);
    Tensor out = softmax_values(value(a), temperature, true);
    return push(OpKind::kLogSoftmaxRows, {a.id}, std::move(out), needs(a),
                [a, temperature](Tape& t, std::size_t self) {
                  const auto& g = t.nodes_[self].grad;
                  const Tensor& y = t.nodes_[self].value;
                  const std::size_t n = y.cols();
                  auto& ga = t.grad_of(a);
                  for (std::size_t r = 0; r < y.rows(); ++r) {
                    double gs = 0.0;
                    for (std::size_t c = 0; c < n; ++c) gs += g[r * n + c];
                    for (std::size_t c = 0; c < n; ++c)
                      ga[r * n + c] += (g[r * n + c] - std::exp(y(r, c)) * gs) / temperature;
                  }
                });
  }

  Var stop_gradient(Var a) { return push(OpKind::kStopGradient, {a.id}, value(a), false, nullptr); }

  /// User-defined primitive. `backward_rule(x, y, gy)` returns d(loss)/dx.
  Var custom(Var a, const std::function<Tensor(const Tensor&)>& forward,
             std::function<std::vector<double>(const Tensor& x, const Tensor& y,
                                               const std::vector<double>& gy)>
                 backward_rule) {
    Tensor out = forward(value(a));
    return push(OpKind::kCustom, {a.id}, std::move(out), needs(a),
                [a, rule = std::move(backward_rule)](Tape& t, std::size_t self) {
                  auto gx = rule(t.value(a), t.nodes_[self].value, t.nodes_[self].grad);
                  axpy(t.grad_of(a), gx, 1.0);
                });
  }

  // ---- reverse pass -----------------------------------------------------

  void backward(Var loss) {
    const Tensor& L = value(loss);
    if (L.numel() != 1)
      throw ShapeError("backward requires a scalar loss, got " + shape_str(L.shape()));
    if (!nodes_[loss.id].needs_grad) return;
    for (auto& n : nodes_) n.grad.clear();
    nodes_[loss.id].grad.assign(1, 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.leaf) {
        axpy(n.leaf->grad_buffer(), n.grad, 1.0);
      } else if (n.backward) {
        n.backward(*this, i);
      }
    }
  }

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool needs_grad = false;
    BackwardFn backward;
    Tensor* leaf = nullptr;
    std::vector<double> grad;
  };

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  static Eigen::Map<const RowMat> cmat(const Tensor& t) {
    return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
  }
  static Eigen::Map<RowMat> mat(Tensor& t) {
    return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
  }
  static std::pair<Eigen::Index, Eigen::Index> dims(const Shape& s) {
    const std::size_t r = s.empty() ? 1 : s.front();
    const std::size_t c = r == 0 ? 0 : shape_numel(s) / r;
    return {static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
  }
  static Eigen::Map<const RowMat> cmat(const std::vector<double>& g, const Shape& s) {
    const auto [r, c] = dims(s);
    return {g.data(), r, c};
  }
  static Eigen::Map<RowMat> mat(std::vector<double>& g, const Shape& s) {
    const auto [r, c] = dims(s);
    return {g.data(), r, c};
  }

  static void axpy(std::vector<double>& y, const std::vector<double>& x, double a) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
  }

  static Tensor as_matrix(const Tensor& t) { return Tensor({t.rows(), t.cols()}, t.storage()); }

  template <class F>
  static Tensor map(const Tensor& t, F f) {
    Tensor out = as_matrix(t);
    for (double& x : out.data()) x = f(x);
    return out;
  }

  static void check_temperature(double temperature) {
    if (!(temperature > 0.0))
      throw DomainError("softmax temperature must be positive, got " + std::to_string(temperature));
  }

  static Tensor softmax_values(const Tensor& A, double temperature, bool log_space) {
    Tensor out = as_matrix(A);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      double mx = -std::numeric_limits<double>::infinity();
      for (double x : row) mx = std::max(mx, x);
      double s = 0.0;
      for (double& x : row) {
        x = (x - mx) / temperature;
        s += std::exp(x);
      }
      if (log_space) {
        const double ls = std::log(s);
        for (double& x : row) x -= ls;
      } else {
        for (double& x : row) x = std::exp(x) / s;
      }
    }
    return out;
  }

  bool needs(Var v) const { return nodes_[v.id].needs_grad; }

  std::vector<double>& grad_of(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad.assign(n.value.numel(), 0.0);
    return n.grad;
  }

  Var scale(Var a, double s, OpKind kind) {
    Tensor out = map(value(a), [s](double x) { return s * x; });
    return push(kind, {a.id}, std::move(out), needs(a), [a, s](Tape& t, std::size_t self) {
      axpy(t.grad_of(a), t.nodes_[self].grad, s);
    });
  }

  Var binary(OpKind kind, Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) {
      static const char* names[] = {"add", "sub", "mul", "div"};
      const int k = static_cast<int>(kind) - static_cast<int>(OpKind::kAdd);
      throw ShapeError(std::string(names[k]) + " shape mismatch: " + shape_str(A.shape()) + " vs " +
                       shape_str(B.shape()));
    }
    Tensor out = as_matrix(A);
    for (std::size_t i = 0; i < out.numel(); ++i) {
      switch (kind) {
        case OpKind::kAdd: out[i] += B[i]; break;
        case OpKind::kSub: out[i] -= B[i]; break;
        case OpKind::kMul: out[i] *= B[i]; break;
        default:
          if (B[i] == 0.0) throw DomainError("division by zero");
          out[i] /= B[i];
      }
    }
    return push(kind, {a.id, b.id}, std::move(out), needs(a) || needs(b),
                [a, b, kind](Tape& t, std::size_t self) {
                  const auto& g = t.nodes_[self].grad;
                  const Tensor& x = t.value(a);
                  const Tensor& y = t.value(b);
                  const bool na = t.needs(a), nb = t.needs(b);
                  std::vector<double>* ga = na ? &t.grad_of(a) : nullptr;
                  std::vector<double>* gb = nb ? &t.grad_of(b) : nullptr;
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    switch (kind) {
                      case OpKind::kAdd:
                        if (na) (*ga)[i] += g[i];
                        if (nb) (*gb)[i] += g[i];
                        break;
                      case OpKind::kSub:
                        if (na) (*ga)[i] += g[i];
                        if (nb) (*gb)[i] -= g[i];
                        break;
                      case OpKind::kMul:
                        if (na) (*ga)[i] += g[i] * y[i];
                        if (nb) (*gb)[i] += g[i] * x[i];
                        break;
                      default:
                        if (na) (*ga)[i] += g[i] / y[i];
                        if (nb) (*gb)[i] -= g[i] * x[i] / (y[i] * y[i]);
                    }
                  }
                });
  }

  Var push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, bool needs_grad, BackwardFn fn) {
    if (value.shape().size() != 2) value = as_matrix(value);
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value), needs_grad, std::move(fn), nullptr, {}});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape->div(a, b); }
inline Var operator-(Var a) { return a.tape->neg(a); }
inline Var operator*(double s, Var a) { return a.tape->scale(a, s); }

}  // namespace cleargcd
