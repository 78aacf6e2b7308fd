#include "a4g/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace a4g {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_finite(const std::vector<double>& values, const char* where) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string(where) + ": non-finite value produced");
    }
  }
}

Tape* common_tape(std::initializer_list<const Tensor*> ts, const char* where) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->tracked()) continue;
    if (tape == nullptr) {
      tape = t->tape();
    } else if (tape != t->tape()) {
      throw std::invalid_argument(std::string(where) + ": operands live on different tapes");
    }
  }
  return tape;
}

// Finalizes an op result: validates values, records on the tape when any
// input is tracked.
Tensor finish(Tape* tape, Shape shape, std::vector<double> values,
              std::vector<int> parents, Tape::BackwardFn fn, const char* where) {
  check_finite(values, where);
  Tensor out(std::move(shape), std::move(values));
  if (tape == nullptr) return out;
  // Drop untracked parents (id -1) so the backward walk touches real nodes only.
  std::vector<int> live;
  live.reserve(parents.size());
  for (int p : parents)
    if (p >= 0) live.push_back(p);
  return tape->emit(std::move(out), std::move(live), std::move(fn));
}

void axpy(std::vector<double>& acc, const std::vector<double>& g) {
  for (size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

int64_t checked_axis(const Tensor& a, int axis, const char* where) {
  if (axis < 0 || axis >= a.rank()) {
    throw std::invalid_argument(std::string(where) + ": axis out of range");
  }
  return axis;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : shape_{}, data_(std::make_shared<std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  for (int64_t d : shape_) {
    if (d <= 0) throw std::invalid_argument("Tensor: dims must be positive, got " + shape_str(shape_));
  }
  if (shape_size(shape_) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  check_finite(values, "Tensor");
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double v) {
  const int64_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), v));
}

double Tensor::value() const {
  if (size() != 1) {
    throw std::invalid_argument("Tensor::value: tensor of shape " + shape_str(shape_) + " is not scalar");
  }
  return (*data_)[0];
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = -1;
  return t;
}

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::leaf(const Tensor& value) {
  if (consumed_) throw std::logic_error("Tape::leaf: tape already consumed");
  Tensor t = value.detached();
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{t.size(), t.shape(), {}, nullptr});
  return t;
}

Tensor Tape::emit(Tensor value, std::vector<int> parents, BackwardFn fn) {
  if (consumed_) throw std::logic_error("Tape::emit: tape already consumed");
  value.tape_ = this;
  value.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{value.size(), value.shape(), std::move(parents), std::move(fn)});
  return value;
}

std::vector<double>& Tape::grad_buffer(int node) {
  if (!in_backward_) throw std::logic_error("Tape::grad_buffer: only valid during backward");
  touched_[static_cast<size_t>(node)] = 1;
  return grads_[static_cast<size_t>(node)];
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("Tape::backward: tape already consumed");
  if (loss.tape() != this || loss.node() < 0) {
    throw std::invalid_argument("Tape::backward: loss is not recorded on this tape");
  }
  if (loss.size() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  grads_.resize(nodes_.size());
  touched_.assign(nodes_.size(), 0);
  for (size_t i = 0; i < nodes_.size(); ++i) {
    grads_[i].assign(static_cast<size_t>(nodes_[i].size), 0.0);
  }
  grads_[static_cast<size_t>(loss.node())][0] = 1.0;
  touched_[static_cast<size_t>(loss.node())] = 1;

  in_backward_ = true;
  for (int i = loss.node(); i >= 0; --i) {
    const Node& n = nodes_[static_cast<size_t>(i)];
    if (!touched_[static_cast<size_t>(i)] || !n.backward) continue;
    n.backward(grads_[static_cast<size_t>(i)], *this);
  }
  in_backward_ = false;
  consumed_ = true;
}

Tensor Tape::grad(const Tensor& t) const {
  if (!consumed_) throw std::logic_error("Tape::grad: backward has not run");
  if (t.tape() != this || t.node() < 0) {
    throw std::invalid_argument("Tape::grad: tensor is not recorded on this tape");
  }
  const auto& g = grads_[static_cast<size_t>(t.node())];
  check_finite(g, "Tape::grad");
  return Tensor(t.shape(), g);
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

enum class BinKind { Add, Sub, Mul, Div };

const char* bin_name(BinKind k) {
  switch (k) {
    case BinKind::Add: return "add";
    case BinKind::Sub: return "sub";
    case BinKind::Mul: return "mul";
    case BinKind::Div: return "div";
  }
  return "?";
}

// Shapes must be equal, or one operand must be a single-element scalar.
Tensor binary(BinKind kind, const Tensor& a, const Tensor& b) {
  const char* name = bin_name(kind);
  const bool a_scalar = a.size() == 1;
  const bool b_scalar = b.size() == 1;
  if (!same_shape(a.shape(), b.shape()) && !a_scalar && !b_scalar) {
    throw std::invalid_argument(std::string(name) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  // Prefer the left operand's shape when both are single-element.
  Shape out_shape = same_shape(a.shape(), b.shape()) ? a.shape() : (b_scalar ? a.shape() : b.shape());
  const int64_t n = shape_size(out_shape);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double x = av[a_scalar ? 0 : static_cast<size_t>(i)];
    const double y = bv[b_scalar ? 0 : static_cast<size_t>(i)];
    switch (kind) {
      case BinKind::Add: out[static_cast<size_t>(i)] = x + y; break;
      case BinKind::Sub: out[static_cast<size_t>(i)] = x - y; break;
      case BinKind::Mul: out[static_cast<size_t>(i)] = x * y; break;
      case BinKind::Div: out[static_cast<size_t>(i)] = x / y; break;
    }
  }

  Tape* tape = common_tape({&a, &b}, name);
  Tape::BackwardFn fn;
  if (tape != nullptr) {
    const int pa = a.node(), pb = b.node();
    const bool ta = a.tracked(), tb = b.tracked();
    auto av_keep = a.values();
    auto bv_keep = b.values();
    fn = [kind, pa, pb, ta, tb, a_scalar, b_scalar, av_keep, bv_keep](
             const std::vector<double>& g, Tape& t) {
      const size_t n = g.size();
      if (ta) {
        auto& ga = t.grad_buffer(pa);
        for (size_t i = 0; i < n; ++i) {
          const size_t ia = a_scalar ? 0 : i;
          const double y = bv_keep[b_scalar ? 0 : i];
          double d = 0;
          switch (kind) {
            case BinKind::Add: d = g[i]; break;
            case BinKind::Sub: d = g[i]; break;
            case BinKind::Mul: d = g[i] * y; break;
            case BinKind::Div: d = g[i] / y; break;
          }
          ga[ia] += d;
        }
      }
      if (tb) {
        auto& gb = t.grad_buffer(pb);
        for (size_t i = 0; i < n; ++i) {
          const size_t ib = b_scalar ? 0 : i;
          const double x = av_keep[a_scalar ? 0 : i];
          const double y = bv_keep[ib];
          double d = 0;
          switch (kind) {
            case BinKind::Add: d = g[i]; break;
            case BinKind::Sub: d = -g[i]; break;
            case BinKind::Mul: d = g[i] * x; break;
            case BinKind::Div: d = -g[i] * x / (y * y); break;
          }
          gb[ib] += d;
        }
      }
    };
  }
  return finish(tape, std::move(out_shape), std::move(out), {a.node(), b.node()}, std::move(fn), name);
}

// Unary op with pointwise derivative computed alongside the value.
Tensor unary(const Tensor& a, const char* name, double (*f)(double), double (*df)(double)) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  Tape* tape = common_tape({&a}, name);
  Tape::BackwardFn fn;
  if (tape != nullptr) {
    const int pa = a.node();
    auto av_keep = av;
    fn = [pa, av_keep, df](const std::vector<double>& g, Tape& t) {
      auto& ga = t.grad_buffer(pa);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(av_keep[i]);
    };
  }
  return finish(tape, a.shape(), std::move(out), {a.node()}, std::move(fn), name);
}

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_bwd(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}
double exp_fwd(double x) { return std::exp(x); }
double log_fwd(double x) { return std::log(x); }
double log_bwd(double x) { return 1.0 / x; }
double sqrt_fwd(double x) { return std::sqrt(x); }
double sqrt_bwd(double x) { return 0.5 / std::sqrt(x); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinKind::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(BinKind::Div, a, b); }
Tensor add(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
Tensor sub(const Tensor& a, double c) { return sub(a, Tensor::scalar(c)); }
Tensor sub(double c, const Tensor& a) { return sub(Tensor::scalar(c), a); }
Tensor mul(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }
Tensor div(const Tensor& a, double c) { return div(a, Tensor::scalar(c)); }
Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor gelu(const Tensor& a) { return unary(a, "gelu", gelu_fwd, gelu_bwd); }

Tensor exp(const Tensor& a) { return unary(a, "exp", exp_fwd, exp_fwd); }

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (v <= 0.0) throw std::domain_error("log: input must be positive");
  }
  return unary(a, "log", log_fwd, log_bwd);
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.values()) {
    if (v < 0.0) throw std::domain_error("sqrt: input must be nonnegative");
  }
  return unary(a, "sqrt", sqrt_fwd, sqrt_bwd);
}

// ---------------------------------------------------------------------------
// reductions

namespace {

// Single-axis reduction bookkeeping: out[outer, inner] over in[outer, k, inner].
struct AxisSplit {
  int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
  s.len = shape[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, int axis) {
  Shape out;
  for (int i = 0; i < static_cast<int>(shape.size()); ++i) {
    if (i != axis) out.push_back(shape[static_cast<size_t>(i)]);
  }
  return out;
}

enum class RedKind { Sum, Mean, Max };

Tensor reduce_axis(RedKind kind, const Tensor& a, int axis) {
  checked_axis(a, axis, "reduce");
  const AxisSplit s = split_at(a.shape(), axis);
  Shape out_shape = drop_axis(a.shape(), axis);
  const auto& av = a.values();
  std::vector<double> out(static_cast<size_t>(s.outer * s.inner),
                          kind == RedKind::Max ? -std::numeric_limits<double>::infinity() : 0.0);
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t k = 0; k < s.len; ++k) {
      const int64_t base = (o * s.len + k) * s.inner;
      for (int64_t i = 0; i < s.inner; ++i) {
        const double v = av[static_cast<size_t>(base + i)];
        const size_t oi = static_cast<size_t>(o * s.inner + i);
        switch (kind) {
          case RedKind::Sum:
          case RedKind::Mean: out[oi] += v; break;
          case RedKind::Max:
            if (v > out[oi]) out[oi] = v;
            break;
        }
      }
    }
  }
  if (kind == RedKind::Mean) {
    for (double& v : out) v /= static_cast<double>(s.len);
  }

  Tape* tape = common_tape({&a}, "reduce");
  Tape::BackwardFn fn;
  if (tape != nullptr) {
    if (kind == RedKind::Max) {
      throw std::invalid_argument("max_reduce is not differentiable; detach the input first");
    }
    const int pa = a.node();
    const double scale = kind == RedKind::Mean ? 1.0 / static_cast<double>(s.len) : 1.0;
    fn = [pa, s, scale](const std::vector<double>& g, Tape& t) {
      auto& ga = t.grad_buffer(pa);
      for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t k = 0; k < s.len; ++k) {
          const int64_t base = (o * s.len + k) * s.inner;
          for (int64_t i = 0; i < s.inner; ++i) {
            ga[static_cast<size_t>(base + i)] += g[static_cast<size_t>(o * s.inner + i)] * scale;
          }
        }
      }
    };
  }
  return finish(tape, std::move(out_shape), std::move(out), {a.node()}, std::move(fn), "reduce");
}

Tensor reduce_multi(RedKind kind, const Tensor& a, std::vector<int> axes) {
  if (axes.empty()) throw std::invalid_argument("reduce: empty reduction axis list");
  std::sort(axes.begin(), axes.end());
  if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) {
    throw std::invalid_argument("reduce: duplicate axis");
  }
  Tensor cur = a;
  // Reduce from the highest axis so earlier indices stay valid.
  for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
    cur = reduce_axis(kind, cur, *it);
  }
  return cur;
}

std::vector<int> all_axes(const Tensor& a) {
  std::vector<int> axes(static_cast<size_t>(a.rank()));
  std::iota(axes.begin(), axes.end(), 0);
  return axes;
}

}  // namespace

Tensor sum(const Tensor& a) {
  if (a.rank() == 0) return a;
  return reduce_multi(RedKind::Sum, a, all_axes(a));
}

Tensor sum(const Tensor& a, const std::vector<int>& axes) { return reduce_multi(RedKind::Sum, a, axes); }

Tensor mean(const Tensor& a) {
  if (a.rank() == 0) return a;
  return reduce_multi(RedKind::Mean, a, all_axes(a));
}

Tensor mean(const Tensor& a, const std::vector<int>& axes) { return reduce_multi(RedKind::Mean, a, axes); }

Tensor max_reduce(const Tensor& a, const std::vector<int>& axes) {
  return reduce_multi(RedKind::Max, a.detached(), axes);
}

Tensor l2norm(const Tensor& a) { return sqrt(sum(mul(a, a))); }

// ---------------------------------------------------------------------------
// matmul / transpose

namespace {

std::vector<double> matmul_raw(const std::vector<double>& a, const std::vector<double>& b,
                               int64_t m, int64_t k, int64_t n) {
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const double x = a[static_cast<size_t>(i * k + p)];
      const int64_t brow = p * n;
      const int64_t orow = i * n;
      for (int64_t j = 0; j < n; ++j) {
        out[static_cast<size_t>(orow + j)] += x * b[static_cast<size_t>(brow + j)];
      }
    }
  }
  return out;
}

std::vector<double> transpose_raw(const std::vector<double>& a, int64_t r, int64_t c) {
  std::vector<double> out(a.size());
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) {
      out[static_cast<size_t>(j * r + i)] = a[static_cast<size_t>(i * c + j)];
    }
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul: expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  std::vector<double> out = matmul_raw(a.values(), b.values(), m, k, n);

  Tape* tape = common_tape({&a, &b}, "matmul");
  Tape::BackwardFn fn;
  if (tape != nullptr) {
    const int pa = a.node(), pb = b.node();
    const bool ta = a.tracked(), tb = b.tracked();
    auto av = a.values();
    auto bv = b.values();
    fn = [pa, pb, ta, tb, av, bv, m, k, n](const std::vector<double>& g, Tape& t) {
      if (ta) {
        // grad_a = g . b^T
        auto bt = transpose_raw(bv, k, n);
        auto ga = matmul_raw(g, bt, m, n, k);
        axpy(t.grad_buffer(pa), ga);
      }
      if (tb) {
        // grad_b = a^T . g
        auto at = transpose_raw(av, m, k);
        auto gb = matmul_raw(at, g, k, m, n);
        axpy(t.grad_buffer(pb), gb);
      }
    };
  }
  return finish(tape, {m, n}, std::move(out), {a.node(), b.node()}, std::move(fn), "matmul");
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: expects 2-D operand");
  const int64_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out = transpose_raw(a.values(), r, c);
  Tape* tape = common_tape({&a}, "transpose");
  Tape::BackwardFn fn;
  if (tape != nullptr) {
    const int pa = a.node();
    fn = [pa, r, c](const std::vector<double>& g, Tape& t) {
      auto gt = transpose_raw(g, c, r);
      axpy(t.grad_buffer(pa), gt);
    };
  }
  return finish(tape, {c, r}, std::move(out), {a.node()}, std::move(fn), "transpose");
}

// ---------------------------------------------------------------------------
// layernorm

Tensor layernorm(const Tensor& a, const Tensor& scale, const Tensor& shift, double eps) {
  if (a.rank() < 1) throw std::invalid_argument("layernorm: input must have rank >= 1");
  const int64_t d = a.dim(a.rank() - 1);
  if (scale.rank() != 1 || shift.rank() != 1 || scale.dim(0) != d || shift.dim(0) != d) {
    throw std::invalid_argument("layernorm: scale/shift must be [d] with d = last input axis");
  }
  const int64_t rows = a.size() / d;
  const auto& av = a.values();
  const auto& gv = scale.values();
  const auto& bv = shift.values();

  std::vector<double> xhat(av.size());
  std::vector<double> inv_std(static_cast<size_t>(rows));
  std::vector<double> out(av.size());
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t base = r * d;
    double mu = 0;
    for (int64_t j = 0; j < d; ++j) mu += av[static_cast<size_t>(base + j)];
    mu /= static_cast<double>(d);
    double var = 0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = av[static_cast<size_t>(base + j)] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = inv;
    for (int64_t j = 0; j < d; ++j) {
      const double xh = (av[static_cast<size_t>(base + j)] - mu) * inv;
      xhat[static_cast<size_t>(base + j)] = xh;
      out[static_cast<size_t>(base + j)] = xh * gv[static_cast<size_t>(j)] + bv[static_cast<size_t>(j)];
    }
  }

  Tape* tape = common_tape({&a, &scale, &shift}, "layernorm");
  Tape::BackwardFn fn;
  if (tape != nullptr) {
    const int pa = a.node(), pg = scale.node(), pb = shift.node();
    const bool ta = a.tracked(), tg = scale.tracked(), tb = shift.tracked();
    auto gv_keep = gv;
    fn = [pa, pg, pb, ta, tg, tb, xhat, inv_std, gv_keep, rows, d](const std::vector<double>& g, Tape& t) {
      if (ta) {
        auto& ga = t.grad_buffer(pa);
        for (int64_t r = 0; r < rows; ++r) {
          const int64_t base = r * d;
          double s1 = 0, s2 = 0;  // mean(dy*gamma), mean(dy*gamma*xhat)
          for (int64_t j = 0; j < d; ++j) {
            const double dyg = g[static_cast<size_t>(base + j)] * gv_keep[static_cast<size_t>(j)];
            s1 += dyg;
            s2 += dyg * xhat[static_cast<size_t>(base + j)];
          }
          s1 /= static_cast<double>(d);
          s2 /= static_cast<double>(d);
          const double inv = inv_std[static_cast<size_t>(r)];
          for (int64_t j = 0; j < d; ++j) {
            const double dyg = g[static_cast<size_t>(base + j)] * gv_keep[static_cast<size_t>(j)];
            ga[static_cast<size_t>(base + j)] +=
                inv * (dyg - s1 - xhat[static_cast<size_t>(base + j)] * s2);
          }
        }
      }
      if (tg) {
        auto& gg = t.grad_buffer(pg);
        for (int64_t r = 0; r < rows; ++r) {
          const int64_t base = r * d;
          for (int64_t j = 0; j < d; ++j) {
            gg[static_cast<size_t>(j)] +=
                g[static_cast<size_t>(base + j)] * xhat[static_cast<size_t>(base + j)];
          }
        }
      }
      if (tb) {
        auto& gb = t.grad_buffer(pb);
        for (int64_t r = 0; r < rows; ++r) {
          const int64_t base = r * d;
          for (int64_t j = 0; j < d; ++j) gb[static_cast<size_t>(j)] += g[static_cast<size_t>(base + j)];
        }
      }
    };
  }
  return finish(tape, a.shape(), std::move(out), {a.node(), scale.node(), shift.node()}, std::move(fn),
                "layernorm");
}

// ---------------------------------------------------------------------------
// softmax / attention

Tensor softmax_rows(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("softmax_rows: expects 2-D input");
  const int64_t rows = a.dim(0), cols = a.dim(1);
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t base = r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < cols; ++j) mx = std::max(mx, av[static_cast<size_t>(base + j)]);
    double z = 0;
    for (int64_t j = 0; j < cols; ++j) {
      const double e = std::exp(av[static_cast<size_t>(base + j)] - mx);
      out[static_cast<size_t>(base + j)] = e;
      z += e;
    }
    for (int64_t j = 0; j < cols; ++j) out[static_cast<size_t>(base + j)] /= z;
  }

  Tape* tape = common_tape({&a}, "softmax_rows");
  Tape::BackwardFn fn;
  if (tape != nullptr) {
    const int pa = a.node();
    auto y = out;
    fn = [pa, y, rows, cols](const std::vector<double>& g, Tape& t) {
      auto& ga = t.grad_buffer(pa);
      for (int64_t r = 0; r < rows; ++r) {
        const int64_t base = r * cols;
        double dot = 0;
        for (int64_t j = 0; j < cols; ++j) {
          dot += g[static_cast<size_t>(base + j)] * y[static_cast<size_t>(base + j)];
        }
        for (int64_t j = 0; j < cols; ++j) {
          ga[static_cast<size_t>(base + j)] +=
              y[static_cast<size_t>(base + j)] * (g[static_cast<size_t>(base + j)] - dot);
        }
      }
    };
  }
  return finish(tape, a.shape(), std::move(out), {a.node()}, std::move(fn), "softmax_rows");
}

Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw std::invalid_argument("softmax_attention: expects 2-D q,k,v");
  }
  if (q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
    throw std::invalid_argument("softmax_attention: incompatible shapes q" + shape_str(q.shape()) +
                                " k" + shape_str(k.shape()) + " v" + shape_str(v.shape()));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = mul(matmul(q, transpose(k)), scale);
  return matmul(softmax_rows(scores), v);
}

// ---------------------------------------------------------------------------
// structural ops

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw std::invalid_argument("reshape: cannot reshape " + shape_str(a.shape()) + " to " +
                                shape_str(shape));
  }
  std::vector<double> out = a.values();
  Tape* tape = common_tape({&a}, "reshape");
  Tape::BackwardFn fn;
  if (tape != nullptr) {
    const int pa = a.node();
    fn = [pa](const std::vector<double>& g, Tape& t) { axpy(t.grad_buffer(pa), g); };
  }
  return finish(tape, std::move(shape), std::move(out), {a.node()}, std::move(fn), "reshape");
}

Tensor gather_flat(const Tensor& a, std::vector<int64_t> index, Shape out_shape) {
  if (static_cast<int64_t>(index.size()) != shape_size(out_shape)) {
    throw std::invalid_argument("gather_flat: index size does not match output shape");
  }
  const auto& av = a.values();
  std::vector<double> out(index.size());
  for (size_t i = 0; i < index.size(); ++i) {
    const int64_t src = index[i];
    if (src < 0 || src >= a.size()) throw std::invalid_argument("gather_flat: index out of range");
    out[i] = av[static_cast<size_t>(src)];
  }
  Tape* tape = common_tape({&a}, "gather_flat");
  Tape::BackwardFn fn;
  if (tape != nullptr) {
    const int pa = a.node();
    fn = [pa, index](const std::vector<double>& g, Tape& t) {
      auto& ga = t.grad_buffer(pa);
      for (size_t i = 0; i < index.size(); ++i) ga[static_cast<size_t>(index[i])] += g[i];
    };
  }
  return finish(tape, std::move(out_shape), std::move(out), {a.node()}, std::move(fn), "gather_flat");
}

Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& rows) {
  if (a.rank() != 2) throw std::invalid_argument("gather_rows: expects 2-D input");
  const int64_t c = a.dim(1);
  std::vector<int64_t> index;
  index.reserve(rows.size() * static_cast<size_t>(c));
  for (int64_t r : rows) {
    if (r < 0 || r >= a.dim(0)) throw std::invalid_argument("gather_rows: row out of range");
    for (int64_t j = 0; j < c; ++j) index.push_back(r * c + j);
  }
  return gather_flat(a, std::move(index), {static_cast<int64_t>(rows.size()), c});
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const int64_t c = parts[0].rank() == 2 ? parts[0].dim(1) : -1;
  int64_t rows = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(1) != c) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(rows * c));
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    if (p.tracked()) {
      if (tape != nullptr && tape != p.tape()) {
        throw std::invalid_argument("concat_rows: operands live on different tapes");
      }
      tape = p.tape();
    }
  }
  Tape::BackwardFn fn;
  std::vector<int> parents;
  if (tape != nullptr) {
    struct Piece {
      int node;
      size_t offset, count;
    };
    std::vector<Piece> pieces;
    size_t off = 0;
    for (const Tensor& p : parts) {
      const size_t cnt = static_cast<size_t>(p.size());
      if (p.tracked()) pieces.push_back({p.node(), off, cnt});
      off += cnt;
    }
    for (const Piece& pc : pieces) parents.push_back(pc.node);
    fn = [pieces](const std::vector<double>& g, Tape& t) {
      for (const Piece& pc : pieces) {
        auto& gp = t.grad_buffer(pc.node);
        for (size_t i = 0; i < pc.count; ++i) gp[i] += g[pc.offset + i];
      }
    };
  }
  check_finite(out, "concat_rows");
  Tensor result({rows, c}, std::move(out));
  if (tape == nullptr) return result;
  return tape->emit(std::move(result), std::move(parents), std::move(fn));
}

Tensor slice_cols(const Tensor& a, int64_t start, int64_t len) {
  if (a.rank() != 2) throw std::invalid_argument("slice_cols: expects 2-D input");
  if (start < 0 || len <= 0 || start + len > a.dim(1)) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  const int64_t r = a.dim(0), c = a.dim(1);
  std::vector<int64_t> index;
  index.reserve(static_cast<size_t>(r * len));
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < len; ++j) index.push_back(i * c + start + j);
  }
  return gather_flat(a, std::move(index), {r, len});
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int64_t r = parts[0].rank() == 2 ? parts[0].dim(0) : -1;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(0) != r) throw std::invalid_argument("concat_cols: row mismatch");
  }
  // Transpose trick keeps the backward path shared with concat_rows.
  std::vector<Tensor> tr;
  tr.reserve(parts.size());
  for (const Tensor& p : parts) tr.push_back(transpose(p));
  return transpose(concat_rows(tr));
}

// ---------------------------------------------------------------------------
// row-broadcast helpers

Tensor add_rowwise(const Tensor& mat, const Tensor& vec) {
  if (mat.rank() != 2 || vec.rank() != 1 || vec.dim(0) != mat.dim(1)) {
    throw std::invalid_argument("add_rowwise: expects [n,d] and [d]");
  }
  const int64_t n = mat.dim(0), d = mat.dim(1);
  const auto& mv = mat.values();
  const auto& vv = vec.values();
  std::vector<double> out(mv.size());
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      out[static_cast<size_t>(i * d + j)] = mv[static_cast<size_t>(i * d + j)] + vv[static_cast<size_t>(j)];
    }
  }
  Tape* tape = common_tape({&mat, &vec}, "add_rowwise");
  Tape::BackwardFn fn;
  if (tape != nullptr) {
    const int pm = mat.node(), pv = vec.node();
    const bool tm = mat.tracked(), tv = vec.tracked();
    fn = [pm, pv, tm, tv, n, d](const std::vector<double>& g, Tape& t) {
      if (tm) axpy(t.grad_buffer(pm), g);
      if (tv) {
        auto& gv = t.grad_buffer(pv);
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t j = 0; j < d; ++j) gv[static_cast<size_t>(j)] += g[static_cast<size_t>(i * d + j)];
        }
      }
    };
  }
  return finish(tape, mat.shape(), std::move(out), {mat.node(), vec.node()}, std::move(fn), "add_rowwise");
}

Tensor mul_rowwise(const Tensor& mat, const Tensor& vec) {
  if (mat.rank() != 2 || vec.rank() != 1 || vec.dim(0) != mat.dim(1)) {
    throw std::invalid_argument("mul_rowwise: expects [n,d] and [d]");
  }
  const int64_t n = mat.dim(0), d = mat.dim(1);
  const auto& mv = mat.values();
  const auto& vv = vec.values();
  std::vector<double> out(mv.size());
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      out[static_cast<size_t>(i * d + j)] = mv[static_cast<size_t>(i * d + j)] * vv[static_cast<size_t>(j)];
    }
  }
  Tape* tape = common_tape({&mat, &vec}, "mul_rowwise");
  Tape::BackwardFn fn;
  if (tape != nullptr) {
    const int pm = mat.node(), pv = vec.node();
    const bool tm = mat.tracked(), tv = vec.tracked();
    auto mv_keep = mv;
    auto vv_keep = vv;
    fn = [pm, pv, tm, tv, mv_keep, vv_keep, n, d](const std::vector<double>& g, Tape& t) {
      if (tm) {
        auto& gm = t.grad_buffer(pm);
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t j = 0; j < d; ++j) {
            gm[static_cast<size_t>(i * d + j)] +=
                g[static_cast<size_t>(i * d + j)] * vv_keep[static_cast<size_t>(j)];
          }
        }
      }
      if (tv) {
        auto& gv = t.grad_buffer(pv);
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t j = 0; j < d; ++j) {
            gv[static_cast<size_t>(j)] +=
                g[static_cast<size_t>(i * d + j)] * mv_keep[static_cast<size_t>(i * d + j)];
          }
        }
      }
    };
  }
  return finish(tape, mat.shape(), std::move(out), {mat.node(), vec.node()}, std::move(fn), "mul_rowwise");
}

}  // namespace a4g
