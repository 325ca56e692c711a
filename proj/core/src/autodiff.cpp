#include "lhmc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lhmc/error.hpp"
#include "lhmc/special.hpp"

namespace lhmc::ad {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

[[noreturn]] void shape_error(OpKind op, const std::string& detail) {
  throw ContractViolation(std::string(op_name(op)) + ": " + detail);
}

std::string shapes_of(std::initializer_list<const Tensor*> ts) {
  std::string s;
  for (const Tensor* t : ts) {
    if (!s.empty()) s += " and ";
    s += shape_string(t->shape());
  }
  return s;
}

// Splits a shape around `axis` into (outer, extent, inner) so that element
// (o, i, j) lives at (o * extent + i) * inner + j.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.extent = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t d = 0; d < shape.size(); ++d)
    if (d != axis) out.push_back(shape[d]);
  return out;
}

void check_axis(OpKind op, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    shape_error(op, "axis " + std::to_string(axis) + " out of range for shape " + shape_string(x.shape()));
  }
}

// Maps each output element of a broadcast to its source element.
std::vector<std::size_t> broadcast_map(const Shape& from, const Shape& to) {
  const std::size_t offset = to.size() - from.size();
  std::vector<std::size_t> src_stride(to.size(), 0);
  std::size_t stride = 1;
  for (std::size_t d = from.size(); d-- > 0;) {
    src_stride[d + offset] = from[d] == 1 ? 0 : stride;
    stride *= from[d];
  }
  const std::size_t n = shape_size(to);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(to.size(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < to.size(); ++d) src += idx[d] * src_stride[d];
    map[k] = src;
    for (std::size_t d = to.size(); d-- > 0;) {
      if (++idx[d] < to[d]) break;
      idx[d] = 0;
    }
  }
  return map;
}

bool is_binary(OpKind op) {
  return op == OpKind::Add || op == OpKind::Subtract || op == OpKind::Multiply || op == OpKind::Divide;
}

// Centering offset for stick i (0-based) of a K-simplex: log(1 / (K - 1 - i)).
double stick_offset(std::size_t K, std::size_t i) { return -std::log(static_cast<double>(K - 1 - i)); }

std::vector<double> stick_offsets(std::size_t K) {
  std::vector<double> out(K > 0 ? K - 1 : 0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stick_offset(K, i);
  return out;
}

// Row-shifted exponentials: e[r,k] = exp(x[r,k] - shift[r]) with shift the row
// maximum, so every row has an entry equal to one.
void shifted_exp_rows(const Tensor& x, std::vector<double>& e, std::vector<double>& shift) {
  const std::size_t R = x.extent(0), K = x.extent(1);
  e.resize(R * K);
  shift.assign(R, kNegInf);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t k = 0; k < K; ++k) shift[r] = std::max(shift[r], x[r * K + k]);
    const double m = std::isfinite(shift[r]) ? shift[r] : 0.0;
    for (std::size_t k = 0; k < K; ++k) e[r * K + k] = std::exp(x[r * K + k] - m);
  }
}

// Same along columns of a [K,C] matrix, stored transposed as [C,K].
void shifted_exp_cols(const Tensor& x, std::vector<double>& e, std::vector<double>& shift) {
  const std::size_t K = x.extent(0), C = x.extent(1);
  e.resize(C * K);
  shift.assign(C, kNegInf);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < C; ++c) shift[c] = std::max(shift[c], x[k * C + c]);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < C; ++c) {
      const double m = std::isfinite(shift[c]) ? shift[c] : 0.0;
      e[c * K + k] = std::exp(x[k * C + c] - m);
    }
}

// Evaluates mixture cells Σ_k a[r,k] Π_j b[k, c_j] from row-shifted exp tables,
// falling back to log space for cells whose product underflows.
class MixtureCells {
 public:
  MixtureCells(const Tensor& log_a, const Tensor& log_b, const OpAttributes& at)
      : log_a_(log_a), log_b_(log_b), at_(at), K_(log_a.extent(1)), C_(log_b.extent(1)),
        J_(at.columns->size() / std::max<std::size_t>(at.indices->size(), 1)), prod_(K_) {
    shifted_exp_rows(log_a, ea_, sa_);
    shifted_exp_cols(log_b, eb_, sb_);
  }

  std::size_t factors() const { return J_; }

  // Log of cell n; leaves the normalized component shares in shares().
  double cell(std::size_t n) {
    const std::size_t r = (*at_.indices)[n];
    const std::size_t* c = at_.columns->data() + n * J_;
    const double* x = ea_.data() + r * K_;
    double shift = sa_[r];
    for (std::size_t k = 0; k < K_; ++k) prod_[k] = x[k];
    for (std::size_t j = 0; j < J_; ++j) {
      const double* y = eb_.data() + c[j] * K_;
      shift += sb_[c[j]];
      for (std::size_t k = 0; k < K_; ++k) prod_[k] *= y[k];
    }
    double s = 0.0;
    for (std::size_t k = 0; k < K_; ++k) s += prod_[k];
    if (s > 1e-280 && std::isfinite(shift)) {
      for (std::size_t k = 0; k < K_; ++k) prod_[k] /= s;
      return shift + std::log(s);
    }
    double m = kNegInf;
    for (std::size_t k = 0; k < K_; ++k) {
      double l = log_a_[r * K_ + k];
      for (std::size_t j = 0; j < J_; ++j) l += log_b_[k * C_ + c[j]];
      prod_[k] = l;
      m = std::max(m, l);
    }
    if (!std::isfinite(m)) {
      std::fill(prod_.begin(), prod_.end(), 0.0);
      return m;
    }
    double t = 0.0;
    for (std::size_t k = 0; k < K_; ++k) t += std::exp(prod_[k] - m);
    for (std::size_t k = 0; k < K_; ++k) prod_[k] = std::exp(prod_[k] - m) / t;
    return m + std::log(t);
  }

  const std::vector<double>& shares() const { return prod_; }

 private:
  const Tensor& log_a_;
  const Tensor& log_b_;
  const OpAttributes& at_;
  std::size_t K_, C_, J_;
  std::vector<double> ea_, sa_, eb_, sb_;
  std::vector<double> prod_;
};

void check_mixture(OpKind op, const Tensor& a, const Tensor& b, const OpAttributes& at) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    shape_error(op, "expects [R,K] and [K,C], got " + shapes_of({&a, &b}));
  }
  if (!at.indices || !at.columns || !at.weights || at.weights->size() != at.indices->size()) {
    shape_error(op, "rows and weights must have equal lengths");
  }
  const std::size_t n = at.indices->size();
  if (n == 0 ? !at.columns->empty() : at.columns->size() % n != 0) {
    shape_error(op, "columns must hold the same number of factors for every cell");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if ((*at.indices)[i] >= a.extent(0)) shape_error(op, "row index out of range");
  }
  for (std::size_t c : *at.columns) {
    if (c >= b.extent(1)) shape_error(op, "column index out of range");
  }
}

Tensor forward(OpKind op, const Tensor* a, const Tensor* b, const OpAttributes& at) {
  switch (op) {
    case OpKind::Add:
    case OpKind::Subtract:
    case OpKind::Multiply:
    case OpKind::Divide: {
      const bool a_scalar = a->rank() == 0, b_scalar = b->rank() == 0;
      if (a->shape() != b->shape() && !a_scalar && !b_scalar) {
        shape_error(op, "incompatible shapes " + shapes_of({a, b}));
      }
      Tensor out(a_scalar ? b->shape() : a->shape());
      const std::size_t n = out.size();
      const double* pa = a->data();
      const double* pb = b->data();
      double* po = out.data();
      const std::size_t sa = a_scalar ? 0 : 1, sb = b_scalar ? 0 : 1;
      switch (op) {
        case OpKind::Add:
          for (std::size_t i = 0; i < n; ++i) po[i] = pa[i * sa] + pb[i * sb];
          break;
        case OpKind::Subtract:
          for (std::size_t i = 0; i < n; ++i) po[i] = pa[i * sa] - pb[i * sb];
          break;
        case OpKind::Multiply:
          for (std::size_t i = 0; i < n; ++i) po[i] = pa[i * sa] * pb[i * sb];
          break;
        default:
          for (std::size_t i = 0; i < n; ++i) po[i] = pa[i * sa] / pb[i * sb];
          break;
      }
      return out;
    }
    case OpKind::Negate: {
      Tensor out = *a;
      for (double& v : out.values()) v = -v;
      return out;
    }
    case OpKind::Exp: {
      Tensor out = *a;
      for (double& v : out.values()) v = std::exp(v);
      return out;
    }
    case OpKind::Log: {
      Tensor out = *a;
      for (double& v : out.values()) v = std::log(v);
      return out;
    }
    case OpKind::LogGamma: {
      Tensor out = *a;
      for (double& v : out.values()) {
        if (v <= 0.0) shape_error(op, "argument must be positive");
        v = lhmc::log_gamma(v);
      }
      return out;
    }
    case OpKind::LogSumExp:
    case OpKind::Sum: {
      if (op == OpKind::Sum && at.axis == kAllAxes) {
        double s = 0.0;
        for (double v : a->values()) s += v;
        return Tensor::scalar(s);
      }
      check_axis(op, *a, at.axis);
      const AxisSplit sp = split_axis(a->shape(), at.axis);
      Tensor out(drop_axis(a->shape(), at.axis));
      const double* pa = a->data();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t j = 0; j < sp.inner; ++j) {
          const double* base = pa + o * sp.extent * sp.inner + j;
          double r;
          if (op == OpKind::Sum) {
            r = 0.0;
            for (std::size_t i = 0; i < sp.extent; ++i) r += base[i * sp.inner];
          } else {
            double m = kNegInf;
            for (std::size_t i = 0; i < sp.extent; ++i) m = std::max(m, base[i * sp.inner]);
            if (!std::isfinite(m)) {
              r = m;
            } else {
              double s = 0.0;
              for (std::size_t i = 0; i < sp.extent; ++i) s += std::exp(base[i * sp.inner] - m);
              r = m + std::log(s);
            }
          }
          out[o * sp.inner + j] = r;
        }
      }
      return out;
    }
    case OpKind::Softmax:
    case OpKind::LogSoftmax: {
      check_axis(op, *a, at.axis);
      const AxisSplit sp = split_axis(a->shape(), at.axis);
      Tensor out(a->shape());
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t j = 0; j < sp.inner; ++j) {
          const std::size_t base = o * sp.extent * sp.inner + j;
          double m = kNegInf;
          for (std::size_t i = 0; i < sp.extent; ++i) m = std::max(m, (*a)[base + i * sp.inner]);
          double s = 0.0;
          for (std::size_t i = 0; i < sp.extent; ++i) s += std::exp((*a)[base + i * sp.inner] - m);
          const double lse = m + std::log(s);
          for (std::size_t i = 0; i < sp.extent; ++i) {
            const double y = (*a)[base + i * sp.inner] - lse;
            out[base + i * sp.inner] = op == OpKind::Softmax ? std::exp(y) : y;
          }
        }
      }
      return out;
    }
    case OpKind::MatMul: {
      if (a->rank() != 2 || (b->rank() != 2 && b->rank() != 1) || a->extent(1) != b->extent(0)) {
        shape_error(op, "incompatible shapes " + shapes_of({a, b}));
      }
      const std::size_t m = a->extent(0), k = a->extent(1);
      const std::size_t n = b->rank() == 2 ? b->extent(1) : 1;
      Tensor out(b->rank() == 2 ? Shape{m, n} : Shape{m});
      const double* pa = a->data();
      const double* pb = b->data();
      double* po = out.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
          const double av = pa[i * k + l];
          const double* brow = pb + l * n;
          double* orow = po + i * n;
          for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
      }
      return out;
    }
    case OpKind::Gather: {
      check_axis(op, *a, at.axis);
      if (!at.indices) shape_error(op, "missing indices");
      const auto& idx = *at.indices;
      const AxisSplit sp = split_axis(a->shape(), at.axis);
      Shape shape = a->shape();
      shape[at.axis] = idx.size();
      Tensor out(shape);
      for (std::size_t i : idx) {
        if (i >= sp.extent) {
          shape_error(op, "index " + std::to_string(i) + " out of range for shape " + shape_string(a->shape()));
        }
      }
      const double* pa = a->data();
      double* po = out.data();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t r = 0; r < idx.size(); ++r) {
          const double* src = pa + (o * sp.extent + idx[r]) * sp.inner;
          std::copy(src, src + sp.inner, po + (o * idx.size() + r) * sp.inner);
        }
      }
      return out;
    }
    case OpKind::Broadcast: {
      const Shape& from = a->shape();
      const Shape& to = at.shape;
      bool ok = from.size() <= to.size();
      for (std::size_t d = 0; ok && d < from.size(); ++d) {
        const std::size_t f = from[from.size() - 1 - d], t = to[to.size() - 1 - d];
        ok = f == t || f == 1;
      }
      if (!ok) shape_error(op, "cannot broadcast " + shape_string(from) + " to " + shape_string(to));
      const auto map = broadcast_map(from, to);
      Tensor out(to);
      for (std::size_t k = 0; k < map.size(); ++k) out[k] = (*a)[map[k]];
      return out;
    }
    case OpKind::Transpose: {
      if (a->rank() != 2) shape_error(op, "expects rank 2, got " + shape_string(a->shape()));
      const std::size_t r = a->extent(0), c = a->extent(1);
      Tensor out(Shape{c, r});
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = (*a)[i * c + j];
      return out;
    }
    case OpKind::Concat: {
      check_axis(op, *a, at.axis);
      bool ok = a->rank() == b->rank();
      for (std::size_t d = 0; ok && d < a->rank(); ++d) ok = d == at.axis || a->extent(d) == b->extent(d);
      if (!ok) shape_error(op, "incompatible shapes " + shapes_of({a, b}));
      const AxisSplit sa = split_axis(a->shape(), at.axis), sb = split_axis(b->shape(), at.axis);
      Shape shape = a->shape();
      shape[at.axis] += b->extent(at.axis);
      Tensor out(shape);
      const std::size_t ca = sa.extent * sa.inner, cb = sb.extent * sb.inner;
      for (std::size_t o = 0; o < sa.outer; ++o) {
        std::copy_n(a->data() + o * ca, ca, out.data() + o * (ca + cb));
        std::copy_n(b->data() + o * cb, cb, out.data() + o * (ca + cb) + ca);
      }
      return out;
    }
    case OpKind::InsertZero: {
      if (a->rank() == 0) shape_error(op, "expects rank >= 1");
      const std::size_t n = a->shape().back();
      if (at.axis > n) shape_error(op, "position " + std::to_string(at.axis) + " beyond " + shape_string(a->shape()));
      Shape shape = a->shape();
      shape.back() += 1;
      Tensor out(shape);
      if (n == 0) return out;
      const std::size_t rows = a->size() / n;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* src = a->data() + r * n;
        double* dst = out.data() + r * (n + 1);
        std::copy(src, src + at.axis, dst);
        dst[at.axis] = 0.0;
        std::copy(src + at.axis, src + n, dst + at.axis + 1);
      }
      return out;
    }
    case OpKind::LogSimplexSticks: {
      if (a->rank() == 0) shape_error(op, "expects rank >= 1");
      const std::size_t n = a->shape().back();
      const std::size_t K = n + 1;
      Shape shape = a->shape();
      shape.back() = K;
      Tensor out(shape);
      const std::size_t rows = n == 0 ? shape_size(shape) : a->size() / n;
      const std::vector<double> off = stick_offsets(K);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* u = a->data() + r * n;
        double* y = out.data() + r * K;
        double log_rem = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double z = u[i] + off[i];
          const double lz = log_sigmoid(z);
          y[i] = log_rem + lz;
          log_rem += lz - z;  // log(1 - sigmoid(z)) = log sigmoid(z) - z
        }
        y[n] = log_rem;
      }
      return out;
    }
    case OpKind::SticksLogJacobian: {
      if (a->rank() == 0) shape_error(op, "expects rank >= 1");
      const std::size_t n = a->shape().back();
      const std::size_t K = n + 1;
      double total = 0.0;
      const std::size_t rows = n == 0 ? 0 : a->size() / n;
      const std::vector<double> off = stick_offsets(K);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* u = a->data() + r * n;
        double log_rem = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double z = u[i] + off[i];
          const double lz = log_sigmoid(z), l1mz = lz - z;
          total += lz + l1mz + log_rem;
          log_rem += l1mz;
        }
      }
      return Tensor::scalar(total);
    }
    case OpKind::MixtureLogLikelihood: {
      check_mixture(op, *a, *b, at);
      MixtureCells cells(*a, *b, at);
      double total = 0.0;
      for (std::size_t n = 0; n < at.indices->size(); ++n) {
        const double w = (*at.weights)[n];
        if (w != 0.0) total += w * cells.cell(n);
      }
      return Tensor::scalar(total);
    }
    case OpKind::Leaf:
    case OpKind::Constant:
      break;
  }
  shape_error(op, "not a computed primitive");
}

// Adds `src` into `dst`, summing over all elements when dst is rank 0.
void accumulate(Tensor& dst, const Tensor& src) {
  if (dst.rank() == 0 && src.size() != 1) {
    double s = 0.0;
    for (double v : src.values()) s += v;
    dst[0] += s;
    return;
  }
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Subtract: return "subtract";
    case OpKind::Multiply: return "multiply";
    case OpKind::Divide: return "divide";
    case OpKind::Negate: return "negate";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::LogGamma: return "log-gamma";
    case OpKind::LogSumExp: return "log-sum-exp";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log-softmax";
    case OpKind::Sum: return "sum";
    case OpKind::MatMul: return "matmul";
    case OpKind::Gather: return "gather";
    case OpKind::Broadcast: return "broadcast";
    case OpKind::Transpose: return "transpose";
    case OpKind::Concat: return "concat";
    case OpKind::InsertZero: return "insert-zero";
    case OpKind::LogSimplexSticks: return "log-simplex-sticks";
    case OpKind::SticksLogJacobian: return "sticks-log-jacobian";
    case OpKind::MixtureLogLikelihood: return "mixture-log-likelihood";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) throw ContractViolation("use of an unbound Var");
  return tape_->node(id_).primal;
}

const Tensor& Gradients::operator[](Var leaf) const { return adjoints_.at(leaf.id()); }

Var Tape::leaf(Tensor value) {
  TapeNode n;
  n.op = OpKind::Leaf;
  n.primal = std::move(value);
  n.differentiable = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  TapeNode n;
  n.op = OpKind::Constant;
  n.primal = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind op, std::initializer_list<Var> inputs, OpAttributes attrs) {
  const std::size_t want =
      (is_binary(op) || op == OpKind::MatMul || op == OpKind::Concat || op == OpKind::MixtureLogLikelihood) ? 2 : 1;
  if (op == OpKind::Leaf || op == OpKind::Constant) {
    throw ContractViolation("record: use leaf() or constant() for inputs");
  }
  if (inputs.size() != want) {
    throw ContractViolation(std::string(op_name(op)) + ": expected " + std::to_string(want) + " inputs");
  }
  TapeNode n;
  n.op = op;
  n.arity = static_cast<std::uint8_t>(want);
  std::size_t k = 0;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw ContractViolation(std::string(op_name(op)) + ": input from another tape");
    n.parents[k++] = v.id();
    n.differentiable = n.differentiable || nodes_[v.id()].differentiable;
  }
  const Tensor* a = &nodes_[n.parents[0]].primal;
  const Tensor* b = want == 2 ? &nodes_[n.parents[1]].primal : nullptr;
  n.primal = forward(op, a, b, attrs);
  n.attrs = std::move(attrs);
  for (double v : n.primal.values()) {
    if (std::isnan(v)) {
      throw NumericError(std::string("NaN produced by ") + std::string(op_name(op)) + " at node " +
                             std::to_string(nodes_.size()),
                         nodes_.size());
    }
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::gradient(Var root) const {
  if (root.tape() != this) throw ContractViolation("gradient: root belongs to another tape");
  const Tensor& rv = nodes_[root.id()].primal;
  if (rv.size() != 1) throw ContractViolation("gradient: root must be scalar, got " + shape_string(rv.shape()));
  if (!std::isfinite(rv[0])) throw ContractViolation("gradient: root primal is not finite");

  std::vector<Tensor> adj(nodes_.size());
  std::vector<bool> has(nodes_.size(), false);
  adj[root.id()] = Tensor(rv.shape(), 1.0);
  has[root.id()] = true;

  auto grad_of = [&](NodeId p) -> Tensor& {
    if (!has[p]) {
      adj[p] = Tensor(nodes_[p].primal.shape());
      has[p] = true;
    }
    return adj[p];
  };

  for (NodeId id = root.id() + 1; id-- > 0;) {
    if (!has[id]) continue;
    const TapeNode& n = nodes_[id];
    if (n.op == OpKind::Leaf || n.op == OpKind::Constant) continue;
    const Tensor& g = adj[id];
    const Tensor& y = n.primal;
    const NodeId pa = n.parents[0];
    const NodeId pb = n.parents[1];
    const bool da = nodes_[pa].differentiable;
    const bool db = n.arity == 2 && nodes_[pb].differentiable;
    const Tensor& a = nodes_[pa].primal;

    switch (n.op) {
      case OpKind::Add:
      case OpKind::Subtract: {
        if (da) accumulate(grad_of(pa), g);
        if (db) {
          if (n.op == OpKind::Add) {
            accumulate(grad_of(pb), g);
          } else {
            Tensor neg = g;
            for (double& v : neg.values()) v = -v;
            accumulate(grad_of(pb), neg);
          }
        }
        break;
      }
      case OpKind::Multiply:
      case OpKind::Divide: {
        const Tensor& b = nodes_[pb].primal;
        const std::size_t sa = a.rank() == 0 ? 0 : 1, sb = b.rank() == 0 ? 0 : 1;
        const std::size_t m = g.size();
        if (da) {
          Tensor t(g.shape());
          if (n.op == OpKind::Multiply) {
            for (std::size_t i = 0; i < m; ++i) t[i] = g[i] * b[i * sb];
          } else {
            for (std::size_t i = 0; i < m; ++i) t[i] = g[i] / b[i * sb];
          }
          accumulate(grad_of(pa), t);
        }
        if (db) {
          Tensor t(g.shape());
          if (n.op == OpKind::Multiply) {
            for (std::size_t i = 0; i < m; ++i) t[i] = g[i] * a[i * sa];
          } else {
            for (std::size_t i = 0; i < m; ++i) t[i] = -g[i] * y[i] / b[i * sb];
          }
          accumulate(grad_of(pb), t);
        }
        break;
      }
      case OpKind::Negate: {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
        break;
      }
      case OpKind::Exp: {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        break;
      }
      case OpKind::Log: {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a[i];
        break;
      }
      case OpKind::LogGamma: {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * digamma(a[i]);
        break;
      }
      case OpKind::Sum: {
        Tensor& ga = grad_of(pa);
        if (n.attrs.axis == kAllAxes) {
          for (double& v : ga.values()) v += g[0];
          break;
        }
        const AxisSplit sp = split_axis(a.shape(), n.attrs.axis);
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t i = 0; i < sp.extent; ++i)
            for (std::size_t j = 0; j < sp.inner; ++j)
              ga[(o * sp.extent + i) * sp.inner + j] += g[o * sp.inner + j];
        break;
      }
      case OpKind::LogSumExp: {
        Tensor& ga = grad_of(pa);
        const AxisSplit sp = split_axis(a.shape(), n.attrs.axis);
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t j = 0; j < sp.inner; ++j) {
            const double gv = g[o * sp.inner + j];
            const double lse = y[o * sp.inner + j];
            if (gv == 0.0) continue;
            for (std::size_t i = 0; i < sp.extent; ++i) {
              const std::size_t k = (o * sp.extent + i) * sp.inner + j;
              ga[k] += gv * std::exp(a[k] - lse);
            }
          }
        break;
      }
      case OpKind::Softmax:
      case OpKind::LogSoftmax: {
        Tensor& ga = grad_of(pa);
        const AxisSplit sp = split_axis(a.shape(), n.attrs.axis);
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t j = 0; j < sp.inner; ++j) {
            const std::size_t base = o * sp.extent * sp.inner + j;
            double dot = 0.0;
            for (std::size_t i = 0; i < sp.extent; ++i) {
              const std::size_t k = base + i * sp.inner;
              dot += n.op == OpKind::Softmax ? g[k] * y[k] : g[k];
            }
            for (std::size_t i = 0; i < sp.extent; ++i) {
              const std::size_t k = base + i * sp.inner;
              ga[k] += n.op == OpKind::Softmax ? y[k] * (g[k] - dot) : g[k] - std::exp(y[k]) * dot;
            }
          }
        break;
      }
      case OpKind::MatMul: {
        const Tensor& b = nodes_[pb].primal;
        const std::size_t m = a.extent(0), k = a.extent(1);
        const std::size_t nn = b.rank() == 2 ? b.extent(1) : 1;
        if (da) {
          Tensor& ga = grad_of(pa);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t l = 0; l < k; ++l) {
              double s = 0.0;
              for (std::size_t j = 0; j < nn; ++j) s += g[i * nn + j] * b[l * nn + j];
              ga[i * k + l] += s;
            }
        }
        if (db) {
          Tensor& gb = grad_of(pb);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t l = 0; l < k; ++l) {
              const double av = a[i * k + l];
              for (std::size_t j = 0; j < nn; ++j) gb[l * nn + j] += av * g[i * nn + j];
            }
        }
        break;
      }
      case OpKind::Gather: {
        Tensor& ga = grad_of(pa);
        const auto& idx = *n.attrs.indices;
        const AxisSplit sp = split_axis(a.shape(), n.attrs.axis);
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t r = 0; r < idx.size(); ++r) {
            double* dst = ga.data() + (o * sp.extent + idx[r]) * sp.inner;
            const double* src = g.data() + (o * idx.size() + r) * sp.inner;
            for (std::size_t j = 0; j < sp.inner; ++j) dst[j] += src[j];
          }
        break;
      }
      case OpKind::Broadcast: {
        Tensor& ga = grad_of(pa);
        const auto map = broadcast_map(a.shape(), y.shape());
        for (std::size_t k = 0; k < map.size(); ++k) ga[map[k]] += g[k];
        break;
      }
      case OpKind::Transpose: {
        Tensor& ga = grad_of(pa);
        const std::size_t r = a.extent(0), c = a.extent(1);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
        break;
      }
      case OpKind::Concat: {
        const Tensor& b = nodes_[pb].primal;
        const AxisSplit sa = split_axis(a.shape(), n.attrs.axis), sb = split_axis(b.shape(), n.attrs.axis);
        const std::size_t ca = sa.extent * sa.inner, cb = sb.extent * sb.inner;
        if (da) {
          Tensor& ga = grad_of(pa);
          for (std::size_t o = 0; o < sa.outer; ++o)
            for (std::size_t i = 0; i < ca; ++i) ga[o * ca + i] += g[o * (ca + cb) + i];
        }
        if (db) {
          Tensor& gb = grad_of(pb);
          for (std::size_t o = 0; o < sa.outer; ++o)
            for (std::size_t i = 0; i < cb; ++i) gb[o * cb + i] += g[o * (ca + cb) + ca + i];
        }
        break;
      }
      case OpKind::InsertZero: {
        Tensor& ga = grad_of(pa);
        const std::size_t nn = a.shape().back();
        if (nn == 0) break;
        const std::size_t rows = a.size() / nn;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < nn; ++i) ga[r * nn + i] += g[r * (nn + 1) + (i < n.attrs.axis ? i : i + 1)];
        break;
      }
      case OpKind::LogSimplexSticks: {
        Tensor& ga = grad_of(pa);
        const std::size_t nn = a.shape().back();
        if (nn == 0) break;
        const std::size_t K = nn + 1;
        const std::size_t rows = a.size() / nn;
        const std::vector<double> off = stick_offsets(K);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * K;
          double tail = gr[nn];  // Σ_{k>i} g_k, built from the back
          for (std::size_t i = nn; i-- > 0;) {
            const double z = sigmoid(a[r * nn + i] + off[i]);
            ga[r * nn + i] += gr[i] * (1.0 - z) - tail * z;
            tail += gr[i];
          }
        }
        break;
      }
      case OpKind::SticksLogJacobian: {
        Tensor& ga = grad_of(pa);
        const std::size_t nn = a.shape().back();
        if (nn == 0) break;
        const std::size_t K = nn + 1;
        const std::size_t rows = a.size() / nn;
        const std::vector<double> off = stick_offsets(K);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < nn; ++i) {
            const double z = sigmoid(a[r * nn + i] + off[i]);
            ga[r * nn + i] += g[0] * ((1.0 - z) - static_cast<double>(K - 1 - i) * z);
          }
        break;
      }
      case OpKind::MixtureLogLikelihood: {
        const Tensor& b = nodes_[pb].primal;
        const OpAttributes& at = n.attrs;
        MixtureCells cells(a, b, at);
        const std::size_t K = a.extent(1), C = b.extent(1), J = cells.factors();
        Tensor* ga = da ? &grad_of(pa) : nullptr;
        Tensor* gb = db ? &grad_of(pb) : nullptr;
        for (std::size_t i = 0; i < at.indices->size(); ++i) {
          const double w = g[0] * (*at.weights)[i];
          if (w == 0.0) continue;
          cells.cell(i);
          const auto& share = cells.shares();
          const std::size_t r = (*at.indices)[i];
          const std::size_t* c = at.columns->data() + i * J;
          for (std::size_t k = 0; k < K; ++k) {
            const double v = w * share[k];
            if (ga) (*ga)[r * K + k] += v;
            if (gb)
              for (std::size_t j = 0; j < J; ++j) (*gb)[k * C + c[j]] += v;
          }
        }
        break;
      }
      case OpKind::Leaf:
      case OpKind::Constant:
        break;
    }

    for (std::uint8_t p = 0; p < n.arity; ++p) {
      const NodeId pid = n.parents[p];
      if (!has[pid]) continue;
      for (double v : adj[pid].values()) {
        if (std::isnan(v)) {
          throw NumericError("NaN adjoint while differentiating " + std::string(op_name(n.op)) + " at node " +
                                 std::to_string(id),
                             id);
        }
      }
    }
    if (n.op != OpKind::Leaf) adj[id] = Tensor();
  }

  Gradients out;
  out.adjoints_.resize(nodes_.size());
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].op != OpKind::Leaf) continue;
    out.adjoints_[id] = has[id] ? std::move(adj[id]) : Tensor(nodes_[id].primal.shape());
  }
  return out;
}

namespace {

Var binary(OpKind op, Var a, Var b) { return a.tape()->record(op, {a, b}); }
Var unary(OpKind op, Var a, OpAttributes at = {}) { return a.tape()->record(op, {a}, std::move(at)); }

OpAttributes on_axis(std::size_t axis) {
  OpAttributes at;
  at.axis = axis;
  return at;
}
Var lift(Var like, double v) { return like.tape()->constant(v); }

}  // namespace

Var operator+(Var a, Var b) { return binary(OpKind::Add, a, b); }
Var operator-(Var a, Var b) { return binary(OpKind::Subtract, a, b); }
Var operator*(Var a, Var b) { return binary(OpKind::Multiply, a, b); }
Var operator/(Var a, Var b) { return binary(OpKind::Divide, a, b); }
Var operator-(Var a) { return unary(OpKind::Negate, a); }
Var operator+(Var a, double b) { return a + lift(a, b); }
Var operator+(double a, Var b) { return lift(b, a) + b; }
Var operator-(Var a, double b) { return a - lift(a, b); }
Var operator-(double a, Var b) { return lift(b, a) - b; }
Var operator*(Var a, double b) { return a * lift(a, b); }
Var operator*(double a, Var b) { return lift(b, a) * b; }
Var operator/(Var a, double b) { return a / lift(a, b); }
Var operator/(double a, Var b) { return lift(b, a) / b; }

Var exp(Var x) { return unary(OpKind::Exp, x); }
Var log(Var x) { return unary(OpKind::Log, x); }
Var log_gamma(Var x) { return unary(OpKind::LogGamma, x); }
Var square(Var x) { return x * x; }

Var log_sum_exp(Var x, std::size_t axis) { return unary(OpKind::LogSumExp, x, on_axis(axis)); }
Var softmax(Var x, std::size_t axis) { return unary(OpKind::Softmax, x, on_axis(axis)); }
Var log_softmax(Var x, std::size_t axis) { return unary(OpKind::LogSoftmax, x, on_axis(axis)); }
Var sum(Var x) { return unary(OpKind::Sum, x, on_axis(kAllAxes)); }
Var sum(Var x, std::size_t axis) { return unary(OpKind::Sum, x, on_axis(axis)); }
Var matmul(Var a, Var b) { return binary(OpKind::MatMul, a, b); }

Var gather(Var x, std::size_t axis, std::shared_ptr<const std::vector<std::size_t>> indices) {
  return unary(OpKind::Gather, x, [&] {
    OpAttributes at = on_axis(axis);
    at.indices = std::move(indices);
    return at;
  }());
}

Var broadcast_to(Var x, Shape shape) {
  OpAttributes at;
  at.shape = std::move(shape);
  return unary(OpKind::Broadcast, x, std::move(at));
}
Var transpose(Var x) { return unary(OpKind::Transpose, x); }
Var concat(Var a, Var b, std::size_t axis) { return a.tape()->record(OpKind::Concat, {a, b}, on_axis(axis)); }
Var insert_zero(Var x, std::size_t position) { return unary(OpKind::InsertZero, x, on_axis(position)); }
Var log_simplex_sticks(Var x) { return unary(OpKind::LogSimplexSticks, x); }
Var sticks_log_jacobian(Var x) { return unary(OpKind::SticksLogJacobian, x); }

Var mixture_log_likelihood(Var log_a, Var log_b, std::shared_ptr<const std::vector<std::size_t>> rows,
                           std::shared_ptr<const std::vector<std::size_t>> cols,
                           std::shared_ptr<const std::vector<double>> weights) {
  OpAttributes at;
  at.indices = std::move(rows);
  at.columns = std::move(cols);
  at.weights = std::move(weights);
  return log_a.tape()->record(OpKind::MixtureLogLikelihood, {log_a, log_b}, std::move(at));
}

}  // namespace lhmc::ad
