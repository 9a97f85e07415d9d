#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Var is a handle to a graph node holding a value, a gradient accumulator
// and a closure that pushes its gradient to its parents. Ops are coarse
// (matmul, layer norm, row softmax, ...) so graphs stay small. Leaf
// parameters keep their gradients across backward() calls until zeroed,
// which is how per-step gradients are summed over an episode.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gohr/errors.hpp"

namespace gohr::ad {

using Mat = Eigen::MatrixXd;

struct Node {
  Mat value;
  Mat grad;  // empty until first touched
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Mat& grad_ref() {
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  const Mat& value() const { return n_->value; }
  Mat& mutable_value() { return n_->value; }
  const Mat& grad() const { return n_->grad; }
  Eigen::Index rows() const { return n_->value.rows(); }
  Eigen::Index cols() const { return n_->value.cols(); }
  bool requires_grad() const { return n_->requires_grad; }
  double item() const { return n_->value(0, 0); }
  Node& node() const { return *n_; }
  const std::shared_ptr<Node>& ptr() const { return n_; }
  void zero_grad() { n_->grad.resize(0, 0); }

 private:
  std::shared_ptr<Node> n_;
};

inline Var constant(Mat m) {
  auto n = std::make_shared<Node>();
  n->value = std::move(m);
  return Var(n);
}

inline Var parameter(Mat m) {
  auto n = std::make_shared<Node>();
  n->value = std::move(m);
  n->requires_grad = true;
  return Var(n);
}

namespace detail {

inline Var make(Mat value, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) {
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.ptr());
  }
  if (n->requires_grad) n->backward = std::move(bw);
  return Var(n);
}

inline void check(bool ok, const char* what) {
  if (!ok) throw DomainError(std::string("shape mismatch in ") + what);
}

}  // namespace detail

/// Seeds d(out)/d(out) = seed (out must be 1x1 unless seed_grad is given) and
/// accumulates gradients into every reachable node that requires them.
inline void backward(const Var& out, const Mat& seed_grad) {
  if (!out.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&out.node(), 0}};
  seen.insert(&out.node());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  out.node().grad_ref() += seed_grad;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward && (*it)->grad.size() != 0) (*it)->backward(**it);
  // Interior gradients are per-call; only leaves accumulate.
  for (Node* n : order)
    if (!n->parents.empty()) n->grad.resize(0, 0);
}

inline void backward(const Var& out, double seed = 1.0) {
  detail::check(out.rows() == 1 && out.cols() == 1, "backward (non-scalar output)");
  backward(out, Mat::Constant(1, 1, seed));
}

// ---- ops -------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
  detail::check(a.cols() == b.rows(), "matmul");
  return detail::make(a.value() * b.value(), {a, b}, [](Node& n) {
    auto& a = *n.parents[0];
    auto& b = *n.parents[1];
    if (a.requires_grad) a.grad_ref().noalias() += n.grad * b.value.transpose();
    if (b.requires_grad) b.grad_ref().noalias() += a.value.transpose() * n.grad;
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  return detail::make(a.value() + b.value(), {a, b}, [](Node& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) p->grad_ref() += n.grad;
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  return detail::make(a.value() - b.value(), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += n.grad;
    if (n.parents[1]->requires_grad) n.parents[1]->grad_ref() -= n.grad;
  });
}

/// x (r x c) plus a 1 x c row broadcast over rows.
inline Var add_row(const Var& x, const Var& row) {
  detail::check(row.rows() == 1 && row.cols() == x.cols(), "add_row");
  Mat v = x.value().rowwise() + row.value().row(0);
  return detail::make(std::move(v), {x, row}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += n.grad;
    if (n.parents[1]->requires_grad) n.parents[1]->grad_ref() += n.grad.colwise().sum();
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "mul");
  return detail::make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    auto& a = *n.parents[0];
    auto& b = *n.parents[1];
    if (a.requires_grad) a.grad_ref() += n.grad.cwiseProduct(b.value);
    if (b.requires_grad) b.grad_ref() += n.grad.cwiseProduct(a.value);
  });
}

inline Var scale(const Var& a, double s) {
  return detail::make(a.value() * s, {a}, [s](Node& n) { n.parents[0]->grad_ref() += n.grad * s; });
}

inline Var square(const Var& a) { return mul(a, a); }

inline Var sum(const Var& a) {
  return detail::make(Mat::Constant(1, 1, a.value().sum()), {a}, [](Node& n) {
    n.parents[0]->grad_ref().array() += n.grad(0, 0);
  });
}

inline Var transpose(const Var& a) {
  return detail::make(a.value().transpose(), {a}, [](Node& n) { n.parents[0]->grad_ref() += n.grad.transpose(); });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  detail::check(start >= 0 && start + count <= a.cols(), "slice_cols");
  return detail::make(a.value().middleCols(start, count), {a}, [start, count](Node& n) {
    n.parents[0]->grad_ref().middleCols(start, count) += n.grad;
  });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  detail::check(start >= 0 && start + count <= a.rows(), "slice_rows");
  return detail::make(a.value().middleRows(start, count), {a}, [start, count](Node& n) {
    n.parents[0]->grad_ref().middleRows(start, count) += n.grad;
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  detail::check(!parts.empty(), "concat_cols");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    detail::check(p.rows() == parts[0].rows(), "concat_cols");
    cols += p.cols();
  }
  Mat v(parts[0].rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return detail::make(std::move(v), parts, [](Node& n) {
    Eigen::Index at = 0;
    for (auto& p : n.parents) {
      const auto c = p->value.cols();
      if (p->requires_grad) p->grad_ref() += n.grad.middleCols(at, c);
      at += c;
    }
  });
}

/// Row-major flatten to a single row.
inline Var flatten_row(const Var& a) {
  const auto r = a.rows(), c = a.cols();
  Mat v(1, r * c);
  for (Eigen::Index i = 0; i < r; ++i) v.block(0, i * c, 1, c) = a.value().row(i);
  return detail::make(std::move(v), {a}, [r, c](Node& n) {
    auto& g = n.parents[0]->grad_ref();
    for (Eigen::Index i = 0; i < r; ++i) g.row(i) += n.grad.block(0, i * c, 1, c);
  });
}

inline Var mean_rows(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a.rows());
  return detail::make(a.value().colwise().mean(), {a}, [inv](Node& n) {
    n.parents[0]->grad_ref().rowwise() += n.grad.row(0) * inv;
  });
}

inline Var pick(const Var& a, Eigen::Index r, Eigen::Index c) {
  detail::check(r >= 0 && r < a.rows() && c >= 0 && c < a.cols(), "pick");
  return detail::make(Mat::Constant(1, 1, a.value()(r, c)), {a}, [r, c](Node& n) {
    n.parents[0]->grad_ref()(r, c) += n.grad(0, 0);
  });
}

/// Exact GELU: x * Phi(x).
inline Var gelu(const Var& a) {
  const Mat& x = a.value();
  Mat v = x.unaryExpr([](double t) { return 0.5 * t * (1.0 + std::erf(t / std::numbers::sqrt2)); });
  return detail::make(std::move(v), {a}, [](Node& n) {
    const Mat& x = n.parents[0]->value;
    const Mat d = x.unaryExpr([](double t) {
      const double cdf = 0.5 * (1.0 + std::erf(t / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + t * pdf;
    });
    n.parents[0]->grad_ref() += n.grad.cwiseProduct(d);
  });
}

/// Row-wise layer normalization with a learned 1 x c gain and bias.
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
  detail::check(gain.cols() == x.cols() && bias.cols() == x.cols(), "layer_norm");
  const auto r = x.rows(), c = x.cols();
  Mat xhat(r, c);
  Eigen::VectorXd inv_std(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const double mu = x.value().row(i).mean();
    const auto centered = x.value().row(i).array() - mu;
    const double var = centered.square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std(i);
  }
  Mat y = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  y.rowwise() += bias.value().row(0);
  return detail::make(std::move(y), {x, gain, bias}, [xhat, inv_std](Node& n) {
    auto& px = *n.parents[0];
    auto& pg = *n.parents[1];
    auto& pb = *n.parents[2];
    if (pg.requires_grad) pg.grad_ref() += n.grad.cwiseProduct(xhat).colwise().sum();
    if (pb.requires_grad) pb.grad_ref() += n.grad.colwise().sum();
    if (px.requires_grad) {
      const Mat gh = (n.grad.array().rowwise() * pg.value.row(0).array()).matrix();
      const double c = static_cast<double>(gh.cols());
      auto& gx = px.grad_ref();
      for (Eigen::Index i = 0; i < gh.rows(); ++i) {
        const double m1 = gh.row(i).sum() / c;
        const double m2 = gh.row(i).cwiseProduct(xhat.row(i)).sum() / c;
        gx.row(i).array() += inv_std(i) * (gh.row(i).array() - m1 - xhat.row(i).array() * m2);
      }
    }
  });
}

inline Var softmax_rows(const Var& a) {
  Mat y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    y.row(i).array() -= y.row(i).maxCoeff();
    y.row(i) = y.row(i).array().exp();
    y.row(i) /= y.row(i).sum();
  }
  return detail::make(y, {a}, [y](Node& n) {
    auto& g = n.parents[0]->grad_ref();
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = n.grad.row(i).dot(y.row(i));
      g.row(i).array() += y.row(i).array() * (n.grad.row(i).array() - dot);
    }
  });
}

/// Log-softmax of a 1 x n row over entries with mask true; masked entries
/// hold -infinity and receive no gradient.
inline Var masked_log_softmax(const Var& logits, const std::vector<bool>& mask) {
  detail::check(logits.rows() == 1 && static_cast<std::size_t>(logits.cols()) == mask.size(), "masked_log_softmax");
  const auto n = logits.cols();
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < n; ++j)
    if (mask[j]) mx = std::max(mx, logits.value()(0, j));
  if (!std::isfinite(mx)) throw DomainError("mask has no admissible action");
  double z = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    if (mask[j]) z += std::exp(logits.value()(0, j) - mx);
  const double lse = mx + std::log(z);
  Mat y(1, n);
  for (Eigen::Index j = 0; j < n; ++j)
    y(0, j) = mask[j] ? logits.value()(0, j) - lse : -std::numeric_limits<double>::infinity();
  return detail::make(y, {logits}, [y, mask](Node& nd) {
    double gsum = 0;
    for (std::size_t j = 0; j < mask.size(); ++j)
      if (mask[j]) gsum += nd.grad(0, j);
    auto& g = nd.parents[0]->grad_ref();
    for (std::size_t j = 0; j < mask.size(); ++j)
      if (mask[j]) g(0, j) += nd.grad(0, j) - std::exp(y(0, j)) * gsum;
  });
}

/// Entropy -sum p log p of a distribution given as log-probabilities, where
/// -infinity entries are excluded.
inline Var entropy_from_log_probs(const Var& logp) {
  double h = 0;
  for (Eigen::Index j = 0; j < logp.cols(); ++j) {
    const double l = logp.value()(0, j);
    if (std::isfinite(l)) h -= std::exp(l) * l;
  }
  return detail::make(Mat::Constant(1, 1, h), {logp}, [](Node& n) {
    const Mat& lp = n.parents[0]->value;
    auto& g = n.parents[0]->grad_ref();
    for (Eigen::Index j = 0; j < lp.cols(); ++j) {
      const double l = lp(0, j);
      if (std::isfinite(l)) g(0, j) += -n.grad(0, 0) * std::exp(l) * (l + 1.0);
    }
  });
}

}  // namespace gohr::ad
