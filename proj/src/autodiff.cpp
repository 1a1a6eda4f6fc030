#include "gazeprobe/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gazeprobe::autodiff {

const Matrix& Var::value() const { return tape_->value(index_); }
const Matrix& Var::grad() const { return tape_->grad(index_); }

Var Tape::leaf(Matrix value) {
  tensor::check_finite(value, "leaf");
  nodes_.push_back(Node{std::move(value), Matrix(), {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  tensor::check_finite(value, "constant");
  nodes_.push_back(Node{std::move(value), Matrix(), {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<std::size_t> parents, BackwardFn backward) {
  bool needs = false;
  for (auto p : parents) needs = needs || nodes_[p].requires_grad;
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(parents),
                        needs ? std::move(backward) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var output) {
  if (output.tape() != this) throw Error("backward: output belongs to another tape");
  const auto& out = nodes_[output.index()].value;
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("backward: output must be scalar, got " + std::to_string(out.rows()) + "x" +
                     std::to_string(out.cols()));
  }
  for (auto& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_[output.index()].grad(0, 0) = 1.0;
  visited_ = 0;
  for (std::size_t i = output.index() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.backward) continue;
    node.backward(*this, i);
    ++visited_;
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

Matrix checked(Matrix m, const char* op) {
  tensor::check_finite(m, op);
  return m;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape();
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(tensor::matmul(a.value(), b.value()), {ia, ib},
                  [ia, ib](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    if (t.requires_grad(ia)) t.grad_mut(ia).noalias() += g * t.value(ib).transpose();
                    if (t.requires_grad(ib)) t.grad_mut(ib).noalias() += t.value(ia).transpose() * g;
                  });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape()->record(checked(a.value() + b.value(), "add"), {ia, ib},
                          [ia, ib](Tape& t, std::size_t self) {
                            if (t.requires_grad(ia)) t.grad_mut(ia) += t.grad(self);
                            if (t.requires_grad(ib)) t.grad_mut(ib) += t.grad(self);
                          });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape()->record(checked(a.value() - b.value(), "sub"), {ia, ib},
                          [ia, ib](Tape& t, std::size_t self) {
                            if (t.requires_grad(ia)) t.grad_mut(ia) += t.grad(self);
                            if (t.requires_grad(ib)) t.grad_mut(ib) -= t.grad(self);
                          });
}

Var hadamard(Var a, Var b) {
  check_same_shape(a, b, "hadamard");
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape()->record(checked(a.value().cwiseProduct(b.value()), "hadamard"), {ia, ib},
                          [ia, ib](Tape& t, std::size_t self) {
                            const Matrix& g = t.grad(self);
                            if (t.requires_grad(ia)) t.grad_mut(ia) += g.cwiseProduct(t.value(ib));
                            if (t.requires_grad(ib)) t.grad_mut(ib) += g.cwiseProduct(t.value(ia));
                          });
}

Var add_row(Var a, Var bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_row: bias must be 1x" + std::to_string(a.cols()));
  }
  const std::size_t ia = a.index(), ib = bias.index();
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return a.tape()->record(checked(std::move(out), "add_row"), {ia, ib},
                          [ia, ib](Tape& t, std::size_t self) {
                            const Matrix& g = t.grad(self);
                            if (t.requires_grad(ia)) t.grad_mut(ia) += g;
                            if (t.requires_grad(ib)) t.grad_mut(ib) += g.colwise().sum();
                          });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.index();
  return a.tape()->record(checked(a.value() * s, "scale"), {ia},
                          [ia, s](Tape& t, std::size_t self) { t.grad_mut(ia) += s * t.grad(self); });
}

Var one_minus(Var a) {
  const std::size_t ia = a.index();
  Matrix out = (1.0 - a.value().array()).matrix();
  return a.tape()->record(std::move(out), {ia},
                          [ia](Tape& t, std::size_t self) { t.grad_mut(ia) -= t.grad(self); });
}

Var sigmoid(Var a) {
  const std::size_t ia = a.index();
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return a.tape()->record(checked(std::move(out), "sigmoid"), {ia},
                          [ia](Tape& t, std::size_t self) {
                            const auto y = t.value(self).array();
                            t.grad_mut(ia).array() += t.grad(self).array() * y * (1.0 - y);
                          });
}

Var tanh(Var a) {
  const std::size_t ia = a.index();
  Matrix out = a.value().array().tanh().matrix();
  return a.tape()->record(checked(std::move(out), "tanh"), {ia},
                          [ia](Tape& t, std::size_t self) {
                            const auto y = t.value(self).array();
                            t.grad_mut(ia).array() += t.grad(self).array() * (1.0 - y.square());
                          });
}

Var gelu(Var a) {
  const std::size_t ia = a.index();
  return a.tape()->record(tensor::gelu(a.value()), {ia}, [ia](Tape& t, std::size_t self) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    const Matrix& x = t.value(ia);
    const Matrix d = x.unaryExpr([c](double v) {
      const double u = c * (v + 0.044715 * v * v * v);
      const double th = std::tanh(u);
      const double du = c * (1.0 + 3.0 * 0.044715 * v * v);
      return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
    });
    t.grad_mut(ia) += t.grad(self).cwiseProduct(d);
  });
}

Var softmax_rows(Var a) {
  const std::size_t ia = a.index();
  return a.tape()->record(tensor::softmax_rows(a.value()), {ia}, [ia](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      t.grad_mut(ia).row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
    }
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Eigen::Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw ShapeError("layer_norm_rows: gain/bias must be 1x" + std::to_string(n));
  }
  const std::size_t ix = x.index(), ig = gain.index(), ib = bias.index();
  Matrix out = tensor::layer_norm_rows(x.value(), gain.value(), bias.value(), eps);
  return x.tape()->record(std::move(out), {ix, ig, ib}, [ix, ig, ib, eps](Tape& t, std::size_t self) {
    const Matrix& xv = t.value(ix);
    const Matrix& g = t.grad(self);
    const auto& gain_v = t.value(ig);
    const double cols = static_cast<double>(xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      const double mean = xv.row(r).sum() / cols;
      const RowVector centered = xv.row(r).array() - mean;
      const double var = centered.squaredNorm() / cols;
      const double inv = 1.0 / std::sqrt(var + eps);
      const RowVector xhat = centered * inv;
      if (t.requires_grad(ig)) t.grad_mut(ig).row(0) += g.row(r).cwiseProduct(xhat);
      if (t.requires_grad(ib)) t.grad_mut(ib).row(0) += g.row(r);
      if (t.requires_grad(ix)) {
        const RowVector gx = g.row(r).cwiseProduct(gain_v.row(0));
        const double mean_gx = gx.sum() / cols;
        const double mean_gx_xhat = gx.dot(xhat) / cols;
        t.grad_mut(ix).row(r) += inv * (gx.array() - mean_gx - xhat.array() * mean_gx_xhat).matrix();
      }
    }
  });
}

Var sum(Var a) {
  const std::size_t ia = a.index();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    t.grad_mut(ia).array() += t.grad(self)(0, 0);
  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  const std::size_t it = table.index();
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= static_cast<std::size_t>(tv.rows())) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[r]) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(r)) = tv.row(static_cast<Eigen::Index>(ids[r]));
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return table.tape()->record(std::move(out), {it}, [it, idv](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    for (std::size_t r = 0; r < idv.size(); ++r) {
      t.grad_mut(it).row(static_cast<Eigen::Index>(idv[r])) += g.row(static_cast<Eigen::Index>(r));
    }
  });
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const Matrix& z = logits.value();
  if (static_cast<std::size_t>(z.rows()) != targets.size()) {
    throw ShapeError("cross_entropy: " + std::to_string(z.rows()) + " rows but " +
                     std::to_string(targets.size()) + " targets");
  }
  const Matrix logp = tensor::log_softmax_rows(z);
  double total = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] >= static_cast<std::size_t>(z.cols())) {
      throw ShapeError("cross_entropy: target " + std::to_string(targets[r]) + " out of range");
    }
    total -= logp(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(targets[r]));
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(targets.size());
  tensor::check_finite(out, "cross_entropy");
  const std::size_t il = logits.index();
  std::vector<std::size_t> tv(targets.begin(), targets.end());
  return logits.tape()->record(std::move(out), {il}, [il, tv, logp](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0) / static_cast<double>(tv.size());
    Matrix d = logp.array().exp().matrix();
    for (std::size_t r = 0; r < tv.size(); ++r) {
      d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(tv[r])) -= 1.0;
    }
    t.grad_mut(il) += g * d;
  });
}

}  // namespace gazeprobe::autodiff
