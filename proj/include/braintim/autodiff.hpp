#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "braintim/error.hpp"
#include "braintim/tensor.hpp"

namespace braintim {

class Tape;

// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  bool valid() const { return tape != nullptr; }
  const Matrix& value() const;
};

// Define-by-run reverse-mode tape over dense matrices. Every op evaluates its
// value eagerly and records a closure that pushes the output gradient back to
// its inputs. Only the ops the model needs are provided.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }

  Var constant(Matrix value) { return push(std::move(value), false, {}); }
  Var leaf(Matrix value) { return push(std::move(value), true, {}); }

  const Matrix& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // Gradient accumulated into `v` by the last backward(); zeros if none
  // reached it.
  Matrix grad(Var v) const {
    const auto& n = node(v);
    if (n.grad.empty()) return Matrix(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void backward(Var loss) {
    if (!loss.valid() || loss.tape != this || loss.id >= nodes_.size()) {
      throw StateError("backward called without a recorded forward pass");
    }
    if (nodes_[loss.id].value.size() != 1) throw StateError("backward requires a scalar loss");
    if (backward_done_) throw StateError("backward already ran on this tape");
    backward_done_ = true;
    auto& root = nodes_[loss.id];
    if (!root.requires_grad) return;
    root.grad = Matrix(1, 1, 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward();
    }
  }

  // ---- ops ---------------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols() != B.rows()) throw ShapeError("matmul: " + A.shape_string() + " * " + B.shape_string());
    Matrix C(A.rows(), B.cols());
    gemm_nn(A, B, C);
    return push_op(std::move(C), {a, b}, [this, a, b](std::size_t self) {
      const Matrix& G = nodes_[self].grad;
      if (requires_grad(a)) gemm_nt(G, value(b), grad_ref(a));
      if (requires_grad(b)) gemm_tn(value(a), G, grad_ref(b));
    });
  }

  // a * b^T
  Var matmul_bt(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols() != B.cols()) throw ShapeError("matmul_bt: " + A.shape_string() + " * " + B.shape_string() + "^T");
    Matrix C(A.rows(), B.rows());
    gemm_nt(A, B, C);
    return push_op(std::move(C), {a, b}, [this, a, b](std::size_t self) {
      const Matrix& G = nodes_[self].grad;
      if (requires_grad(a)) gemm_nn(G, value(b), grad_ref(a));
      if (requires_grad(b)) gemm_tn(G, value(a), grad_ref(b));
    });
  }

  Var add(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (!A.same_shape(B)) throw ShapeError("add: " + A.shape_string() + " + " + B.shape_string());
    Matrix C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
    return push_op(std::move(C), {a, b}, [this, a, b](std::size_t self) {
      const Matrix& G = nodes_[self].grad;
      if (requires_grad(a)) accumulate(grad_ref(a), G);
      if (requires_grad(b)) accumulate(grad_ref(b), G);
    });
  }

  // Adds a 1 x cols row to every row of `a`.
  Var add_row(Var a, Var row) {
    const Matrix& A = value(a);
    const Matrix& R = value(row);
    if (R.rows() != 1 || R.cols() != A.cols()) {
      throw ShapeError("add_row: " + A.shape_string() + " + " + R.shape_string());
    }
    Matrix C = A;
    for (std::size_t r = 0; r < C.rows(); ++r) {
      for (std::size_t c = 0; c < C.cols(); ++c) C(r, c) += R[c];
    }
    return push_op(std::move(C), {a, row}, [this, a, row](std::size_t self) {
      const Matrix& G = nodes_[self].grad;
      if (requires_grad(a)) accumulate(grad_ref(a), G);
      if (requires_grad(row)) {
        Matrix& gr = grad_ref(row);
        for (std::size_t r = 0; r < G.rows(); ++r) {
          for (std::size_t c = 0; c < G.cols(); ++c) gr[c] += G(r, c);
        }
      }
    });
  }

  Var affine(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

  Var scale(Var a, double s) {
    Matrix C = value(a);
    for (auto& v : C.data()) v *= s;
    return push_op(std::move(C), {a}, [this, a, s](std::size_t self) {
      const Matrix& G = nodes_[self].grad;
      Matrix& ga = grad_ref(a);
      for (std::size_t i = 0; i < G.size(); ++i) ga[i] += s * G[i];
    });
  }

  Var relu(Var a) {
    Matrix C = value(a);
    for (auto& v : C.data()) v = v > 0.0 ? v : 0.0;
    return push_op(std::move(C), {a}, [this, a](std::size_t self) {
      const Matrix& G = nodes_[self].grad;
      const Matrix& X = value(a);
      Matrix& ga = grad_ref(a);
      for (std::size_t i = 0; i < G.size(); ++i) {
        if (X[i] > 0.0) ga[i] += G[i];
      }
    });
  }

  // Row-wise normalization to zero mean / unit variance, then gain and bias.
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
    const Matrix& X = value(x);
    const Matrix& Gm = value(gain);
    const Matrix& Bt = value(bias);
    const std::size_t n = X.cols();
    if (Gm.rows() != 1 || Gm.cols() != n || !Gm.same_shape(Bt)) throw ShapeError("layer_norm: bad gain/bias shape");
    Matrix Y(X.rows(), n);
    Matrix xhat(X.rows(), n);
    std::vector<double> inv_std(X.rows());
    for (std::size_t r = 0; r < X.rows(); ++r) {
      double mean = 0.0;
      for (std::size_t c = 0; c < n; ++c) mean += X(r, c);
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t c = 0; c < n; ++c) var += (X(r, c) - mean) * (X(r, c) - mean);
      var /= static_cast<double>(n);
      inv_std[r] = 1.0 / std::sqrt(var + eps);
      for (std::size_t c = 0; c < n; ++c) {
        xhat(r, c) = (X(r, c) - mean) * inv_std[r];
        Y(r, c) = xhat(r, c) * Gm[c] + Bt[c];
      }
    }
    return push_op(std::move(Y), {x, gain, bias},
                   [this, x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::size_t self) {
                     const Matrix& G = nodes_[self].grad;
                     const Matrix& Gm = value(gain);
                     const std::size_t n = G.cols();
                     if (requires_grad(gain) || requires_grad(bias)) {
                       Matrix& gg = grad_ref(gain);
                       Matrix& gb = grad_ref(bias);
                       for (std::size_t r = 0; r < G.rows(); ++r) {
                         for (std::size_t c = 0; c < n; ++c) {
                           gg[c] += G(r, c) * xhat(r, c);
                           gb[c] += G(r, c);
                         }
                       }
                     }
                     if (requires_grad(x)) {
                       Matrix& gx = grad_ref(x);
                       std::vector<double> dxhat(n);
                       for (std::size_t r = 0; r < G.rows(); ++r) {
                         double sum_d = 0.0, sum_dx = 0.0;
                         for (std::size_t c = 0; c < n; ++c) {
                           dxhat[c] = G(r, c) * Gm[c];
                           sum_d += dxhat[c];
                           sum_dx += dxhat[c] * xhat(r, c);
                         }
                         const double inv_n = 1.0 / static_cast<double>(n);
                         for (std::size_t c = 0; c < n; ++c) {
                           gx(r, c) += inv_std[r] * (dxhat[c] - inv_n * sum_d - xhat(r, c) * inv_n * sum_dx);
                         }
                       }
                     }
                   });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t cols = 0;
    for (auto p : parts) {
      if (value(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
      cols += value(p).cols();
    }
    Matrix C(rows, cols);
    std::size_t off = 0;
    for (auto p : parts) {
      const Matrix& P = value(p);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < P.cols(); ++c) C(r, off + c) = P(r, c);
      }
      off += P.cols();
    }
    return push_op(std::move(C), parts, [this, parts](std::size_t self) {
      const Matrix& G = nodes_[self].grad;
      std::size_t off = 0;
      for (auto p : parts) {
        const std::size_t pc = value(p).cols();
        if (requires_grad(p)) {
          Matrix& gp = grad_ref(p);
          for (std::size_t r = 0; r < G.rows(); ++r) {
            for (std::size_t c = 0; c < pc; ++c) gp(r, c) += G(r, off + c);
          }
        }
        off += pc;
      }
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t cols = value(parts[0]).cols();
    std::size_t rows = 0;
    for (auto p : parts) {
      if (value(p).cols() != cols) throw ShapeError("concat_rows: column mismatch");
      rows += value(p).rows();
    }
    Matrix C(rows, cols);
    std::size_t off = 0;
    for (auto p : parts) {
      const Matrix& P = value(p);
      std::copy(P.data().begin(), P.data().end(), C.data().begin() + static_cast<std::ptrdiff_t>(off * cols));
      off += P.rows();
    }
    return push_op(std::move(C), parts, [this, parts](std::size_t self) {
      const Matrix& G = nodes_[self].grad;
      const std::size_t cols = G.cols();
      std::size_t off = 0;
      for (auto p : parts) {
        const std::size_t pr = value(p).rows();
        if (requires_grad(p)) {
          Matrix& gp = grad_ref(p);
          for (std::size_t i = 0; i < pr * cols; ++i) gp[i] += G[off * cols + i];
        }
        off += pr;
      }
    });
  }

  // Copies `rows` consecutive copies of a 1 x n row into a rows x n matrix.
  Var repeat_row(Var row, std::size_t rows) {
    const Matrix& R = value(row);
    if (R.rows() != 1) throw ShapeError("repeat_row: input must be a single row");
    Matrix C(rows, R.cols());
    for (std::size_t r = 0; r < rows; ++r) std::copy(R.data().begin(), R.data().end(), C.row_span(r).begin());
    return push_op(std::move(C), {row}, [this, row](std::size_t self) {
      const Matrix& G = nodes_[self].grad;
      Matrix& gr = grad_ref(row);
      for (std::size_t r = 0; r < G.rows(); ++r) {
        for (std::size_t c = 0; c < G.cols(); ++c) gr[c] += G(r, c);
      }
    });
  }

  Var slice_cols(Var a, std::size_t start, std::size_t count) {
    const Matrix& A = value(a);
    if (start + count > A.cols()) throw ShapeError("slice_cols: out of range");
    Matrix C(A.rows(), count);
    for (std::size_t r = 0; r < A.rows(); ++r) {
      for (std::size_t c = 0; c < count; ++c) C(r, c) = A(r, start + c);
    }
    return push_op(std::move(C), {a}, [this, a, start](std::size_t self) {
      const Matrix& G = nodes_[self].grad;
      Matrix& ga = grad_ref(a);
      for (std::size_t r = 0; r < G.rows(); ++r) {
        for (std::size_t c = 0; c < G.cols(); ++c) ga(r, start + c) += G(r, c);
      }
    });
  }

  Var gather_rows(Var a, std::vector<std::size_t> index) {
    const Matrix& A = value(a);
    Matrix C(index.size(), A.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] >= A.rows()) throw ShapeError("gather_rows: index out of range");
      std::copy(A.row_span(index[i]).begin(), A.row_span(index[i]).end(), C.row_span(i).begin());
    }
    return push_op(std::move(C), {a}, [this, a, index = std::move(index)](std::size_t self) {
      const Matrix& G = nodes_[self].grad;
      Matrix& ga = grad_ref(a);
      for (std::size_t i = 0; i < index.size(); ++i) {
        for (std::size_t c = 0; c < G.cols(); ++c) ga(index[i], c) += G(i, c);
      }
    });
  }

  // Row-wise softmax. Columns with key_valid[c] == false get probability 0.
  Var softmax_rows(Var a, std::span<const bool> key_valid = {}) {
    const Matrix& A = value(a);
    if (!key_valid.empty() && key_valid.size() != A.cols()) throw ShapeError("softmax_rows: mask width mismatch");
    Matrix P(A.rows(), A.cols());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < A.cols(); ++c) {
        if (key_valid.empty() || key_valid[c]) m = std::max(m, A(r, c));
      }
      double z = 0.0;
      for (std::size_t c = 0; c < A.cols(); ++c) {
        const double e = (key_valid.empty() || key_valid[c]) ? std::exp(A(r, c) - m) : 0.0;
        P(r, c) = e;
        z += e;
      }
      for (std::size_t c = 0; c < A.cols(); ++c) P(r, c) /= z;
    }
    return push_op(std::move(P), {a}, [this, a](std::size_t self) {
      const Matrix& G = nodes_[self].grad;
      const Matrix& P = nodes_[self].value;
      Matrix& ga = grad_ref(a);
      for (std::size_t r = 0; r < G.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < G.cols(); ++c) dot += G(r, c) * P(r, c);
        for (std::size_t c = 0; c < G.cols(); ++c) ga(r, c) += P(r, c) * (G(r, c) - dot);
      }
    });
  }

  // Mean softmax cross-entropy over rows whose label is >= 0; rows labelled
  // negative are masked out. Returns a 1 x 1 node (0 when every row is
  // masked).
  Var cross_entropy(Var logits, std::vector<int> labels) {
    const Matrix& L = value(logits);
    if (labels.size() != L.rows()) throw ShapeError("cross_entropy: label count mismatch");
    std::size_t valid = 0;
    for (int y : labels) {
      if (y >= static_cast<int>(L.cols())) throw InvalidLabel("label id exceeds class count");
      if (y >= 0) ++valid;
    }
    Matrix prob(L.rows(), L.cols());
    double loss = 0.0;
    for (std::size_t r = 0; r < L.rows(); ++r) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < L.cols(); ++c) m = std::max(m, L(r, c));
      double z = 0.0;
      for (std::size_t c = 0; c < L.cols(); ++c) z += std::exp(L(r, c) - m);
      const double log_z = m + std::log(z);
      for (std::size_t c = 0; c < L.cols(); ++c) prob(r, c) = std::exp(L(r, c) - log_z);
      if (labels[r] >= 0) loss += log_z - L(r, static_cast<std::size_t>(labels[r]));
    }
    const double inv = valid == 0 ? 0.0 : 1.0 / static_cast<double>(valid);
    return push_op(Matrix(1, 1, loss * inv), {logits},
                   [this, logits, inv, labels = std::move(labels), prob = std::move(prob)](std::size_t self) {
                     const double g = nodes_[self].grad[0] * inv;
                     if (g == 0.0 && inv == 0.0) return;
                     Matrix& gl = grad_ref(logits);
                     for (std::size_t r = 0; r < prob.rows(); ++r) {
                       if (labels[r] < 0) continue;
                       for (std::size_t c = 0; c < prob.cols(); ++c) {
                         const double target = static_cast<int>(c) == labels[r] ? 1.0 : 0.0;
                         gl(r, c) += g * (prob(r, c) - target);
                       }
                     }
                   });
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  const Node& node(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) throw StateError("variable does not belong to this tape");
    return nodes_[v.id];
  }

  Var push(Matrix value, bool requires_grad, std::function<void()> back) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(back)});
    return Var{this, nodes_.size() - 1};
  }

  template <class Fn>
  Var push_op(Matrix value, const std::vector<Var>& inputs, Fn&& fn) {
    bool rg = false;
    for (auto v : inputs) rg = rg || requires_grad(v);
    if (!rg) return push(std::move(value), false, {});
    const std::size_t self = nodes_.size();
    return push(std::move(value), true, [fn = std::forward<Fn>(fn), self]() { fn(self); });
  }

  Matrix& grad_ref(Var v) {
    auto& n = nodes_[v.id];
    if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
  }

  static void accumulate(Matrix& dst, const Matrix& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  // C += A * B
  static void gemm_nn(const Matrix& A, const Matrix& B, Matrix& C) {
    const std::size_t n = B.cols();
    for (std::size_t i = 0; i < A.rows(); ++i) {
      double* c = C.data().data() + i * n;
      for (std::size_t k = 0; k < A.cols(); ++k) {
        const double a = A(i, k);
        if (a == 0.0) continue;
        const double* b = B.data().data() + k * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  }
  // C += A * B^T
  static void gemm_nt(const Matrix& A, const Matrix& B, Matrix& C) {
    const std::size_t kdim = A.cols();
    for (std::size_t i = 0; i < A.rows(); ++i) {
      const double* a = A.data().data() + i * kdim;
      for (std::size_t j = 0; j < B.rows(); ++j) {
        const double* b = B.data().data() + j * kdim;
        double acc = 0.0;
        for (std::size_t k = 0; k < kdim; ++k) acc += a[k] * b[k];
        C(i, j) += acc;
      }
    }
  }
  // C += A^T * B
  static void gemm_tn(const Matrix& A, const Matrix& B, Matrix& C) {
    const std::size_t n = B.cols();
    for (std::size_t k = 0; k < A.rows(); ++k) {
      const double* b = B.data().data() + k * n;
      for (std::size_t i = 0; i < A.cols(); ++i) {
        const double a = A(k, i);
        if (a == 0.0) continue;
        double* c = C.data().data() + i * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

inline const Matrix& Var::value() const {
  if (tape == nullptr) throw StateError("unbound variable");
  return tape->value(*this);
}

}  // namespace braintim
