#pragma once

#include <cassert>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace psr::ad {

using Mat = Eigen::MatrixXd;

struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over dense 64-bit matrices.
//
// A forward pass appends nodes in topological order; backward() walks the
// node list in reverse and accumulates adjoints. With recording disabled the
// same ops run value-only, so inference and training share one code path.
// Gradients are deterministic: accumulation order is fixed by node order.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  void reset() {
    nodes_.clear();
    externals_.clear();
  }

  std::size_t size() const { return nodes_.size(); }

  // Leaf referencing external storage (parameters, inputs). The referenced
  // matrix must outlive any use of the tape.
  Value leaf(const Mat& external) {
    Node n;
    n.ext = &external;
    externals_.push_back(&external);
    return push(std::move(n));
  }

  // Leaf owning its value (constants, generated inputs).
  Value constant(Mat m) {
    Node n;
    n.val = std::move(m);
    return push(std::move(n));
  }

  const Mat& val(Value v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.idx));
    return n.ext ? *n.ext : n.val;
  }

  const Mat& grad(Value v) const { return nodes_.at(static_cast<std::size_t>(v.idx)).grad; }

  // Seeds d(root)/d(root)=1 and accumulates adjoints into every node.
  void backward(Value root) {
    if (!recording_) throw std::logic_error("backward() on a non-recording tape");
    const Mat& rv = val(root);
    if (rv.size() != 1) throw std::logic_error("backward() root must be scalar");
    for (auto& n : nodes_) {
      const Mat& v = n.ext ? *n.ext : n.val;
      n.grad = Mat::Zero(v.rows(), v.cols());
    }
    nodes_[static_cast<std::size_t>(root.idx)].grad(0, 0) = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].back) nodes_[i].back(*this);
    }
  }

  // ---- primitive ops ------------------------------------------------------

  Value matmul(Value a, Value b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    check(A.cols() == B.rows(), "matmul dims");
    Value out = emit(A * B);
    record(out, [a, b, out](Tape& t) {
      const Mat& g = t.grad(out);
      t.g(a) += g * t.val(b).transpose();
      t.g(b) += t.val(a).transpose() * g;
    });
    return out;
  }

  // a * b^T
  Value matmul_nt(Value a, Value b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    check(A.cols() == B.cols(), "matmul_nt dims");
    Value out = emit(A * B.transpose());
    record(out, [a, b, out](Tape& t) {
      const Mat& g = t.grad(out);
      t.g(a) += g * t.val(b);
      t.g(b) += g.transpose() * t.val(a);
    });
    return out;
  }

  Value add(Value a, Value b) {
    check(same_shape(a, b), "add shape");
    Value out = emit(val(a) + val(b));
    record(out, [a, b, out](Tape& t) {
      t.g(a) += t.grad(out);
      t.g(b) += t.grad(out);
    });
    return out;
  }

  Value sub(Value a, Value b) {
    check(same_shape(a, b), "sub shape");
    Value out = emit(val(a) - val(b));
    record(out, [a, b, out](Tape& t) {
      t.g(a) += t.grad(out);
      t.g(b) -= t.grad(out);
    });
    return out;
  }

  Value cmul(Value a, Value b) {
    check(same_shape(a, b), "cmul shape");
    Value out = emit(val(a).cwiseProduct(val(b)));
    record(out, [a, b, out](Tape& t) {
      t.g(a) += t.grad(out).cwiseProduct(t.val(b));
      t.g(b) += t.grad(out).cwiseProduct(t.val(a));
    });
    return out;
  }

  Value scale(Value a, double s) {
    Value out = emit(val(a) * s);
    record(out, [a, s, out](Tape& t) { t.g(a) += t.grad(out) * s; });
    return out;
  }

  // a[R,C] + row[1,C] broadcast down rows
  Value add_rowvec(Value a, Value row) {
    const Mat& A = val(a);
    const Mat& r = val(row);
    check(r.rows() == 1 && r.cols() == A.cols(), "add_rowvec shape");
    Value out = emit(A.rowwise() + r.row(0));
    record(out, [a, row, out](Tape& t) {
      t.g(a) += t.grad(out);
      t.g(row) += t.grad(out).colwise().sum();
    });
    return out;
  }

  // a[R,C] + col[R,1] broadcast across columns
  Value add_colvec(Value a, Value col) {
    const Mat& A = val(a);
    const Mat& c = val(col);
    check(c.cols() == 1 && c.rows() == A.rows(), "add_colvec shape");
    Value out = emit(A.colwise() + c.col(0));
    record(out, [a, col, out](Tape& t) {
      t.g(a) += t.grad(out);
      t.g(col) += t.grad(out).rowwise().sum();
    });
    return out;
  }

  // a[R,C] .* row[1,C] broadcast
  Value mul_rowvec(Value a, Value row) {
    const Mat& A = val(a);
    const Mat& r = val(row);
    check(r.rows() == 1 && r.cols() == A.cols(), "mul_rowvec shape");
    Value out = emit((A.array().rowwise() * r.row(0).array()).matrix());
    record(out, [a, row, out](Tape& t) {
      const Mat& g = t.grad(out);
      t.g(a) += (g.array().rowwise() * t.val(row).row(0).array()).matrix();
      t.g(row) += g.cwiseProduct(t.val(a)).colwise().sum();
    });
    return out;
  }

  Value sigmoid(Value a) {
    Value out = emit(val(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); }));
    record(out, [a, out](Tape& t) {
      const Mat& y = t.val(out);
      t.g(a) += t.grad(out).cwiseProduct(y.cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y));
    });
    return out;
  }

  Value tanh_(Value a) {
    Value out = emit(val(a).array().tanh().matrix());
    record(out, [a, out](Tape& t) {
      const Mat& y = t.val(out);
      t.g(a) += t.grad(out).cwiseProduct((1.0 - y.array().square()).matrix());
    });
    return out;
  }

  // x * sigmoid(x)
  Value silu(Value a) {
    Value out = emit(val(a).unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); }));
    record(out, [a, out](Tape& t) {
      const Mat& x = t.val(a);
      Mat d = x.unaryExpr([](double v) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
      t.g(a) += t.grad(out).cwiseProduct(d);
    });
    return out;
  }

  Value square(Value a) {
    Value out = emit(val(a).array().square().matrix());
    record(out, [a, out](Tape& t) {
      t.g(a) += 2.0 * t.grad(out).cwiseProduct(t.val(a));
    });
    return out;
  }

  Value abs_(Value a) {
    Value out = emit(val(a).cwiseAbs());
    record(out, [a, out](Tape& t) {
      Mat s = t.val(a).unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
      t.g(a) += t.grad(out).cwiseProduct(s);
    });
    return out;
  }

  // numerically stable row-wise softmax
  Value softmax_rows(Value a) {
    const Mat& A = val(a);
    Mat y(A.rows(), A.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const double m = A.row(i).maxCoeff();
      Eigen::ArrayXd e = (A.row(i).array() - m).exp();
      y.row(i) = (e / e.sum()).matrix();
    }
    Value out = emit(std::move(y));
    record(out, [a, out](Tape& t) {
      const Mat& yv = t.val(out);
      const Mat& g = t.grad(out);
      Mat gx(yv.rows(), yv.cols());
      for (Eigen::Index i = 0; i < yv.rows(); ++i) {
        const double dot = g.row(i).dot(yv.row(i));
        gx.row(i) = yv.row(i).cwiseProduct(g.row(i) - Mat::Constant(1, yv.cols(), dot));
      }
      t.g(a) += gx;
    });
    return out;
  }

  // elementwise product with a fixed mask (dropout etc.)
  Value mask(Value a, Mat m) {
    check(m.rows() == val(a).rows() && m.cols() == val(a).cols(), "mask shape");
    Value out = emit(val(a).cwiseProduct(m));
    if (recording_) {
      auto mp = std::make_shared<Mat>(std::move(m));
      record(out, [a, out, mp](Tape& t) { t.g(a) += t.grad(out).cwiseProduct(*mp); });
    }
    return out;
  }

  Value concat_cols(Value a, Value b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    check(A.rows() == B.rows(), "concat_cols rows");
    Mat y(A.rows(), A.cols() + B.cols());
    y << A, B;
    Value out = emit(std::move(y));
    const Eigen::Index ac = A.cols();
    record(out, [a, b, out, ac](Tape& t) {
      const Mat& g = t.grad(out);
      t.g(a) += g.leftCols(ac);
      t.g(b) += g.rightCols(g.cols() - ac);
    });
    return out;
  }

  Value slice_cols(Value a, int c0, int n) {
    const Mat& A = val(a);
    check(c0 >= 0 && n > 0 && c0 + n <= A.cols(), "slice_cols range");
    Value out = emit(A.middleCols(c0, n));
    record(out, [a, out, c0, n](Tape& t) {
      t.g(a).middleCols(c0, n) += t.grad(out);
    });
    return out;
  }

  Value slice_rows(Value a, int r0, int n) {
    const Mat& A = val(a);
    check(r0 >= 0 && n > 0 && r0 + n <= A.rows(), "slice_rows range");
    Value out = emit(A.middleRows(r0, n));
    record(out, [a, out, r0, n](Tape& t) {
      t.g(a).middleRows(r0, n) += t.grad(out);
    });
    return out;
  }

  // Rows shifted by `offset` with zero fill, independently inside each
  // consecutive block of `block` rows (block <= 0 means the whole matrix).
  // out[r] = a[r + offset] when both lie in the same block.
  Value shift_rows(Value a, int offset, int block) {
    const Mat& A = val(a);
    const int R = static_cast<int>(A.rows());
    const int blk = block <= 0 ? R : block;
    check(R % blk == 0, "shift_rows block");
    Mat y = Mat::Zero(R, A.cols());
    for (int r = 0; r < R; ++r) {
      const int s = r + offset;
      if (s >= 0 && s < R && s / blk == r / blk) y.row(r) = A.row(s);
    }
    Value out = emit(std::move(y));
    record(out, [a, out, offset, blk](Tape& t) {
      const Mat& g = t.grad(out);
      Mat& ga = t.g(a);
      const int R = static_cast<int>(g.rows());
      for (int r = 0; r < R; ++r) {
        const int s = r + offset;
        if (s >= 0 && s < R && s / blk == r / blk) ga.row(s) += g.row(r);
      }
    });
    return out;
  }

  // rows {start, start+stride, ...} -> [count, C]
  Value gather_rows_strided(Value a, int start, int stride, int count) {
    const Mat& A = val(a);
    check(start >= 0 && stride > 0 && start + (count - 1) * stride < A.rows(), "gather range");
    Mat y(count, A.cols());
    for (int i = 0; i < count; ++i) y.row(i) = A.row(start + i * stride);
    Value out = emit(std::move(y));
    record(out, [a, out, start, stride, count](Tape& t) {
      const Mat& g = t.grad(out);
      Mat& ga = t.g(a);
      for (int i = 0; i < count; ++i) ga.row(start + i * stride) += g.row(i);
    });
    return out;
  }

  // Interleave T parts of shape [B, C] into [B*T, C]; row b*T + t takes
  // parts[t] row b. Inverse of gather_rows_strided over a b-major stack.
  Value interleave_rows(const std::vector<Value>& parts, int B) {
    check(!parts.empty(), "interleave empty");
    const int T = static_cast<int>(parts.size());
    const Mat& p0 = val(parts[0]);
    check(p0.rows() == B, "interleave rows");
    Mat y(static_cast<Eigen::Index>(B) * T, p0.cols());
    for (int t = 0; t < T; ++t) {
      const Mat& p = val(parts[static_cast<std::size_t>(t)]);
      check(p.rows() == B && p.cols() == p0.cols(), "interleave shape");
      for (int b = 0; b < B; ++b) y.row(static_cast<Eigen::Index>(b) * T + t) = p.row(b);
    }
    Value out = emit(std::move(y));
    auto ps = parts;
    record(out, [ps, out, B](Tape& t) {
      const Mat& g = t.grad(out);
      const int T = static_cast<int>(ps.size());
      for (int k = 0; k < T; ++k) {
        Mat& gp = t.g(ps[static_cast<std::size_t>(k)]);
        for (int b = 0; b < B; ++b) gp.row(b) += g.row(static_cast<Eigen::Index>(b) * T + k);
      }
    });
    return out;
  }

  // Stacks parts vertically in order.
  Value vstack(const std::vector<Value>& parts) {
    check(!parts.empty(), "vstack empty");
    Eigen::Index rows = 0;
    const Eigen::Index cols = val(parts[0]).cols();
    for (const auto& p : parts) {
      check(val(p).cols() == cols, "vstack cols");
      rows += val(p).rows();
    }
    Mat y(rows, cols);
    Eigen::Index o = 0;
    for (const auto& p : parts) {
      y.middleRows(o, val(p).rows()) = val(p);
      o += val(p).rows();
    }
    Value out = emit(std::move(y));
    auto ps = parts;
    record(out, [ps, out](Tape& t) {
      const Mat& g = t.grad(out);
      Eigen::Index o = 0;
      for (const auto& p : ps) {
        const Eigen::Index r = t.val(p).rows();
        t.g(p) += g.middleRows(o, r);
        o += r;
      }
    });
    return out;
  }

  // Column means over each consecutive block of `block` rows -> [R/block, C].
  Value block_mean_rows(Value a, int block) {
    const Mat& A = val(a);
    check(block > 0 && A.rows() % block == 0, "block_mean_rows block");
    const int nb = static_cast<int>(A.rows()) / block;
    Mat y(nb, A.cols());
    for (int b = 0; b < nb; ++b) y.row(b) = A.middleRows(b * block, block).colwise().mean();
    Value out = emit(std::move(y));
    record(out, [a, out, block](Tape& t) {
      const Mat& g = t.grad(out);
      Mat& ga = t.g(a);
      for (Eigen::Index b = 0; b < g.rows(); ++b)
        ga.middleRows(b * block, block).rowwise() += (g.row(b) / static_cast<double>(block)).eval();
    });
    return out;
  }

  Value row_sum(Value a) {
    Value out = emit(val(a).rowwise().sum());
    record(out, [a, out](Tape& t) {
      const Mat& g = t.grad(out);
      t.g(a).colwise() += g.col(0);
    });
    return out;
  }

  Value total_sum(Value a) {
    Mat y(1, 1);
    y(0, 0) = val(a).sum();
    Value out = emit(std::move(y));
    record(out, [a, out](Tape& t) {
      t.g(a).array() += t.grad(out)(0, 0);
    });
    return out;
  }

  Value mean_all(Value a) {
    const double n = static_cast<double>(val(a).size());
    Mat y(1, 1);
    y(0, 0) = val(a).sum() / n;
    Value out = emit(std::move(y));
    record(out, [a, out, n](Tape& t) {
      t.g(a).array() += t.grad(out)(0, 0) / n;
    });
    return out;
  }

  Value affine(Value x, Value w, Value b) { return add_rowvec(matmul(x, w), b); }

  // mutable adjoint access for backward lambdas
  Mat& g(Value v) { return nodes_.at(static_cast<std::size_t>(v.idx)).grad; }

  // Appends a custom node. fwd value is given; back receives the tape.
  Value custom(Mat value, std::function<void(Tape&)> back_builder) {
    Value out = emit(std::move(value));
    if (recording_ && back_builder) nodes_[static_cast<std::size_t>(out.idx)].back = std::move(back_builder);
    return out;
  }

  void set_back(Value v, std::function<void(Tape&)> back) {
    if (recording_) nodes_[static_cast<std::size_t>(v.idx)].back = std::move(back);
  }

 private:
  struct Node {
    Mat val;
    const Mat* ext = nullptr;
    Mat grad;
    std::function<void(Tape&)> back;
  };

  static void check(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("tape op contract violation: ") + what);
  }

  bool same_shape(Value a, Value b) const {
    return val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols();
  }

  Value push(Node n) {
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
  }

  Value emit(Mat v) {
    Node n;
    n.val = std::move(v);
    return push(std::move(n));
  }

  void record(Value out, std::function<void(Tape&)> back) {
    if (recording_) nodes_[static_cast<std::size_t>(out.idx)].back = std::move(back);
  }

  bool recording_;
  std::vector<Node> nodes_;
  std::vector<const Mat*> externals_;
};

}  // namespace psr::ad
