#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dapa/tensor.hpp"

namespace dapa {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff tape over Tensor-valued nodes. Ops append nodes in
// evaluation order, so the record is topologically sorted by construction and
// the backward sweep is a single reverse pass that visits each node once.
// One tape per training step; not shared across threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);

  const Tensor& value(Var v) const { return nodes_[check(v)].value; }
  const Tensor& grad(Var v) const { return nodes_[check(v)].grad; }
  double scalar_value(Var v) const;

  // Seeds d(loss)/d(loss)=1 and accumulates gradients into every node.
  // Leaves never touched by the loss keep their zero gradient.
  void backward(Var loss);

  void clear() { nodes_.clear(); }
  int size() const { return int(nodes_.size()); }

  // --- elementwise ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var tanh_(Var a);
  Var exp_(Var a);
  Var softplus(Var a);
  Var clamp(Var a, double lo, double hi);

  // --- linear algebra ---
  Var matmul(Var a, Var b);             // (m,k)x(k,n) -> (m,n)
  Var matvec(Var a, Var x);             // (m,k)x(k)   -> (m)
  Var vecmat(Var x, Var a);             // (k)x(k,n)   -> (n)
  Var add_rowvec(Var m, Var v);         // broadcast v over rows of m
  Var sub_rowvec(Var m, Var v);
  Var mul_scalar(Var a, Var s);         // s is a shape-{1} Var

  // --- shape ---
  Var concat_cols(Var a, Var b);        // (n,c1)+(n,c2) -> (n,c1+c2)
  Var stack_rows(std::span<const Var> rows);   // k vectors (d) -> (k,d)
  Var slice_row(Var m, int row);        // (n,d) -> (d)
  Var slice_cols(Var m, int start, int len);   // (n,d) -> (n,len)
  Var subvec(Var v, int start, int len);       // (d) -> (len)

  // --- reductions ---
  Var sum(Var a);                       // -> {1}

  // --- rotations ---
  // Axis-angle to rotation matrix, differentiable. Taylor branch below
  // |omega| = 1e-8 keeps the derivative well defined at the origin.
  Var rodrigues(Var omega);             // (3) -> (3,3)
  // 3x3 chain ops routed through the kern:: kernels so a plain numeric
  // forward pass reproduces tape values bit for bit.
  Var rot_compose(Var a, Var b);        // (3,3)x(3,3) -> (3,3)
  Var rot_apply(Var r, Var x);          // (3,3)x(3)   -> (3)

  // --- composites ---
  Var mean(Var a) { return scale(sum(a), 1.0 / value(a).size()); }
  Var mse(Var a, Var b) {
    Var d = sub(a, b);
    return scale(sum(mul(d, d)), 1.0 / value(a).size());
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> backward;  // null for leaves
  };

  int check(Var v) const;
  Var push(Tensor value, std::function<void(Tape&)> back);
  Tensor& g(int id) { return nodes_[size_t(id)].grad; }
  const Tensor& v(int id) const { return nodes_[size_t(id)].value; }

  std::vector<Node> nodes_;
};

// Pure (non-tape) kernels shared with the numeric forward paths so that tape
// and numeric evaluation of the same formula are bit-identical.
namespace kern {
void rodrigues(const double* omega, double* r9);
// d(loss)/d(omega) += J^T * d(loss)/d(R), with R the 3x3 at r9.
void rodrigues_backward(const double* omega, const double* r9,
                        const double* dr9, double* domega3);
void mat3mul(const double* a, const double* b, double* out);
void mat3vec(const double* a, const double* x, double* out);
double softplus(double x);
}  // namespace kern

}  // namespace dapa
