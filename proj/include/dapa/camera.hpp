#pragma once

#include <cmath>

#include "dapa/tape.hpp"
#include "dapa/tensor.hpp"

namespace dapa::cam {

// Weak perspective in normalized image coordinates: p = s*(x,y) + t.
struct WeakPerspective {
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;

  void validate() const {
    if (!(scale > 0.0) || scale > 10.0)
      throw ContractError("WeakPerspective: scale must be in (0, 10]");
    if (!std::isfinite(tx) || !std::isfinite(ty))
      throw ContractError("WeakPerspective: non-finite translation");
  }
};

inline Tensor project(const Tensor& points, const WeakPerspective& cam) {
  if (points.rank() != 2 || points.shape[1] != 3)
    throw DimensionError("project: points must be {N,3}");
  const int n = points.shape[0];
  Tensor out = Tensor::zeros({n, 2});
  for (int i = 0; i < n; ++i) {
    out.at(i, 0) = cam.scale * points.at(i, 0) + cam.tx;
    out.at(i, 1) = cam.scale * points.at(i, 1) + cam.ty;
  }
  return out;
}

// Tape twin; scale is a {1} var (already positive), trans a {2} var.
inline Var project(Tape& tape, Var points, Var scale, Var trans) {
  const Tensor& p = tape.value(points);
  if (p.rank() != 2 || p.shape[1] != 3)
    throw DimensionError("project: points must be {N,3}");
  return tape.add_rowvec(tape.mul_scalar(tape.slice_cols(points, 0, 2), scale),
                         trans);
}

}  // namespace dapa::cam
