#include "dapa/tape.hpp"

#include <Eigen/Core>

#include <cmath>

namespace dapa {

namespace {
using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

CMapMat cmap(const Tensor& t) { return CMapMat(t.values.data(), t.rows(), t.cols()); }
MapMat map(Tensor& t) { return MapMat(t.values.data(), t.rows(), t.cols()); }
CMapVec cvec(const Tensor& t) { return CMapVec(t.values.data(), t.size()); }
MapVec mvec(Tensor& t) { return MapVec(t.values.data(), t.size()); }

[[noreturn]] void dim_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       a.shape_str() + " and " + b.shape_str());
}
}  // namespace

namespace kern {

void rodrigues(const double* w, double* r) {
  const double x = w[0], y = w[1], z = w[2];
  const double th2 = x * x + y * y + z * z;
  const double th = std::sqrt(th2);
  double a, b;  // R = I + a*K + b*K^2
  if (th < 1e-8) {
    a = 1.0 - th2 / 6.0;
    b = 0.5 - th2 / 24.0;
  } else {
    a = std::sin(th) / th;
    const double sh = std::sin(0.5 * th);
    b = 2.0 * sh * sh / th2;  // (1-cos)/th^2 without cancellation
  }
  // K = skew(w), K^2 = w w^T - th^2 I
  r[0] = 1.0 + b * (x * x - th2);
  r[1] = -a * z + b * x * y;
  r[2] = a * y + b * x * z;
  r[3] = a * z + b * x * y;
  r[4] = 1.0 + b * (y * y - th2);
  r[5] = -a * x + b * y * z;
  r[6] = -a * y + b * x * z;
  r[7] = a * x + b * y * z;
  r[8] = 1.0 + b * (z * z - th2);
}

// Gallego-Yezzi closed form: dR/dw_i = (w_i K + skew(w x (I-R)e_i)) / th^2 * R
void rodrigues_backward(const double* w, const double* r, const double* dr,
                        double* dw) {
  const double th2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
  if (std::sqrt(th2) < 1e-8) {
    // dR/dw_i -> skew(e_i) at the origin
    dw[0] += dr[7] - dr[5];
    dw[1] += dr[2] - dr[6];
    dw[2] += dr[3] - dr[1];
    return;
  }
  for (int i = 0; i < 3; ++i) {
    // col = (I - R) e_i, v = w x col
    double col[3] = {-r[i], -r[3 + i], -r[6 + i]};
    col[i] += 1.0;
    const double v0 = w[1] * col[2] - w[2] * col[1];
    const double v1 = w[2] * col[0] - w[0] * col[2];
    const double v2 = w[0] * col[1] - w[1] * col[0];
    // S = (w_i * skew(w) + skew(v)) / th^2
    const double c = w[i] / th2;
    const double s01 = -c * w[2] - v2 / th2, s02 = c * w[1] + v1 / th2;
    const double s10 = c * w[2] + v2 / th2, s12 = -c * w[0] - v0 / th2;
    const double s20 = -c * w[1] - v1 / th2, s21 = c * w[0] + v0 / th2;
    // M = S * R; dw_i += <dr, M>
    double acc = 0.0;
    acc += dr[0] * (s01 * r[3] + s02 * r[6]);
    acc += dr[1] * (s01 * r[4] + s02 * r[7]);
    acc += dr[2] * (s01 * r[5] + s02 * r[8]);
    acc += dr[3] * (s10 * r[0] + s12 * r[6]);
    acc += dr[4] * (s10 * r[1] + s12 * r[7]);
    acc += dr[5] * (s10 * r[2] + s12 * r[8]);
    acc += dr[6] * (s20 * r[0] + s21 * r[3]);
    acc += dr[7] * (s20 * r[1] + s21 * r[4]);
    acc += dr[8] * (s20 * r[2] + s21 * r[5]);
    dw[i] += acc;
  }
}

void mat3mul(const double* a, const double* b, double* out) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      out[i * 3 + j] = a[i * 3] * b[j] + a[i * 3 + 1] * b[3 + j] +
                       a[i * 3 + 2] * b[6 + j];
}

void mat3vec(const double* a, const double* x, double* out) {
  for (int i = 0; i < 3; ++i)
    out[i] = a[i * 3] * x[0] + a[i * 3 + 1] * x[1] + a[i * 3 + 2] * x[2];
}

double softplus(double x) {
  return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

}  // namespace kern

int Tape::check(Var v) const {
  if (!v.valid() || v.id >= int(nodes_.size()))
    throw ContractError("Tape: Var does not belong to this tape");
  return v.id;
}

Var Tape::push(Tensor value, std::function<void(Tape&)> back) {
  Node n;
  n.grad = Tensor::zeros(value.shape);
  n.value = std::move(value);
  n.backward = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{int(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

double Tape::scalar_value(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw ContractError("scalar_value: tensor is not scalar");
  return t[0];
}

void Tape::backward(Var loss) {
  const int li = check(loss);
  if (nodes_[size_t(li)].value.size() != 1)
    throw ContractError("backward: loss node must be scalar");
  nodes_[size_t(li)].grad[0] = 1.0;
  for (int i = li; i >= 0; --i)
    if (nodes_[size_t(i)].backward) nodes_[size_t(i)].backward(*this);
}

Var Tape::add(Var a, Var b) {
  const Tensor &ta = v(check(a)), &tb = v(check(b));
  if (!ta.same_shape(tb)) dim_error("add", ta, tb);
  Tensor out = ta;
  for (int i = 0; i < out.size(); ++i) out[i] += tb[i];
  const int ai = a.id, bi = b.id, oi = size();
  return push(std::move(out), [ai, bi, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    Tensor &ga = t.g(ai), &gb = t.g(bi);
    for (int i = 0; i < go.size(); ++i) {
      ga[i] += go[i];
      gb[i] += go[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor &ta = v(check(a)), &tb = v(check(b));
  if (!ta.same_shape(tb)) dim_error("sub", ta, tb);
  Tensor out = ta;
  for (int i = 0; i < out.size(); ++i) out[i] -= tb[i];
  const int ai = a.id, bi = b.id, oi = size();
  return push(std::move(out), [ai, bi, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    Tensor &ga = t.g(ai), &gb = t.g(bi);
    for (int i = 0; i < go.size(); ++i) {
      ga[i] += go[i];
      gb[i] -= go[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor &ta = v(check(a)), &tb = v(check(b));
  if (!ta.same_shape(tb)) dim_error("mul", ta, tb);
  Tensor out = ta;
  for (int i = 0; i < out.size(); ++i) out[i] *= tb[i];
  const int ai = a.id, bi = b.id, oi = size();
  return push(std::move(out), [ai, bi, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    const Tensor &va = t.v(ai), &vb = t.v(bi);
    Tensor &ga = t.g(ai), &gb = t.g(bi);
    for (int i = 0; i < go.size(); ++i) {
      ga[i] += go[i] * vb[i];
      gb[i] += go[i] * va[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  Tensor out = v(check(a));
  for (double& x : out.values) x *= c;
  const int ai = a.id, oi = size();
  return push(std::move(out), [ai, oi, c](Tape& t) {
    const Tensor& go = t.g(oi);
    Tensor& ga = t.g(ai);
    for (int i = 0; i < go.size(); ++i) ga[i] += c * go[i];
  });
}

Var Tape::add_scalar(Var a, double c) {
  Tensor out = v(check(a));
  for (double& x : out.values) x += c;
  const int ai = a.id, oi = size();
  return push(std::move(out), [ai, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    Tensor& ga = t.g(ai);
    for (int i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

Var Tape::tanh_(Var a) {
  Tensor out = v(check(a));
  for (double& x : out.values) x = std::tanh(x);
  const int ai = a.id, oi = size();
  return push(std::move(out), [ai, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    const Tensor& y = t.v(oi);
    Tensor& ga = t.g(ai);
    for (int i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - y[i] * y[i]);
  });
}

Var Tape::exp_(Var a) {
  Tensor out = v(check(a));
  for (double& x : out.values) x = std::exp(x);
  const int ai = a.id, oi = size();
  return push(std::move(out), [ai, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    const Tensor& y = t.v(oi);
    Tensor& ga = t.g(ai);
    for (int i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
  });
}

Var Tape::softplus(Var a) {
  Tensor out = v(check(a));
  for (double& x : out.values) x = kern::softplus(x);
  const int ai = a.id, oi = size();
  return push(std::move(out), [ai, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    const Tensor& x = t.v(ai);
    Tensor& ga = t.g(ai);
    for (int i = 0; i < go.size(); ++i) {
      const double xi = x[i];
      const double sig = xi >= 0.0 ? 1.0 / (1.0 + std::exp(-xi))
                                   : std::exp(xi) / (1.0 + std::exp(xi));
      ga[i] += go[i] * sig;
    }
  });
}

Var Tape::clamp(Var a, double lo, double hi) {
  Tensor out = v(check(a));
  for (double& x : out.values) x = std::fmin(std::fmax(x, lo), hi);
  const int ai = a.id, oi = size();
  return push(std::move(out), [ai, oi, lo, hi](Tape& t) {
    const Tensor& go = t.g(oi);
    const Tensor& x = t.v(ai);
    Tensor& ga = t.g(ai);
    for (int i = 0; i < go.size(); ++i)
      if (x[i] > lo && x[i] < hi) ga[i] += go[i];
  });
}

Var Tape::matmul(Var a, Var b) {
  const Tensor &ta = v(check(a)), &tb = v(check(b));
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0])
    dim_error("matmul", ta, tb);
  Tensor out = Tensor::zeros({ta.shape[0], tb.shape[1]});
  map(out).noalias() = cmap(ta) * cmap(tb);
  const int ai = a.id, bi = b.id, oi = size();
  return push(std::move(out), [ai, bi, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    map(t.g(ai)).noalias() += cmap(go) * cmap(t.v(bi)).transpose();
    map(t.g(bi)).noalias() += cmap(t.v(ai)).transpose() * cmap(go);
  });
}

Var Tape::matvec(Var a, Var x) {
  const Tensor &ta = v(check(a)), &tx = v(check(x));
  if (ta.rank() != 2 || tx.rank() != 1 || ta.shape[1] != tx.shape[0])
    dim_error("matvec", ta, tx);
  Tensor out = Tensor::zeros({ta.shape[0]});
  mvec(out).noalias() = cmap(ta) * cvec(tx);
  const int ai = a.id, xi = x.id, oi = size();
  return push(std::move(out), [ai, xi, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    map(t.g(ai)).noalias() += cvec(go) * cvec(t.v(xi)).transpose();
    mvec(t.g(xi)).noalias() += cmap(t.v(ai)).transpose() * cvec(go);
  });
}

Var Tape::vecmat(Var x, Var a) {
  const Tensor &tx = v(check(x)), &ta = v(check(a));
  if (tx.rank() != 1 || ta.rank() != 2 || tx.shape[0] != ta.shape[0])
    dim_error("vecmat", tx, ta);
  Tensor out = Tensor::zeros({ta.shape[1]});
  mvec(out).noalias() = cmap(ta).transpose() * cvec(tx);
  const int xi = x.id, ai = a.id, oi = size();
  return push(std::move(out), [xi, ai, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    mvec(t.g(xi)).noalias() += cmap(t.v(ai)) * cvec(go);
    map(t.g(ai)).noalias() += cvec(t.v(xi)) * cvec(go).transpose();
  });
}

Var Tape::add_rowvec(Var m, Var vv) {
  const Tensor &tm = v(check(m)), &tv = v(check(vv));
  if (tm.rank() != 2 || tv.rank() != 1 || tm.shape[1] != tv.shape[0])
    dim_error("add_rowvec", tm, tv);
  Tensor out = tm;
  for (int r = 0; r < tm.shape[0]; ++r)
    for (int c = 0; c < tm.shape[1]; ++c) out.at(r, c) += tv[c];
  const int mi = m.id, vi = vv.id, oi = size();
  return push(std::move(out), [mi, vi, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    Tensor &gm = t.g(mi), &gv = t.g(vi);
    for (int r = 0; r < go.shape[0]; ++r)
      for (int c = 0; c < go.shape[1]; ++c) {
        gm.at(r, c) += go.at(r, c);
        gv[c] += go.at(r, c);
      }
  });
}

Var Tape::sub_rowvec(Var m, Var vv) {
  const Tensor &tm = v(check(m)), &tv = v(check(vv));
  if (tm.rank() != 2 || tv.rank() != 1 || tm.shape[1] != tv.shape[0])
    dim_error("sub_rowvec", tm, tv);
  Tensor out = tm;
  for (int r = 0; r < tm.shape[0]; ++r)
    for (int c = 0; c < tm.shape[1]; ++c) out.at(r, c) -= tv[c];
  const int mi = m.id, vi = vv.id, oi = size();
  return push(std::move(out), [mi, vi, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    Tensor &gm = t.g(mi), &gv = t.g(vi);
    for (int r = 0; r < go.shape[0]; ++r)
      for (int c = 0; c < go.shape[1]; ++c) {
        gm.at(r, c) += go.at(r, c);
        gv[c] -= go.at(r, c);
      }
  });
}

Var Tape::mul_scalar(Var a, Var s) {
  const Tensor &ta = v(check(a)), &ts = v(check(s));
  if (ts.size() != 1) throw ContractError("mul_scalar: s must be shape {1}");
  Tensor out = ta;
  for (double& x : out.values) x *= ts[0];
  const int ai = a.id, si = s.id, oi = size();
  return push(std::move(out), [ai, si, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    const Tensor& va = t.v(ai);
    const double sv = t.v(si)[0];
    Tensor& ga = t.g(ai);
    double acc = 0.0;
    for (int i = 0; i < go.size(); ++i) {
      ga[i] += go[i] * sv;
      acc += go[i] * va[i];
    }
    t.g(si)[0] += acc;
  });
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor &ta = v(check(a)), &tb = v(check(b));
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[0] != tb.shape[0])
    dim_error("concat_cols", ta, tb);
  const int n = ta.shape[0], c1 = ta.shape[1], c2 = tb.shape[1];
  Tensor out = Tensor::zeros({n, c1 + c2});
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < c1; ++c) out.at(r, c) = ta.at(r, c);
    for (int c = 0; c < c2; ++c) out.at(r, c1 + c) = tb.at(r, c);
  }
  const int ai = a.id, bi = b.id, oi = size();
  return push(std::move(out), [ai, bi, oi, c1, c2](Tape& t) {
    const Tensor& go = t.g(oi);
    Tensor &ga = t.g(ai), &gb = t.g(bi);
    for (int r = 0; r < go.shape[0]; ++r) {
      for (int c = 0; c < c1; ++c) ga.at(r, c) += go.at(r, c);
      for (int c = 0; c < c2; ++c) gb.at(r, c) += go.at(r, c1 + c);
    }
  });
}

Var Tape::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ContractError("stack_rows: no rows");
  const int d = v(check(rows[0])).size();
  Tensor out = Tensor::zeros({int(rows.size()), d});
  std::vector<int> ids;
  ids.reserve(rows.size());
  for (size_t r = 0; r < rows.size(); ++r) {
    const Tensor& tr = v(check(rows[r]));
    if (tr.rank() != 1 || tr.size() != d)
      throw DimensionError("stack_rows: rows must be equal-length vectors");
    for (int c = 0; c < d; ++c) out.at(int(r), c) = tr[c];
    ids.push_back(rows[r].id);
  }
  const int oi = size();
  return push(std::move(out), [ids = std::move(ids), oi, d](Tape& t) {
    const Tensor& go = t.g(oi);
    for (size_t r = 0; r < ids.size(); ++r) {
      Tensor& gr = t.g(ids[r]);
      for (int c = 0; c < d; ++c) gr[c] += go.at(int(r), c);
    }
  });
}

Var Tape::slice_row(Var m, int row) {
  const Tensor& tm = v(check(m));
  if (tm.rank() != 2 || row < 0 || row >= tm.shape[0])
    throw DimensionError("slice_row: bad row " + std::to_string(row) +
                         " for " + tm.shape_str());
  const int d = tm.shape[1];
  Tensor out = Tensor::zeros({d});
  for (int c = 0; c < d; ++c) out[c] = tm.at(row, c);
  const int mi = m.id, oi = size();
  return push(std::move(out), [mi, oi, row, d](Tape& t) {
    const Tensor& go = t.g(oi);
    Tensor& gm = t.g(mi);
    for (int c = 0; c < d; ++c) gm.at(row, c) += go[c];
  });
}

Var Tape::slice_cols(Var m, int start, int len) {
  const Tensor& tm = v(check(m));
  if (tm.rank() != 2 || start < 0 || len < 0 || start + len > tm.shape[1])
    throw DimensionError("slice_cols: bad range for " + tm.shape_str());
  const int n = tm.shape[0];
  Tensor out = Tensor::zeros({n, len});
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < len; ++c) out.at(r, c) = tm.at(r, start + c);
  const int mi = m.id, oi = size();
  return push(std::move(out), [mi, oi, start, len](Tape& t) {
    const Tensor& go = t.g(oi);
    Tensor& gm = t.g(mi);
    for (int r = 0; r < go.shape[0]; ++r)
      for (int c = 0; c < len; ++c) gm.at(r, start + c) += go.at(r, c);
  });
}

Var Tape::subvec(Var vv, int start, int len) {
  const Tensor& tv = v(check(vv));
  if (tv.rank() != 1 || start < 0 || len < 0 || start + len > tv.shape[0])
    throw DimensionError("subvec: bad range for " + tv.shape_str());
  Tensor out = Tensor::zeros({len});
  for (int i = 0; i < len; ++i) out[i] = tv[start + i];
  const int vi = vv.id, oi = size();
  return push(std::move(out), [vi, oi, start, len](Tape& t) {
    const Tensor& go = t.g(oi);
    Tensor& gv = t.g(vi);
    for (int i = 0; i < len; ++i) gv[start + i] += go[i];
  });
}

Var Tape::sum(Var a) {
  const Tensor& ta = v(check(a));
  double acc = 0.0;
  for (double x : ta.values) acc += x;
  const int ai = a.id, oi = size();
  return push(Tensor::scalar(acc), [ai, oi](Tape& t) {
    const double go = t.g(oi)[0];
    Tensor& ga = t.g(ai);
    for (int i = 0; i < ga.size(); ++i) ga[i] += go;
  });
}

Var Tape::rodrigues(Var omega) {
  const Tensor& tw = v(check(omega));
  if (tw.rank() != 1 || tw.size() != 3)
    throw DimensionError("rodrigues: expected a 3-vector, got " +
                         tw.shape_str());
  Tensor out = Tensor::zeros({3, 3});
  kern::rodrigues(tw.values.data(), out.values.data());
  const int wi = omega.id, oi = size();
  return push(std::move(out), [wi, oi](Tape& t) {
    kern::rodrigues_backward(t.v(wi).values.data(), t.v(oi).values.data(),
                             t.g(oi).values.data(), t.g(wi).values.data());
  });
}

Var Tape::rot_compose(Var a, Var b) {
  const Tensor &ta = v(check(a)), &tb = v(check(b));
  if (ta.rank() != 2 || ta.shape[0] != 3 || ta.shape[1] != 3 ||
      !tb.same_shape(ta))
    dim_error("rot_compose", ta, tb);
  Tensor out = Tensor::zeros({3, 3});
  kern::mat3mul(ta.values.data(), tb.values.data(), out.values.data());
  const int ai = a.id, bi = b.id, oi = size();
  return push(std::move(out), [ai, bi, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    map(t.g(ai)).noalias() += cmap(go) * cmap(t.v(bi)).transpose();
    map(t.g(bi)).noalias() += cmap(t.v(ai)).transpose() * cmap(go);
  });
}

Var Tape::rot_apply(Var r, Var x) {
  const Tensor &tr = v(check(r)), &tx = v(check(x));
  if (tr.rank() != 2 || tr.shape[0] != 3 || tr.shape[1] != 3 ||
      tx.rank() != 1 || tx.size() != 3)
    dim_error("rot_apply", tr, tx);
  Tensor out = Tensor::zeros({3});
  kern::mat3vec(tr.values.data(), tx.values.data(), out.values.data());
  const int ri = r.id, xi = x.id, oi = size();
  return push(std::move(out), [ri, xi, oi](Tape& t) {
    const Tensor& go = t.g(oi);
    map(t.g(ri)).noalias() += cvec(go) * cvec(t.v(xi)).transpose();
    mvec(t.g(xi)).noalias() += cmap(t.v(ri)).transpose() * cvec(go);
  });
}

}  // namespace dapa
