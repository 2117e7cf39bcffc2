#include "dapa/nn.hpp"

#include <algorithm>
#include <cmath>

namespace dapa {

MLPParams MLPParams::make(const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw ContractError("MLPParams: need at least 2 dims");
  MLPParams p;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    Layer l;
    const int in = dims[i], out = dims[i + 1];
    const double bound = std::sqrt(6.0 / double(in + out));
    l.weight = Tensor::zeros({in, out});
    for (double& w : l.weight.values) w = rng.uniform(-bound, bound);
    l.bias = Tensor::zeros({out});
    l.act = (i + 2 < dims.size()) ? Activation::tanh : Activation::identity;
    p.layers.push_back(std::move(l));
  }
  return p;
}

void MLPParams::validate() const {
  if (layers.empty()) throw ContractError("MLPParams: empty");
  for (size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (l.weight.rank() != 2 || l.bias.rank() != 1 ||
        l.bias.shape[0] != l.weight.shape[1])
      throw DimensionError("MLPParams: layer " + std::to_string(i) +
                           " weight/bias mismatch");
    if (i > 0 && layers[i - 1].weight.shape[1] != l.weight.shape[0])
      throw DimensionError("MLPParams: layers " + std::to_string(i - 1) +
                           " -> " + std::to_string(i) + " do not chain");
    if (!all_finite(l.weight.values) || !all_finite(l.bias.values))
      throw ContractError("MLPParams: non-finite parameters");
  }
}

std::vector<Tensor*> MLPParams::tensors() {
  std::vector<Tensor*> out;
  for (Layer& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor*> MLPParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const Layer& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

MLPVars make_leaves(Tape& tape, const MLPParams& params) {
  MLPVars v;
  for (const auto& l : params.layers) {
    v.weights.push_back(tape.leaf(l.weight));
    v.biases.push_back(tape.leaf(l.bias));
  }
  return v;
}

Var forward_mlp(Tape& tape, const MLPVars& vars, const MLPParams& params,
                Var x) {
  const bool batched = tape.value(x).rank() == 2;
  const int in_dim = batched ? tape.value(x).shape[1] : tape.value(x).shape[0];
  if (in_dim != params.input_dim())
    throw DimensionError("forward_mlp: input dim " + std::to_string(in_dim) +
                         " != layer dim " +
                         std::to_string(params.input_dim()));
  Var h = x;
  for (size_t i = 0; i < params.layers.size(); ++i) {
    if (batched)
      h = tape.add_rowvec(tape.matmul(h, vars.weights[i]), vars.biases[i]);
    else
      h = tape.add(tape.vecmat(h, vars.weights[i]), vars.biases[i]);
    if (params.layers[i].act == Activation::tanh) h = tape.tanh_(h);
  }
  return h;
}

Tensor forward_mlp(const MLPParams& params, const Tensor& x) {
  const bool batched = x.rank() == 2;
  const int n = batched ? x.shape[0] : 1;
  const int in_dim = batched ? x.shape[1] : x.shape[0];
  if (in_dim != params.input_dim())
    throw DimensionError("forward_mlp: input dim " + std::to_string(in_dim) +
                         " != layer dim " +
                         std::to_string(params.input_dim()));
  Tensor h = x;
  for (const auto& l : params.layers) {
    const int din = l.weight.shape[0], dout = l.weight.shape[1];
    Tensor next = Tensor::zeros(batched ? std::vector<int>{n, dout}
                                        : std::vector<int>{dout});
    for (int r = 0; r < n; ++r) {
      const double* hr = h.values.data() + size_t(r) * din;
      double* nr = next.values.data() + size_t(r) * dout;
      for (int c = 0; c < dout; ++c) nr[c] = l.bias[c];
      for (int k = 0; k < din; ++k) {
        const double hv = hr[k];
        const double* wrow = l.weight.values.data() + size_t(k) * dout;
        for (int c = 0; c < dout; ++c) nr[c] += hv * wrow[c];
      }
    }
    if (l.act == Activation::tanh)
      for (double& v : next.values) v = std::tanh(v);
    h = std::move(next);
  }
  return h;
}

void append_grads(const Tape& tape, const MLPVars& vars,
                  std::vector<double>& out) {
  for (size_t i = 0; i < vars.weights.size(); ++i) {
    const Tensor& gw = tape.grad(vars.weights[i]);
    out.insert(out.end(), gw.values.begin(), gw.values.end());
    const Tensor& gb = tape.grad(vars.biases[i]);
    out.insert(out.end(), gb.values.begin(), gb.values.end());
  }
}

AdamState AdamState::make(double lr, int param_count) {
  AdamState s;
  s.lr = lr;
  s.m.assign(size_t(param_count), 0.0);
  s.v.assign(size_t(param_count), 0.0);
  return s;
}

bool adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw DimensionError("adam_step: size mismatch");
  if (!all_finite(grads)) return false;
  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    const double gi = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * gi;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * gi * gi;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
  return true;
}

int total_size(const std::vector<Tensor*>& params) {
  int n = 0;
  for (const Tensor* t : params) n += t->size();
  return n;
}

std::vector<double> flatten(const std::vector<const Tensor*>& params) {
  std::vector<double> out;
  for (const Tensor* t : params)
    out.insert(out.end(), t->values.begin(), t->values.end());
  return out;
}

std::vector<double> flatten(const std::vector<Tensor*>& params) {
  std::vector<double> out;
  for (const Tensor* t : params)
    out.insert(out.end(), t->values.begin(), t->values.end());
  return out;
}

void unflatten(std::span<const double> flat, std::vector<Tensor*>& params) {
  size_t pos = 0;
  for (Tensor* t : params) {
    if (pos + t->values.size() > flat.size())
      throw DimensionError("unflatten: flat vector too short");
    std::copy(flat.begin() + long(pos),
              flat.begin() + long(pos + t->values.size()), t->values.begin());
    pos += t->values.size();
  }
  if (pos != flat.size())
    throw DimensionError("unflatten: flat vector too long");
}

GradCheckReport grad_check(const CheckedFn& f, std::vector<Tensor*> params,
                           std::vector<std::string> names, double h,
                           int max_coords_per_tensor,
                           std::uint64_t probe_seed) {
  std::vector<Tensor> grads;
  f(&grads);
  if (grads.size() != params.size())
    throw ContractError("grad_check: objective returned " +
                        std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");

  GradCheckReport report;
  Rng probe(probe_seed);
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    if (!grads[p].same_shape(t))
      throw DimensionError("grad_check: gradient shape mismatch for param " +
                           std::to_string(p));
    GradCheckReport::Entry entry;
    entry.name = p < names.size() ? names[p] : "param" + std::to_string(p);

    std::vector<int> coords(size_t(t.size()));
    for (int i = 0; i < t.size(); ++i) coords[size_t(i)] = i;
    if (max_coords_per_tensor > 0 && t.size() > max_coords_per_tensor) {
      for (int i = 0; i < max_coords_per_tensor; ++i) {
        const int j = i + int(probe.uniform_index(
                              std::uint64_t(t.size() - i)));
        std::swap(coords[size_t(i)], coords[size_t(j)]);
      }
      coords.resize(size_t(max_coords_per_tensor));
    }

    for (int c : coords) {
      const double saved = t[c];
      t[c] = saved + h;
      const double fp = f(nullptr);
      t[c] = saved - h;
      const double fm = f(nullptr);
      t[c] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = grads[p][c];
      const double rel = std::fabs(an - fd) /
                         (std::fabs(an) + std::fabs(fd) + 1e-3);
      entry.max_rel_err = std::fmax(entry.max_rel_err, rel);
      entry.checked += 1;
    }
    report.max_rel_err = std::fmax(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(std::move(entry));
  }
  return report;
}

}  // namespace dapa
