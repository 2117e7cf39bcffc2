#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dapa/rng.hpp"
#include "dapa/tape.hpp"

namespace dapa {

enum class Activation { identity, tanh };

// Fully connected stack. Weight matrices are stored (in, out) so a batched
// forward is a plain matmul of (batch, in) rows.
struct MLPParams {
  struct Layer {
    Tensor weight;  // (in, out)
    Tensor bias;    // (out)
    Activation act = Activation::identity;
  };
  std::vector<Layer> layers;

  // Hidden layers tanh, final layer identity. Xavier-uniform init.
  static MLPParams make(const std::vector<int>& dims, Rng& rng);

  int input_dim() const { return layers.front().weight.shape[0]; }
  int output_dim() const { return layers.back().weight.shape[1]; }
  void validate() const;

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

// Tape leaves for one step's MLP evaluation; gradients are read back from
// these after backward().
struct MLPVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

MLPVars make_leaves(Tape& tape, const MLPParams& params);

// x may be a vector (one sample) or a matrix of row samples.
Var forward_mlp(Tape& tape, const MLPVars& vars, const MLPParams& params,
                Var x);
Tensor forward_mlp(const MLPParams& params, const Tensor& x);

// Gradients of one MLP's leaves after backward(), flattened in tensors()
// order (weight, bias per layer).
void append_grads(const Tape& tape, const MLPVars& vars,
                  std::vector<double>& out);

// ---- optimizer ----

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<double> m;  // first moment, flat
  std::vector<double> v;  // second moment, flat

  static AdamState make(double lr, int param_count);
};

// Bias-corrected Adam update in place. Returns false (and leaves params and
// moments untouched) when any gradient is non-finite.
bool adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads);

// ---- flat parameter views ----

int total_size(const std::vector<Tensor*>& params);
std::vector<double> flatten(const std::vector<const Tensor*>& params);
std::vector<double> flatten(const std::vector<Tensor*>& params);
void unflatten(std::span<const double> flat, std::vector<Tensor*>& params);

// ---- gradient checking ----

struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_err = 0.0;
    int checked = 0;
  };
  std::vector<Entry> per_param;
  double max_rel_err = 0.0;
  bool passed(double tol) const { return max_rel_err <= tol; }
};

// f(grads): evaluates the objective at the current parameter values; when
// grads != nullptr it must also fill one gradient tensor per parameter.
// Central differences with step h; when max_coords_per_tensor > 0 only a
// seeded random subset of each tensor's coordinates is probed.
// Relative error uses |a - b| / (|a| + |b| + 1e-3), whose floor absorbs
// finite-difference noise on near-zero gradients.
using CheckedFn = std::function<double(std::vector<Tensor>* grads)>;
GradCheckReport grad_check(const CheckedFn& f, std::vector<Tensor*> params,
                           std::vector<std::string> names = {},
                           double h = 1e-5, int max_coords_per_tensor = 0,
                           std::uint64_t probe_seed = 0);

}  // namespace dapa
