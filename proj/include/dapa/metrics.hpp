#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dapa/tensor.hpp"

namespace dapa::metrics {

// Distances are meters internally; reports use the millimeter convention.
struct EvalReport {
  double mpjpe = 0.0;
  double pa_mpjpe = 0.0;
  double vertex_err = 0.0;
  double pa_vertex_err = 0.0;
  std::map<double, double> pck;  // alpha -> mean fraction
  int samples = 0;
  void validate() const;
};

// Mean joint distance after translating both sets so the root joint sits at
// the origin.
double mpjpe(const Tensor& pred, const Tensor& gt, int root = 0);

struct Similarity {
  double scale = 1.0;
  Tensor rotation = Tensor::zeros({3, 3});
  Tensor translation = Tensor::zeros({3});
  bool degenerate = false;  // rank-deficient input, best-effort fit
};

// Optimal similarity transform (Umeyama) taking pred onto gt. The rotation
// is always proper; mirrored inputs get the closest non-reflecting fit.
std::pair<Tensor, Similarity> procrustes_align(const Tensor& pred,
                                               const Tensor& gt);

// Mean point distance after Procrustes alignment.
double pa_error(const Tensor& pred, const Tensor& gt);

double torso_length(const Tensor& gt_joints, int pelvis, int neck);

// Fraction of visible keypoints within alpha * torso_len of the target,
// threshold inclusive. No visible keypoints -> nullopt (excluded upstream).
std::optional<double> pck(const Tensor& pred2d, const Tensor& gt2d,
                          double alpha, double torso_len,
                          const std::vector<int>& visibility);

struct PckSample {
  Tensor pred2d;  // {K,2}
  Tensor gt2d;    // {K,2}
  std::vector<int> visibility;
  double torso_len = 0.0;
};

struct PckCurve {
  std::vector<double> alphas;
  std::vector<double> overall;
  std::map<std::string, std::vector<double>> groups;
};

PckCurve pck_curve(const std::vector<PckSample>& samples,
                   const std::vector<double>& alphas,
                   const std::map<std::string, std::vector<int>>& groups = {});

// (mpjpe/f1, mve/f1): detection-quality normalization with external F1.
std::pair<double, double> normalized_metrics(double mpjpe_val, double mve,
                                             double f1);

// Per-sample accumulation of joint and vertex errors, averaged on report().
class EvalAccumulator {
 public:
  void add_joints(const Tensor& pred, const Tensor& gt, int root = 0);
  void add_vertices(const Tensor& pred, const Tensor& gt);
  EvalReport report() const;  // millimeters

 private:
  double sum_mpjpe_ = 0.0, sum_pa_ = 0.0;
  double sum_ve_ = 0.0, sum_pa_ve_ = 0.0;
  int joints_n_ = 0, verts_n_ = 0;
};

void write_report_csv(std::ostream& os, const EvalReport& report);
void write_pck_csv(std::ostream& os, const PckCurve& curve);
void write_pck_svg(std::ostream& os, const PckCurve& curve);

}  // namespace dapa::metrics
