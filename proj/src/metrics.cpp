#include "dapa/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace dapa::metrics {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.shape[0], t.shape[1]);
  for (int r = 0; r < t.shape[0]; ++r)
    for (int c = 0; c < t.shape[1]; ++c) m(r, c) = t.at(r, c);
  return m;
}

void require_points(const char* op, const Tensor& a, const Tensor& b, int d) {
  if (a.rank() != 2 || a.shape[1] != d || !a.same_shape(b))
    throw DimensionError(std::string(op) + ": expected matching {N," +
                         std::to_string(d) + "} arrays, got " + a.shape_str() +
                         " and " + b.shape_str());
}

double mean_row_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).rowwise().norm().mean();
}

}  // namespace

void EvalReport::validate() const {
  if (mpjpe < 0 || pa_mpjpe < 0 || vertex_err < 0 || pa_vertex_err < 0)
    throw ContractError("EvalReport: negative error metric");
  if (pa_mpjpe > mpjpe + 1e-6)
    throw ContractError("EvalReport: aligned error exceeds root-aligned error");
  for (const auto& [alpha, v] : pck)
    if (v < 0.0 || v > 1.0)
      throw ContractError("EvalReport: pck outside [0,1]");
}

double mpjpe(const Tensor& pred, const Tensor& gt, int root) {
  require_points("mpjpe", pred, gt, 3);
  if (root < 0 || root >= pred.shape[0])
    throw ContractError("mpjpe: root joint out of range");
  Eigen::MatrixXd p = to_eigen(pred), g = to_eigen(gt);
  const Eigen::RowVector3d pr = p.row(root), gr = g.row(root);
  p.rowwise() -= pr;
  g.rowwise() -= gr;
  return mean_row_distance(p, g);
}

std::pair<Tensor, Similarity> procrustes_align(const Tensor& pred,
                                               const Tensor& gt) {
  require_points("procrustes_align", pred, gt, 3);
  const int n = pred.shape[0];
  if (n < 3) throw ContractError("procrustes_align: need at least 3 points");

  const Eigen::MatrixXd x = to_eigen(pred), y = to_eigen(gt);
  const Eigen::RowVector3d mx = x.colwise().mean(), my = y.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - mx, yc = y.rowwise() - my;

  const Eigen::Matrix3d cov = (yc.transpose() * xc) / double(n);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d d = svd.singularValues();

  Similarity sim;
  sim.degenerate = d(1) <= 1e-12 * std::max(1.0, d(0));

  Eigen::Vector3d s = Eigen::Vector3d::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0)
    s(2) = -1.0;  // keep the rotation proper instead of allowing a mirror
  const Eigen::Matrix3d r =
      svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();

  const double var_x = xc.rowwise().squaredNorm().mean();
  sim.scale = var_x > 1e-18 ? d.dot(s) / var_x : 1.0;
  if (!(sim.scale > 0.0)) {
    sim.scale = 1.0;  // mirror-dominant degenerate input
    sim.degenerate = true;
  }
  const Eigen::Vector3d t =
      my.transpose() - sim.scale * r * mx.transpose();

  for (int i = 0; i < 3; ++i) {
    sim.translation[i] = t(i);
    for (int j = 0; j < 3; ++j) sim.rotation.at(i, j) = r(i, j);
  }

  const Eigen::MatrixXd aligned =
      (sim.scale * (r * xc.transpose())).transpose().rowwise() + my;
  Tensor out = Tensor::zeros({n, 3});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) out.at(i, c) = aligned(i, c);
  return {std::move(out), std::move(sim)};
}

double pa_error(const Tensor& pred, const Tensor& gt) {
  const auto [aligned, sim] = procrustes_align(pred, gt);
  return mean_row_distance(to_eigen(aligned), to_eigen(gt));
}

double torso_length(const Tensor& gt_joints, int pelvis, int neck) {
  if (gt_joints.rank() != 2 || pelvis < 0 || neck < 0 ||
      pelvis >= gt_joints.shape[0] || neck >= gt_joints.shape[0])
    throw ContractError("torso_length: joint index out of range");
  double acc = 0.0;
  for (int c = 0; c < gt_joints.shape[1]; ++c) {
    const double d = gt_joints.at(pelvis, c) - gt_joints.at(neck, c);
    acc += d * d;
  }
  return std::sqrt(acc);
}

std::optional<double> pck(const Tensor& pred2d, const Tensor& gt2d,
                          double alpha, double torso_len,
                          const std::vector<int>& visibility) {
  require_points("pck", pred2d, gt2d, 2);
  if (!(torso_len > 0.0)) throw ContractError("pck: torso length must be > 0");
  if (int(visibility.size()) != pred2d.shape[0])
    throw DimensionError("pck: visibility length mismatch");
  const double thresh = alpha * torso_len;
  int visible = 0, hits = 0;
  for (int k = 0; k < pred2d.shape[0]; ++k) {
    if (!visibility[size_t(k)]) continue;
    ++visible;
    const double dx = pred2d.at(k, 0) - gt2d.at(k, 0);
    const double dy = pred2d.at(k, 1) - gt2d.at(k, 1);
    if (std::sqrt(dx * dx + dy * dy) <= thresh) ++hits;
  }
  if (visible == 0) return std::nullopt;
  return double(hits) / double(visible);
}

PckCurve pck_curve(const std::vector<PckSample>& samples,
                   const std::vector<double>& alphas,
                   const std::map<std::string, std::vector<int>>& groups) {
  for (size_t i = 1; i < alphas.size(); ++i)
    if (alphas[i] < alphas[i - 1])
      throw ContractError("pck_curve: alphas must be sorted ascending");

  PckCurve curve;
  curve.alphas = alphas;
  auto mean_at = [&samples](double alpha,
                            const std::vector<int>* subset) -> double {
    double acc = 0.0;
    int n = 0;
    for (const PckSample& s : samples) {
      Tensor pred = s.pred2d, gt = s.gt2d;
      std::vector<int> vis = s.visibility;
      if (subset) {
        const int k = int(subset->size());
        pred = Tensor::zeros({k, 2});
        gt = Tensor::zeros({k, 2});
        vis.assign(size_t(k), 0);
        for (int i = 0; i < k; ++i) {
          const int j = (*subset)[size_t(i)];
          for (int c = 0; c < 2; ++c) {
            pred.at(i, c) = s.pred2d.at(j, c);
            gt.at(i, c) = s.gt2d.at(j, c);
          }
          vis[size_t(i)] = s.visibility[size_t(j)];
        }
      }
      const auto v = pck(pred, gt, alpha, s.torso_len, vis);
      if (v) {
        acc += *v;
        ++n;
      }
    }
    return n ? acc / double(n) : 0.0;
  };

  for (double a : alphas) curve.overall.push_back(mean_at(a, nullptr));
  for (const auto& [name, subset] : groups) {
    std::vector<double>& col = curve.groups[name];
    for (double a : alphas) col.push_back(mean_at(a, &subset));
  }
  return curve;
}

std::pair<double, double> normalized_metrics(double mpjpe_val, double mve,
                                             double f1) {
  if (!(f1 > 0.0) || f1 > 1.0)
    throw ContractError("normalized_metrics: f1 must be in (0, 1]");
  return {mpjpe_val / f1, mve / f1};
}

void EvalAccumulator::add_joints(const Tensor& pred, const Tensor& gt,
                                 int root) {
  sum_mpjpe_ += mpjpe(pred, gt, root);
  sum_pa_ += pa_error(pred, gt);
  ++joints_n_;
}

void EvalAccumulator::add_vertices(const Tensor& pred, const Tensor& gt) {
  require_points("add_vertices", pred, gt, 3);
  sum_ve_ += mean_row_distance(to_eigen(pred), to_eigen(gt));
  sum_pa_ve_ += pa_error(pred, gt);
  ++verts_n_;
}

EvalReport EvalAccumulator::report() const {
  EvalReport r;
  if (joints_n_) {
    r.mpjpe = 1000.0 * sum_mpjpe_ / joints_n_;
    r.pa_mpjpe = 1000.0 * sum_pa_ / joints_n_;
  }
  if (verts_n_) {
    r.vertex_err = 1000.0 * sum_ve_ / verts_n_;
    r.pa_vertex_err = 1000.0 * sum_pa_ve_ / verts_n_;
  }
  r.samples = joints_n_;
  r.validate();
  return r;
}

void write_report_csv(std::ostream& os, const EvalReport& report) {
  os << "metric,value\n";
  os << "mpjpe," << report.mpjpe << "\n";
  os << "pa_mpjpe," << report.pa_mpjpe << "\n";
  os << "vertex_err," << report.vertex_err << "\n";
  os << "pa_vertex_err," << report.pa_vertex_err << "\n";
  for (const auto& [alpha, v] : report.pck)
    os << "pck@" << alpha << "," << v << "\n";
  os << "samples," << report.samples << "\n";
}

void write_pck_csv(std::ostream& os, const PckCurve& curve) {
  os << "alpha,overall";
  for (const auto& [name, col] : curve.groups) os << "," << name;
  os << "\n";
  for (size_t i = 0; i < curve.alphas.size(); ++i) {
    os << curve.alphas[i] << "," << curve.overall[i];
    for (const auto& [name, col] : curve.groups) os << "," << col[i];
    os << "\n";
  }
}

void write_pck_svg(std::ostream& os, const PckCurve& curve) {
  const int w = 640, h = 480, m = 50;
  const double amin = curve.alphas.empty() ? 0.0 : curve.alphas.front();
  const double amax =
      curve.alphas.empty() ? 1.0 : std::max(curve.alphas.back(), amin + 1e-9);
  auto sx = [&](double a) {
    return m + (a - amin) / (amax - amin) * (w - 2 * m);
  };
  auto sy = [&](double v) { return h - m - v * (h - 2 * m); };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m
     << "\" y2=\"" << h - m << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\""
     << h - m << "\" stroke=\"black\"/>\n";

  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                           "#ff7f0e", "#8c564b"};
  auto polyline = [&](const std::vector<double>& col, const char* color,
                      const std::string& label, int slot) {
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (size_t i = 0; i < curve.alphas.size(); ++i)
      os << sx(curve.alphas[i]) << "," << sy(col[i]) << " ";
    os << "\"/>\n";
    // markers keep one-point series visible
    for (size_t i = 0; i < curve.alphas.size(); ++i)
      os << "<circle cx=\"" << sx(curve.alphas[i]) << "\" cy=\"" << sy(col[i])
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    os << "<text x=\"" << w - m - 150 << "\" y=\"" << m + 18 * slot
       << "\" fill=\"" << color << "\" font-size=\"13\">" << label
       << "</text>\n";
  };
  polyline(curve.overall, palette[0], "overall", 1);
  int slot = 2;
  for (const auto& [name, col] : curve.groups)
    polyline(col, palette[(slot - 1) % 6], name, slot++);
  os << "</svg>\n";
}

}  // namespace dapa::metrics
