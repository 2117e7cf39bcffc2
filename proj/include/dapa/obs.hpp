#pragma once

#include "dapa/common.hpp"
#include "dapa/tensor.hpp"

namespace dapa {

// Network input. Keypoint modality stores K triplets (x, y, confidence)
// interleaved, coordinates normalized to [-1, 1]; a dropped keypoint is
// (0, 0, 0). Silhouette modality stores a binary 64x64 raster, row-major,
// covering the same [-1, 1]^2 window.
struct Observation {
  enum class Modality { keypoints2d, silhouette };
  static constexpr int kRasterSide = 64;

  Modality modality = Modality::keypoints2d;
  Tensor values{{0}, {}};

  int dim() const { return values.size(); }

  int keypoint_count() const {
    if (modality != Modality::keypoints2d)
      throw ContractError("keypoint_count: observation is not keypoints");
    return values.size() / 3;
  }

  static Observation from_keypoints(const Tensor& kp2d, const Tensor& conf) {
    if (kp2d.rank() != 2 || kp2d.cols() != 2)
      throw DimensionError("from_keypoints: kp2d must be {K,2}, got " +
                           kp2d.shape_str());
    if (conf.rank() != 1 || conf.size() != kp2d.rows())
      throw DimensionError("from_keypoints: conf must be {K}");
    Observation obs;
    obs.modality = Modality::keypoints2d;
    obs.values = Tensor::zeros({kp2d.rows() * 3});
    for (int k = 0; k < kp2d.rows(); ++k) {
      obs.values[3 * k] = kp2d.at(k, 0);
      obs.values[3 * k + 1] = kp2d.at(k, 1);
      obs.values[3 * k + 2] = conf[k];
    }
    obs.validate();
    return obs;
  }

  Tensor keypoints() const {
    const int k = keypoint_count();
    Tensor out = Tensor::zeros({k, 2});
    for (int i = 0; i < k; ++i) {
      out.at(i, 0) = values[3 * i];
      out.at(i, 1) = values[3 * i + 1];
    }
    return out;
  }

  Tensor confidences() const {
    const int k = keypoint_count();
    Tensor out = Tensor::zeros({k});
    for (int i = 0; i < k; ++i) out[i] = values[3 * i + 2];
    return out;
  }

  void validate() const {
    if (!all_finite(values.values))
      throw NumericalError("observation contains non-finite values");
    if (modality == Modality::keypoints2d) {
      if (values.size() % 3 != 0)
        throw DimensionError("keypoint observation length must be 3K");
      for (int i = 0; i < values.size() / 3; ++i) {
        const double c = values[3 * i + 2];
        if (c < 0.0 || c > 1.0)
          throw ContractError("keypoint confidence outside [0,1]");
      }
    } else {
      if (values.size() != kRasterSide * kRasterSide)
        throw DimensionError("silhouette observation must be 64x64");
      for (double v : values.values)
        if (v != 0.0 && v != 1.0)
          throw ContractError("silhouette raster must be binary");
    }
  }
};

}  // namespace dapa
