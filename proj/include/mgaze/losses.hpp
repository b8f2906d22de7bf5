#pragma once

#include "mgaze/tensor.hpp"

namespace mgaze {

struct LossBreakdown {
  double l_gaze = 0.0;
  double l_align_clean = 0.0;
  double l_align_noisy = 0.0;
  double l_total = 0.0;
  double lambda = 0.0;
};

// Mean of |pred - labels| over every pitch/yaw entry.
Tensor gaze_loss(const Tensor& pred, const Tensor& labels);

// Mean |A_g - A_m| over the off-diagonal entries of two B_C x B_C affinities.
Tensor clean_align_loss(const Tensor& label_affinity, const Tensor& manifold_affinity);

// -(1/B_N) sum_i cos(A_f[i,:], A_m[i,:]). When detach_target is set the
// manifold rows are a constant target and receive no gradient.
Tensor noisy_align_loss(const Tensor& feature_affinity, const Tensor& manifold_cross_affinity,
                        bool detach_target = true);

// L_gaze + L_align^C + lambda * L_align^N.
Tensor total_loss(const Tensor& l_gaze, const Tensor& l_align_clean, const Tensor& l_align_noisy,
                  double lambda);

LossBreakdown breakdown(const Tensor& l_gaze, const Tensor& l_align_clean,
                        const Tensor& l_align_noisy, const Tensor& l_total, double lambda);

}  // namespace mgaze
