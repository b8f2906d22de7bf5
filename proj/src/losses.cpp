#include "mgaze/losses.hpp"

#include <string>

#include "mgaze/errors.hpp"

namespace mgaze {

Tensor gaze_loss(const Tensor& pred, const Tensor& labels) {
  if (pred.shape() != labels.shape()) throw ShapeError("gaze_loss: prediction and label shapes differ");
  return mean_all(abs(subtract(pred, labels)));
}

Tensor clean_align_loss(const Tensor& label_affinity, const Tensor& manifold_affinity) {
  if (label_affinity.rank() != 2 || label_affinity.shape() != manifold_affinity.shape() ||
      label_affinity.rows() != label_affinity.cols()) {
    throw ShapeError("clean_align_loss: affinities must be square with equal shapes");
  }
  const std::size_t b = label_affinity.rows();
  if (b < 2) throw InvalidArgument("clean_align_loss: need a clean batch of at least 2");
  std::vector<double> mask(b * b, 1.0);
  for (std::size_t i = 0; i < b; ++i) mask[i * b + i] = 0.0;
  const Tensor off_diagonal = Tensor::matrix(b, b, std::move(mask));
  const Tensor diff = abs(multiply(subtract(label_affinity, manifold_affinity), off_diagonal));
  // mean over B^2 entries, rescaled to the B(B-1) off-diagonal count
  return scale(mean_all(diff), static_cast<double>(b) / static_cast<double>(b - 1));
}

Tensor noisy_align_loss(const Tensor& feature_affinity, const Tensor& manifold_cross_affinity,
                        bool detach_target) {
  if (feature_affinity.rank() != 2 || feature_affinity.shape() != manifold_cross_affinity.shape()) {
    throw ShapeError("noisy_align_loss: affinities must have equal shapes");
  }
  const Tensor target = detach_target ? detach(manifold_cross_affinity) : manifold_cross_affinity;
  const Tensor a = row_l2_normalize(feature_affinity);
  const Tensor m = row_l2_normalize(target);
  const double width = static_cast<double>(feature_affinity.cols());
  // row_mean * width is the row dot product of the two unit rows
  return scale(mean_all(row_mean(multiply(a, m))), -width);
}

Tensor total_loss(const Tensor& l_gaze, const Tensor& l_align_clean, const Tensor& l_align_noisy,
                  double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  return add(add(l_gaze, l_align_clean), scale(l_align_noisy, lambda));
}

LossBreakdown breakdown(const Tensor& l_gaze, const Tensor& l_align_clean,
                        const Tensor& l_align_noisy, const Tensor& l_total, double lambda) {
  return {l_gaze.item(), l_align_clean.item(), l_align_noisy.item(), l_total.item(), lambda};
}

}  // namespace mgaze
