#pragma once

#include <vector>

#include "moexda/autograd.hpp"

namespace moexda {

struct LossWeights {
  double alpha_edge = 1.0;
  double alpha_rgb = 0.5;

  void validate() const {
    if (!(alpha_edge >= 0.0) || !(alpha_rgb >= 0.0)) {
      throw ConfigError("loss weights: alphas must be >= 0");
    }
    if (alpha_edge == 0.0 && alpha_rgb == 0.0) {
      throw ConfigError("loss weights: alpha_edge and alpha_rgb must not both be zero");
    }
  }
};

struct LossBreakdown {
  double total = 0.0;
  double rgb = 0.0;
  double edge = 0.0;
};

// total = alpha_edge * CE(edge) + alpha_rgb * CE(rgb). A term with weight
// exactly 0 is left out of the graph entirely, so the other stream's
// parameters see gradients of exactly zero rather than rounded ones.
inline ag::Var total_loss(const ag::Var& logits_rgb, const ag::Var& logits_edge,
                             const std::vector<int>& labels, const LossWeights& w,
                             LossBreakdown* breakdown = nullptr) {
  ag::Var ce_rgb = ag::cross_entropy_mean(logits_rgb, labels);
  ag::Var ce_edge = ag::cross_entropy_mean(logits_edge, labels);
  ag::Var total;
  if (w.alpha_edge != 0.0 && w.alpha_rgb != 0.0) {
    total = ag::add(ag::scale(ce_edge, w.alpha_edge), ag::scale(ce_rgb, w.alpha_rgb));
  } else if (w.alpha_edge != 0.0) {
    total = ag::scale(ce_edge, w.alpha_edge);
  } else if (w.alpha_rgb != 0.0) {
    total = ag::scale(ce_rgb, w.alpha_rgb);
  } else {
    total = ag::constant(Tensor::scalar(0.0));
  }
  if (breakdown) {
    breakdown->rgb = ce_rgb.value().item();
    breakdown->edge = ce_edge.value().item();
    breakdown->total = total.value().item();
  }
  return total;
}

}  // namespace moexda
