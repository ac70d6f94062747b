#pragma once

#include <string>
#include <utility>
#include <vector>

#include "moexda/gradcheck.hpp"
#include "moexda/loss.hpp"
#include "moexda/moments.hpp"
#include "moexda/vit.hpp"

namespace moexda {

struct GradcheckCase {
  std::string name;
  double max_rel = 0.0;
  double tol = 0.0;
  std::int64_t checked = 0;
  std::string worst;
  bool passed() const { return max_rel < tol; }
};

namespace detail {

// Reference objective for the exchange module. Recomputes the receiver's own
// moments from the current inputs; under stop_gradient the donated moments
// stay frozen at the values captured before perturbation, matching what the
// detached graph differentiates.
inline double moex_reference_loss(const Tensor& h_rgb, const Tensor& h_edge, const MoexSettings& cfg,
                                  const Moments& donor_rgb, const Moments& donor_edge,
                                  const Tensor& w_rgb, const Tensor& w_edge) {
  const Moments m_rgb = compute_moments(h_rgb, cfg.mode, cfg.eps);
  const Moments m_edge = compute_moments(h_edge, cfg.mode, cfg.eps);
  const Moments& d_rgb = cfg.stop_gradient ? donor_rgb : m_rgb;
  const Moments& d_edge = cfg.stop_gradient ? donor_edge : m_edge;
  Tensor out_rgb = h_rgb;
  Tensor out_edge = h_edge;
  switch (cfg.direction) {
    case Direction::kEdgeToRgb:
      out_edge = exchange_moments(h_edge, m_edge, d_rgb);
      break;
    case Direction::kRgbToEdge:
      out_rgb = exchange_moments(h_rgb, m_rgb, d_edge);
      break;
    case Direction::kBidirection:
      out_rgb = exchange_moments(h_rgb, m_rgb, d_edge);
      out_edge = exchange_moments(h_edge, m_edge, d_rgb);
      break;
  }
  return sum_all(mul(out_rgb, w_rgb)) + sum_all(mul(out_edge, w_edge));
}

}  // namespace detail

// Finite-difference check of moexda_forward gradients w.r.t. both input
// token tensors, over all mode x direction x stop_gradient combinations.
inline std::vector<GradcheckCase> run_moex_gradchecks(double step = 1e-4, double tol = 1e-4,
                                                      std::uint64_t seed = 20240501) {
  std::vector<GradcheckCase> cases;
  Rng rng(seed);
  const Shape s{1, 2, 5, 4};
  for (NormKind mode : {NormKind::kPono, NormKind::kIn}) {
    for (Direction dir : {Direction::kEdgeToRgb, Direction::kRgbToEdge, Direction::kBidirection}) {
      for (bool sg : {false, true}) {
        MoexSettings cfg;
        cfg.mode = mode;
        cfg.direction = dir;
        cfg.stop_gradient = sg;

        Tensor tr(s), te(s), wr(s), we(s);
        for (std::int64_t i = 0; i < tr.size(); ++i) tr[i] = rng.uniform(-1.5, 1.5);
        for (std::int64_t i = 0; i < te.size(); ++i) te[i] = rng.uniform(-1.5, 1.5);
        for (std::int64_t i = 0; i < wr.size(); ++i) wr[i] = rng.uniform(-1.0, 1.0);
        for (std::int64_t i = 0; i < we.size(); ++i) we[i] = rng.uniform(-1.0, 1.0);

        ag::Var h_rgb = ag::parameter(tr);
        ag::Var h_edge = ag::parameter(te);
        const Moments donor_rgb = compute_moments(tr, mode, cfg.eps);
        const Moments donor_edge = compute_moments(te, mode, cfg.eps);

        auto [out_rgb, out_edge] = moexda_forward_var(h_rgb, h_edge, cfg);
        ag::Var loss = ag::add(ag::sum_all(ag::mul(out_rgb, ag::constant(wr))),
                               ag::sum_all(ag::mul(out_edge, ag::constant(we))));
        ag::backward(loss);

        auto loss_fn = [&]() {
          return detail::moex_reference_loss(h_rgb.value(), h_edge.value(), cfg, donor_rgb,
                                             donor_edge, wr, we);
        };
        const FdCheckResult res = fd_check({{"h_rgb", h_rgb}, {"h_edge", h_edge}}, loss_fn, step);

        GradcheckCase c;
        c.name = "moex " + to_string(mode) + " " + to_string(dir) + (sg ? " sg" : " nosg");
        c.max_rel = res.max_rel;
        c.tol = tol;
        c.checked = res.checked;
        c.worst = res.worst_name + "[" + std::to_string(res.worst_index) + "]";
        cases.push_back(std::move(c));
      }
    }
  }
  return cases;
}

// Finite-difference check of the full two-stream model (tiny dims, two
// blocks) through the combined loss, probing a random subset of coordinates
// in every parameter tensor. Exchange configs are limited to stop_gradient
// off, where re-running the forward pass is the exact reference.
inline std::vector<GradcheckCase> run_e2e_gradchecks(double step = 1e-4, double tol = 1e-3,
                                                     std::int64_t entries_per_param = 6,
                                                     std::uint64_t seed = 20240502) {
  std::vector<GradcheckCase> cases;

  struct Setup {
    std::string name;
    std::vector<int> layers;
    NormKind mode;
    Direction dir;
  };
  const std::vector<Setup> setups = {
      {"e2e no-exchange", {}, NormKind::kPono, Direction::kEdgeToRgb},
      {"e2e pono bidirection", {1}, NormKind::kPono, Direction::kBidirection},
      {"e2e in edge_to_rgb", {1, 2}, NormKind::kIn, Direction::kEdgeToRgb},
  };

  for (const Setup& setup : setups) {
    ModelConfig mc;
    mc.vit.image_size = 8;
    mc.vit.patch_size = 4;
    mc.vit.hidden_dim = 8;
    mc.vit.num_heads = 2;
    mc.vit.num_layers = 2;
    mc.vit.mlp_dim = 16;
    mc.vit.num_classes = 3;
    mc.moex.mode = setup.mode;
    mc.moex.direction = setup.dir;
    mc.moex.stop_gradient = false;
    mc.moex_layers = setup.layers;

    TwoStreamModel model(mc);
    Rng rng(seed);
    model.init_params(rng);

    Tensor clip_rgb(Shape{1, 2, 3, 8, 8});
    Tensor clip_edge(Shape{1, 2, 1, 8, 8});
    for (std::int64_t i = 0; i < clip_rgb.size(); ++i) clip_rgb[i] = rng.uniform(-1.0, 1.0);
    for (std::int64_t i = 0; i < clip_edge.size(); ++i) clip_edge[i] = rng.uniform(-1.0, 1.0);
    const std::vector<int> labels{1};
    const LossWeights weights;

    auto params = model.named_params();
    for (auto& [name, v] : params) v.zero_grad();
    auto logits = model.forward(clip_rgb, clip_edge);
    ag::Var loss = total_loss(logits.rgb, logits.edge, labels, weights);
    ag::backward(loss);

    auto loss_fn = [&]() {
      auto lg = model.forward(clip_rgb, clip_edge);
      return total_loss(lg.rgb, lg.edge, labels, weights).value().item();
    };
    Rng probe = rng.fork(99);
    const FdCheckResult res = fd_check(params, loss_fn, step, entries_per_param, &probe);

    GradcheckCase c;
    c.name = setup.name;
    c.max_rel = res.max_rel;
    c.tol = tol;
    c.checked = res.checked;
    c.worst = res.worst_name + "[" + std::to_string(res.worst_index) + "]";
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace moexda
