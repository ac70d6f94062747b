#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "moexda/autograd.hpp"
#include "moexda/errors.hpp"
#include "moexda/tensor.hpp"

namespace moexda {

// Token tensors are [B x T x (N+1) x C]: batch, frames, tokens (class token
// first), channels.

enum class NormKind { kPono, kIn };
enum class Direction { kEdgeToRgb, kRgbToEdge, kBidirection };

inline std::string to_string(NormKind k) { return k == NormKind::kPono ? "pono" : "in"; }

inline std::string to_string(Direction d) {
  switch (d) {
    case Direction::kEdgeToRgb: return "edge_to_rgb";
    case Direction::kRgbToEdge: return "rgb_to_edge";
    case Direction::kBidirection: return "bidirection";
  }
  return "";
}

inline NormKind norm_kind_from_string(const std::string& s) {
  if (s == "pono") return NormKind::kPono;
  if (s == "in") return NormKind::kIn;
  throw ConfigError("unknown norm kind '" + s + "' (expected pono|in)");
}

inline Direction direction_from_string(const std::string& s) {
  if (s == "edge_to_rgb") return Direction::kEdgeToRgb;
  if (s == "rgb_to_edge") return Direction::kRgbToEdge;
  if (s == "bidirection") return Direction::kBidirection;
  throw ConfigError("unknown direction '" + s + "' (expected edge_to_rgb|rgb_to_edge|bidirection)");
}

struct MoexSettings {
  NormKind mode = NormKind::kPono;
  Direction direction = Direction::kEdgeToRgb;
  bool stop_gradient = true;
  double eps = 1e-5;
};

inline void check_token_tensor(const Shape& s) {
  if (s.size() != 4) {
    throw ShapeError("token tensor must be [BxTx(N+1)xC], got " + shape_str(s));
  }
}

// PONO reduces over channels (axis 3); IN reduces over tokens (axis 2, class
// token included).
inline int moment_axis(NormKind k) { return k == NormKind::kPono ? 3 : 2; }

inline Shape moment_shape(const Shape& h, NormKind k) {
  check_token_tensor(h);
  if (k == NormKind::kPono) return Shape{h[0], h[1], h[2]};
  return Shape{h[0], h[1], h[3]};
}

inline Shape moment_keepdim_shape(const Shape& h, NormKind k) {
  Shape s = h;
  s[static_cast<std::size_t>(moment_axis(k))] = 1;
  return s;
}

// Squeezed per-position moments: PONO [BxTx(N+1)], IN [BxTxC].
// std is sqrt(population variance + eps).
struct Moments {
  Tensor mean;
  Tensor std;
  NormKind kind = NormKind::kPono;
};

inline Moments compute_moments(const Tensor& h, NormKind kind, double eps = 1e-5) {
  check_token_tensor(h.shape());
  const int axis = moment_axis(kind);
  const Shape ks = moment_keepdim_shape(h.shape(), kind);
  Tensor mean = mean_axis(h, axis, false);
  Tensor diff = sub(h, mean.reshaped(ks));
  Tensor var = mean_axis(mul(diff, diff), axis, false);
  Tensor std = map(var, [eps](double v) { return std::sqrt(v + eps); });
  return Moments{std::move(mean), std::move(std), kind};
}

inline void check_moments_match(const Tensor& h, const Moments& own, const Moments& donor) {
  if (own.kind != donor.kind) throw ShapeError("exchange: moment kinds disagree");
  const Shape want = moment_shape(h.shape(), own.kind);
  if (own.mean.shape() != want || own.std.shape() != want || donor.mean.shape() != want ||
      donor.std.shape() != want) {
    throw ShapeError("exchange: moments do not match token tensor " + shape_str(h.shape()));
  }
}

// Re-dresses h in the donor's statistics: ((h - mu_own) / sigma_own) *
// sigma_donor + mu_donor, broadcast over the reduced axis.
inline Tensor exchange_moments(const Tensor& h, const Moments& own, const Moments& donor) {
  check_token_tensor(h.shape());
  check_moments_match(h, own, donor);
  const Shape ks = moment_keepdim_shape(h.shape(), own.kind);
  Tensor normalized = div(sub(h, own.mean.reshaped(ks)), own.std.reshaped(ks));
  return add(mul(normalized, donor.std.reshaped(ks)), donor.mean.reshaped(ks));
}

// Both streams' moments are taken from the inputs before any exchange, so
// bidirection swaps the original statistics rather than chaining them.
inline std::pair<Tensor, Tensor> moexda_forward(const Tensor& h_rgb, const Tensor& h_edge,
                                                const MoexSettings& cfg) {
  check_token_tensor(h_rgb.shape());
  if (h_rgb.shape() != h_edge.shape()) {
    throw ShapeError("moexda_forward: stream shapes disagree, " + shape_str(h_rgb.shape()) + " vs " +
                     shape_str(h_edge.shape()));
  }
  const Moments m_rgb = compute_moments(h_rgb, cfg.mode, cfg.eps);
  const Moments m_edge = compute_moments(h_edge, cfg.mode, cfg.eps);
  switch (cfg.direction) {
    case Direction::kEdgeToRgb: return {h_rgb, exchange_moments(h_edge, m_edge, m_rgb)};
    case Direction::kRgbToEdge: return {exchange_moments(h_rgb, m_rgb, m_edge), h_edge};
    case Direction::kBidirection:
      return {exchange_moments(h_rgb, m_rgb, m_edge), exchange_moments(h_edge, m_edge, m_rgb)};
  }
  throw ConfigError("moexda_forward: invalid direction");
}

// Differentiable counterparts.

struct MomentsVar {
  ag::Var mean;
  ag::Var std;
  NormKind kind = NormKind::kPono;
};

inline MomentsVar compute_moments_var(const ag::Var& h, NormKind kind, double eps = 1e-5) {
  check_token_tensor(h.shape());
  const int axis = moment_axis(kind);
  const Shape ks = moment_keepdim_shape(h.shape(), kind);
  ag::Var mean = ag::mean_axis(h, axis, false);
  ag::Var diff = ag::sub(h, ag::reshape(mean, ks));
  ag::Var var = ag::mean_axis(ag::mul(diff, diff), axis, false);
  ag::Var std = ag::sqrt(ag::add_scalar(var, eps));
  return MomentsVar{std::move(mean), std::move(std), kind};
}

inline MomentsVar detached(const MomentsVar& m) {
  return MomentsVar{ag::detach(m.mean), ag::detach(m.std), m.kind};
}

inline ag::Var exchange_moments_var(const ag::Var& h, const MomentsVar& own, const MomentsVar& donor) {
  check_token_tensor(h.shape());
  check_moments_match(h.value(), Moments{own.mean.value(), own.std.value(), own.kind},
                      Moments{donor.mean.value(), donor.std.value(), donor.kind});
  const Shape ks = moment_keepdim_shape(h.shape(), own.kind);
  ag::Var normalized = ag::div(ag::sub(h, ag::reshape(own.mean, ks)), ag::reshape(own.std, ks));
  return ag::add(ag::mul(normalized, ag::reshape(donor.std, ks)), ag::reshape(donor.mean, ks));
}

// stop_gradient detaches only the donated (cross-stream) moments; the
// receiving stream stays differentiable through its own normalization.
inline std::pair<ag::Var, ag::Var> moexda_forward_var(const ag::Var& h_rgb, const ag::Var& h_edge,
                                                      const MoexSettings& cfg) {
  check_token_tensor(h_rgb.shape());
  if (h_rgb.shape() != h_edge.shape()) {
    throw ShapeError("moexda_forward: stream shapes disagree, " + shape_str(h_rgb.shape()) + " vs " +
                     shape_str(h_edge.shape()));
  }
  const MomentsVar m_rgb = compute_moments_var(h_rgb, cfg.mode, cfg.eps);
  const MomentsVar m_edge = compute_moments_var(h_edge, cfg.mode, cfg.eps);
  const MomentsVar donor_rgb = cfg.stop_gradient ? detached(m_rgb) : m_rgb;
  const MomentsVar donor_edge = cfg.stop_gradient ? detached(m_edge) : m_edge;
  switch (cfg.direction) {
    case Direction::kEdgeToRgb: return {h_rgb, exchange_moments_var(h_edge, m_edge, donor_rgb)};
    case Direction::kRgbToEdge: return {exchange_moments_var(h_rgb, m_rgb, donor_edge), h_edge};
    case Direction::kBidirection:
      return {exchange_moments_var(h_rgb, m_rgb, donor_edge), exchange_moments_var(h_edge, m_edge, donor_rgb)};
  }
  throw ConfigError("moexda_forward: invalid direction");
}

}  // namespace moexda
