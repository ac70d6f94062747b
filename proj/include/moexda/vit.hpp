#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "moexda/autograd.hpp"
#include "moexda/errors.hpp"
#include "moexda/moments.hpp"
#include "moexda/rng.hpp"
#include "moexda/tensor.hpp"

namespace moexda {

inline constexpr double kLayerNormEps = 1e-5;

struct VitConfig {
  int image_size = 32;
  int patch_size = 4;
  int hidden_dim = 64;
  int num_heads = 2;
  int num_layers = 4;
  int mlp_dim = 256;
  int num_classes = 4;

  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int tokens() const { return num_patches() + 1; }
  int head_dim() const { return hidden_dim / num_heads; }

  void validate() const {
    if (image_size <= 0 || patch_size <= 0 || hidden_dim <= 0 || num_heads <= 0 || num_layers <= 0 ||
        mlp_dim <= 0 || num_classes <= 0) {
      throw ConfigError("vit: all dimensions must be positive");
    }
    if (image_size % patch_size != 0) {
      throw ConfigError("vit: image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                        std::to_string(patch_size));
    }
    if (hidden_dim % num_heads != 0) {
      throw ConfigError("vit: hidden_dim " + std::to_string(hidden_dim) + " not divisible by num_heads " +
                        std::to_string(num_heads));
    }
  }
};

struct ModelConfig {
  VitConfig vit;
  MoexSettings moex;
  std::vector<int> moex_layers;  // 1-based block indices; empty disables the exchange

  void validate() const {
    vit.validate();
    if (!(moex.eps > 0.0)) throw ConfigError("moex: eps must be positive");
    int prev = 0;
    for (int l : moex_layers) {
      if (l < 1 || l > vit.num_layers) {
        throw ConfigError("moex: layer " + std::to_string(l) + " outside [1," +
                          std::to_string(vit.num_layers) + "]");
      }
      if (l <= prev) throw ConfigError("moex: layers must be strictly increasing");
      prev = l;
    }
  }
};

struct BlockParams {
  ag::Var ln1_gamma, ln1_beta;
  ag::Var q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
  ag::Var ln2_gamma, ln2_beta;
  ag::Var fc1_w, fc1_b, fc2_w, fc2_b;
};

struct StreamParams {
  ag::Var patch_w;    // [patch*patch*in_ch x C]
  ag::Var patch_b;    // [C]
  ag::Var cls_token;  // [C]
  ag::Var pos_embed;  // [(N+1) x C]
  std::vector<BlockParams> blocks;
  ag::Var head_w;  // [C x K]
  ag::Var head_b;  // [K]
};

// [B x T x ch x H x W] -> [B*T x N x patch*patch*ch], patches row-major over
// the grid, channel-major within a patch.
inline Tensor extract_patches(const Tensor& clip, int patch) {
  if (clip.rank() != 5) throw ShapeError("extract_patches: expected [BxTxchxHxW], got " + shape_str(clip.shape()));
  const std::int64_t B = clip.dim(0), T = clip.dim(1), ch = clip.dim(2), H = clip.dim(3), W = clip.dim(4);
  if (H % patch != 0 || W % patch != 0) throw ShapeError("extract_patches: image not divisible by patch");
  const std::int64_t gy = H / patch, gx = W / patch;
  const std::int64_t n = gy * gx;
  const std::int64_t d = static_cast<std::int64_t>(patch) * patch * ch;
  Tensor out(Shape{B * T, n, d});
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t t = 0; t < T; ++t) {
      const std::int64_t r = b * T + t;
      for (std::int64_t py = 0; py < gy; ++py) {
        for (std::int64_t px = 0; px < gx; ++px) {
          const std::int64_t pn = py * gx + px;
          std::int64_t e = 0;
          for (std::int64_t c = 0; c < ch; ++c) {
            for (int dy = 0; dy < patch; ++dy) {
              for (int dx = 0; dx < patch; ++dx) {
                out(r, pn, e++) = clip(b, t, c, py * patch + dy, px * patch + dx);
              }
            }
          }
        }
      }
    }
  }
  return out;
}

inline ag::Var layer_norm(const ag::Var& x, const ag::Var& gamma, const ag::Var& beta,
                          double eps = kLayerNormEps) {
  ag::Var m = ag::mean_axis(x, 2, true);
  ag::Var d = ag::sub(x, m);
  ag::Var v = ag::mean_axis(ag::mul(d, d), 2, true);
  ag::Var s = ag::sqrt(ag::add_scalar(v, eps));
  return ag::add(ag::mul(ag::div(d, s), gamma), beta);
}

// Two per-frame ViT towers over RGB and edge inputs. When a block index is
// listed in moex_layers, the token tensors of both streams pass through the
// moment exchange between the attention residual and the MLP sublayer.
struct StreamLogits {
  ag::Var rgb;
  ag::Var edge;
};

class TwoStreamModel {
 public:
  explicit TwoStreamModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    moex_at_.assign(static_cast<std::size_t>(cfg_.vit.num_layers), false);
    for (int l : cfg_.moex_layers) moex_at_[static_cast<std::size_t>(l - 1)] = true;
    rgb_ = make_stream(3);
    edge_ = make_stream(1);
  }

  const ModelConfig& config() const { return cfg_; }

  // Truncated-normal (0.02, clipped at two sigma) for weights and position
  // embeddings, ones for LN gains, zeros everywhere else.
  void init_params(Rng& rng) {
    for (StreamParams* sp : {&rgb_, &edge_}) {
      fill_trunc_normal(sp->patch_w, rng);
      sp->patch_b.mutable_value().fill(0.0);
      sp->cls_token.mutable_value().fill(0.0);
      fill_trunc_normal(sp->pos_embed, rng);
      for (BlockParams& bp : sp->blocks) {
        bp.ln1_gamma.mutable_value().fill(1.0);
        bp.ln1_beta.mutable_value().fill(0.0);
        for (ag::Var* w : {&bp.q_w, &bp.k_w, &bp.v_w, &bp.o_w}) fill_trunc_normal(*w, rng);
        for (ag::Var* b : {&bp.q_b, &bp.k_b, &bp.v_b, &bp.o_b}) b->mutable_value().fill(0.0);
        bp.ln2_gamma.mutable_value().fill(1.0);
        bp.ln2_beta.mutable_value().fill(0.0);
        fill_trunc_normal(bp.fc1_w, rng);
        bp.fc1_b.mutable_value().fill(0.0);
        fill_trunc_normal(bp.fc2_w, rng);
        bp.fc2_b.mutable_value().fill(0.0);
      }
      fill_trunc_normal(sp->head_w, rng);
      sp->head_b.mutable_value().fill(0.0);
    }
  }

  std::vector<std::pair<std::string, ag::Var>> named_params() const {
    std::vector<std::pair<std::string, ag::Var>> out;
    append_stream_params("rgb", rgb_, out);
    append_stream_params("edge", edge_, out);
    return out;
  }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const auto& [name, v] : named_params()) n += v.value().size();
    return n;
  }

  using StreamLogits = moexda::StreamLogits;

  // clip_rgb [BxTx3xHxW], clip_edge [BxTx1xHxW], both already normalized.
  StreamLogits forward(const Tensor& clip_rgb, const Tensor& clip_edge) const {
    check_clip(clip_rgb, 3, "rgb");
    check_clip(clip_edge, 1, "edge");
    if (clip_rgb.dim(0) != clip_edge.dim(0) || clip_rgb.dim(1) != clip_edge.dim(1)) {
      throw ShapeError("forward: stream batch/frame dims disagree");
    }
    const std::int64_t B = clip_rgb.dim(0), T = clip_rgb.dim(1);
    const std::int64_t M = cfg_.vit.tokens(), C = cfg_.vit.hidden_dim;

    ag::Var hr = embed(rgb_, clip_rgb);
    ag::Var he = embed(edge_, clip_edge);
    for (int l = 0; l < cfg_.vit.num_layers; ++l) {
      const BlockParams& br = rgb_.blocks[static_cast<std::size_t>(l)];
      const BlockParams& be = edge_.blocks[static_cast<std::size_t>(l)];
      ag::Var ur = ag::add(hr, attention(br, layer_norm(hr, br.ln1_gamma, br.ln1_beta)));
      ag::Var ue = ag::add(he, attention(be, layer_norm(he, be.ln1_gamma, be.ln1_beta)));
      if (moex_at_[static_cast<std::size_t>(l)]) {
        ag::Var ur4 = ag::reshape(ur, Shape{B, T, M, C});
        ag::Var ue4 = ag::reshape(ue, Shape{B, T, M, C});
        auto [xr, xe] = moexda_forward_var(ur4, ue4, cfg_.moex);
        ur = ag::reshape(xr, Shape{B * T, M, C});
        ue = ag::reshape(xe, Shape{B * T, M, C});
      }
      hr = ag::add(ur, mlp(br, layer_norm(ur, br.ln2_gamma, br.ln2_beta)));
      he = ag::add(ue, mlp(be, layer_norm(ue, be.ln2_gamma, be.ln2_beta)));
    }

    return StreamLogits{head(rgb_, hr, B, T), head(edge_, he, B, T)};
  }

 private:
  static void fill_trunc_normal(ag::Var& v, Rng& rng) {
    Tensor& t = v.mutable_value();
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.truncated_normal(0.02);
  }

  StreamParams make_stream(int in_channels) const {
    const VitConfig& v = cfg_.vit;
    const std::int64_t C = v.hidden_dim;
    const std::int64_t D = static_cast<std::int64_t>(v.patch_size) * v.patch_size * in_channels;
    StreamParams sp;
    sp.patch_w = ag::parameter(Tensor(Shape{D, C}));
    sp.patch_b = ag::parameter(Tensor(Shape{C}));
    sp.cls_token = ag::parameter(Tensor(Shape{C}));
    sp.pos_embed = ag::parameter(Tensor(Shape{v.tokens(), C}));
    sp.blocks.resize(static_cast<std::size_t>(v.num_layers));
    for (BlockParams& bp : sp.blocks) {
      bp.ln1_gamma = ag::parameter(Tensor(Shape{C}));
      bp.ln1_beta = ag::parameter(Tensor(Shape{C}));
      bp.q_w = ag::parameter(Tensor(Shape{C, C}));
      bp.q_b = ag::parameter(Tensor(Shape{C}));
      bp.k_w = ag::parameter(Tensor(Shape{C, C}));
      bp.k_b = ag::parameter(Tensor(Shape{C}));
      bp.v_w = ag::parameter(Tensor(Shape{C, C}));
      bp.v_b = ag::parameter(Tensor(Shape{C}));
      bp.o_w = ag::parameter(Tensor(Shape{C, C}));
      bp.o_b = ag::parameter(Tensor(Shape{C}));
      bp.ln2_gamma = ag::parameter(Tensor(Shape{C}));
      bp.ln2_beta = ag::parameter(Tensor(Shape{C}));
      bp.fc1_w = ag::parameter(Tensor(Shape{C, v.mlp_dim}));
      bp.fc1_b = ag::parameter(Tensor(Shape{v.mlp_dim}));
      bp.fc2_w = ag::parameter(Tensor(Shape{v.mlp_dim, C}));
      bp.fc2_b = ag::parameter(Tensor(Shape{C}));
    }
    sp.head_w = ag::parameter(Tensor(Shape{C, v.num_classes}));
    sp.head_b = ag::parameter(Tensor(Shape{v.num_classes}));
    return sp;
  }

  static void append_stream_params(const std::string& prefix, const StreamParams& sp,
                                   std::vector<std::pair<std::string, ag::Var>>& out) {
    out.emplace_back(prefix + ".patch_embed.weight", sp.patch_w);
    out.emplace_back(prefix + ".patch_embed.bias", sp.patch_b);
    out.emplace_back(prefix + ".cls_token", sp.cls_token);
    out.emplace_back(prefix + ".pos_embed", sp.pos_embed);
    for (std::size_t l = 0; l < sp.blocks.size(); ++l) {
      const BlockParams& bp = sp.blocks[l];
      const std::string b = prefix + ".block" + std::to_string(l + 1) + ".";
      out.emplace_back(b + "ln1.gamma", bp.ln1_gamma);
      out.emplace_back(b + "ln1.beta", bp.ln1_beta);
      out.emplace_back(b + "mha.q_proj.weight", bp.q_w);
      out.emplace_back(b + "mha.q_proj.bias", bp.q_b);
      out.emplace_back(b + "mha.k_proj.weight", bp.k_w);
      out.emplace_back(b + "mha.k_proj.bias", bp.k_b);
      out.emplace_back(b + "mha.v_proj.weight", bp.v_w);
      out.emplace_back(b + "mha.v_proj.bias", bp.v_b);
      out.emplace_back(b + "mha.o_proj.weight", bp.o_w);
      out.emplace_back(b + "mha.o_proj.bias", bp.o_b);
      out.emplace_back(b + "ln2.gamma", bp.ln2_gamma);
      out.emplace_back(b + "ln2.beta", bp.ln2_beta);
      out.emplace_back(b + "mlp.fc1.weight", bp.fc1_w);
      out.emplace_back(b + "mlp.fc1.bias", bp.fc1_b);
      out.emplace_back(b + "mlp.fc2.weight", bp.fc2_w);
      out.emplace_back(b + "mlp.fc2.bias", bp.fc2_b);
    }
    out.emplace_back(prefix + ".head.weight", sp.head_w);
    out.emplace_back(prefix + ".head.bias", sp.head_b);
  }

  void check_clip(const Tensor& clip, std::int64_t ch, const char* which) const {
    if (clip.rank() != 5 || clip.dim(2) != ch || clip.dim(3) != cfg_.vit.image_size ||
        clip.dim(4) != cfg_.vit.image_size) {
      throw ShapeError(std::string("forward: ") + which + " clip must be [BxTx" + std::to_string(ch) + "x" +
                       std::to_string(cfg_.vit.image_size) + "x" + std::to_string(cfg_.vit.image_size) +
                       "], got " + shape_str(clip.shape()));
    }
  }

  ag::Var embed(const StreamParams& sp, const Tensor& clip) const {
    Tensor patches = extract_patches(clip, cfg_.vit.patch_size);
    ag::Var x = ag::add(ag::matmul(ag::constant(std::move(patches)), sp.patch_w), sp.patch_b);
    x = ag::prepend_token(x, sp.cls_token);
    return ag::add(x, sp.pos_embed);
  }

  ag::Var attention(const BlockParams& bp, const ag::Var& x) const {
    const std::int64_t R = x.shape()[0], M = x.shape()[1];
    const std::int64_t C = cfg_.vit.hidden_dim;
    const std::int64_t H = cfg_.vit.num_heads, D = cfg_.vit.head_dim();
    auto split = [&](const ag::Var& v) {
      return ag::permute(ag::reshape(v, Shape{R, M, H, D}), {0, 2, 1, 3});
    };
    ag::Var q = split(ag::add(ag::matmul(x, bp.q_w), bp.q_b));
    ag::Var k = split(ag::add(ag::matmul(x, bp.k_w), bp.k_b));
    ag::Var v = split(ag::add(ag::matmul(x, bp.v_w), bp.v_b));
    ag::Var scores = ag::scale(ag::matmul(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(D)));
    ag::Var ctx = ag::matmul(ag::softmax_last(scores), v);
    ag::Var merged = ag::reshape(ag::permute(ctx, {0, 2, 1, 3}), Shape{R, M, C});
    return ag::add(ag::matmul(merged, bp.o_w), bp.o_b);
  }

  ag::Var mlp(const BlockParams& bp, const ag::Var& x) const {
    ag::Var h = ag::gelu(ag::add(ag::matmul(x, bp.fc1_w), bp.fc1_b));
    return ag::add(ag::matmul(h, bp.fc2_w), bp.fc2_b);
  }

  // Class tokens averaged over frames, then the stream's affine head.
  ag::Var head(const StreamParams& sp, const ag::Var& h, std::int64_t B, std::int64_t T) const {
    ag::Var cls = ag::select_token(h, 0);
    cls = ag::mean_axis(ag::reshape(cls, Shape{B, T, cfg_.vit.hidden_dim}), 1, false);
    return ag::add(ag::matmul(cls, sp.head_w), sp.head_b);
  }

  ModelConfig cfg_;
  std::vector<bool> moex_at_;
  StreamParams rgb_;
  StreamParams edge_;
};

}  // namespace moexda
