// Acceptance harness: twelve numbered checks, one PASS/FAIL line each.
// Criterion 11 is a soft directional experiment — its outcome is printed and
// documented but does not affect the exit code. Everything else gates.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "moexda/moexda.hpp"
#include "support/scripted_classifiers.hpp"
#include "support/test_util.hpp"

namespace moexda {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

Tensor rand_tokens(Rng& rng, const Shape& s, double lo, double hi) {
  Tensor t(s);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// 1. Re-normalized features must carry the donor's statistics.
Outcome criterion_moment_transfer() {
  Rng rng(1001);
  double worst_mean = 0.0, worst_std = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::int64_t B = 1 + static_cast<std::int64_t>(rng.below(2));
    const std::int64_t T = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t N1 = 5 + static_cast<std::int64_t>(rng.below(13));  // 5..17 tokens
    const std::int64_t C = 8 + static_cast<std::int64_t>(rng.below(25));   // 8..32 channels
    const NormKind mode = (i % 2 == 0) ? NormKind::kPono : NormKind::kIn;
    const Tensor h = rand_tokens(rng, {B, T, N1, C}, -2.0, 2.0);
    const Tensor d = rand_tokens(rng, {B, T, N1, C}, -1.0, 3.0);
    const Moments own = compute_moments(h, mode);
    const Moments donor = compute_moments(d, mode);
    const Tensor out = exchange_moments(h, own, donor);
    const Moments got = compute_moments(out, mode);
    for (std::int64_t k = 0; k < got.mean.size(); ++k) {
      worst_mean = std::max(worst_mean, std::abs(got.mean[k] - donor.mean[k]));
      worst_std = std::max(worst_std, std::abs(got.std[k] - donor.std[k]) / donor.std[k]);
    }
  }
  Outcome o;
  o.pass = worst_mean <= 1e-5 && worst_std <= 1e-3;
  o.detail = fmt("100 tensors, both modes: worst |d mean|=%.2e (tol 1e-5), worst rel d std=%.2e (tol 1e-3)",
                 worst_mean, worst_std);
  return o;
}

// Scalar re-derivation of the exchange on a [1x1xNxC] tensor.
Tensor loop_exchange_oracle(const Tensor& h, const Tensor& d, NormKind mode, double eps) {
  const std::int64_t N = h.shape()[2], C = h.shape()[3];
  Tensor out(h.shape());
  const auto stats = [&](const Tensor& t, std::int64_t fixed, bool over_channels) {
    double mean = 0.0, var = 0.0;
    const std::int64_t n = over_channels ? C : N;
    for (std::int64_t i = 0; i < n; ++i) mean += over_channels ? t(0, 0, fixed, i) : t(0, 0, i, fixed);
    mean /= static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      const double x = over_channels ? t(0, 0, fixed, i) : t(0, 0, i, fixed);
      var += (x - mean) * (x - mean);
    }
    var /= static_cast<double>(n);
    return std::pair<double, double>{mean, std::sqrt(var + eps)};
  };
  const bool pono = mode == NormKind::kPono;
  for (std::int64_t k = 0; k < (pono ? N : C); ++k) {
    const auto [mu_o, sd_o] = stats(h, k, pono);
    const auto [mu_d, sd_d] = stats(d, k, pono);
    for (std::int64_t j = 0; j < (pono ? C : N); ++j) {
      const double x = pono ? h(0, 0, k, j) : h(0, 0, j, k);
      const double y = (x - mu_o) / sd_o * sd_d + mu_d;
      if (pono) out(0, 0, k, j) = y;
      else out(0, 0, j, k) = y;
    }
  }
  return out;
}

// 2. exchange_moments against the scalar triple-loop oracle.
Outcome criterion_exchange_oracle() {
  Rng rng(1002);
  const double eps = 1e-5;
  double worst = 0.0;
  for (NormKind mode : {NormKind::kPono, NormKind::kIn}) {
    for (int c = 0; c < 20; ++c) {
      const Tensor h = rand_tokens(rng, {1, 1, 4, 4}, -3.0, 3.0);
      const Tensor d = rand_tokens(rng, {1, 1, 4, 4}, -3.0, 3.0);
      const Tensor got = exchange_moments(h, compute_moments(h, mode, eps), compute_moments(d, mode, eps));
      const Tensor want = loop_exchange_oracle(h, d, mode, eps);
      for (std::int64_t k = 0; k < got.size(); ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
    }
  }
  Outcome o;
  o.pass = worst <= 1e-9;
  o.detail = fmt("20 cases x both modes on 1x1x4x4: worst |diff|=%.2e (tol 1e-9)", worst);
  return o;
}

// 3. Finite-difference gradient checks, module-level and end-to-end.
Outcome criterion_gradchecks() {
  double worst_module = 0.0, worst_e2e = 0.0;
  bool ok = true;
  int n_module = 0, n_e2e = 0;
  for (const GradcheckCase& c : run_moex_gradchecks()) {
    ok = ok && c.passed();
    worst_module = std::max(worst_module, c.max_rel);
    ++n_module;
  }
  for (const GradcheckCase& c : run_e2e_gradchecks()) {
    ok = ok && c.passed();
    worst_e2e = std::max(worst_e2e, c.max_rel);
    ++n_e2e;
  }
  Outcome o;
  o.pass = ok;
  o.detail = fmt("%d module configs worst rel=%.2e (tol 1e-4); %d end-to-end cases worst rel=%.2e (tol 1e-3)",
                 n_module, worst_module, n_e2e, worst_e2e);
  return o;
}

// 4. Stop-gradient blocking: the stream whose loss term is off receives
// exactly zero gradient, and the donated moments alone carry none either.
Outcome criterion_stop_gradient() {
  ModelConfig mc;
  mc.vit.image_size = 8;
  mc.vit.patch_size = 4;
  mc.vit.hidden_dim = 8;
  mc.vit.num_heads = 2;
  mc.vit.num_layers = 2;
  mc.vit.mlp_dim = 16;
  mc.vit.num_classes = 2;
  mc.moex_layers = {1};

  Rng rng(1004);
  const Tensor rgb = rand_tokens(rng, {2, 2, 3, 8, 8}, -1.0, 1.0);
  const Tensor edge = rand_tokens(rng, {2, 2, 1, 8, 8}, -1.0, 1.0);
  const std::vector<int> labels = {0, 1};

  const auto max_grad = [&](Direction dir, bool sg, LossWeights w, const std::string& prefix) {
    mc.moex.direction = dir;
    mc.moex.stop_gradient = sg;
    TwoStreamModel model(mc);
    Rng init(4242);
    model.init_params(init);
    for (auto& [name, var] : model.named_params()) var.zero_grad();
    StreamLogits lg = model.forward(rgb, edge);
    ag::Var loss = total_loss(lg.rgb, lg.edge, labels, w);
    ag::backward(loss);
    double mx = 0.0;
    for (const auto& [name, var] : model.named_params()) {
      if (name.rfind(prefix, 0) != 0) continue;
      const Tensor& g = var.grad();
      for (std::int64_t k = 0; k < g.size(); ++k) mx = std::max(mx, std::abs(g[k]));
    }
    return mx;
  };

  // As stated: the inactive-loss stream's parameters get exactly zero.
  const double edge_off = max_grad(Direction::kEdgeToRgb, true, LossWeights{0.0, 1.0}, "edge.");
  const double rgb_off = max_grad(Direction::kRgbToEdge, true, LossWeights{1.0, 0.0}, "rgb.");
  // Donation path: with only the receiving stream's loss active, the donor's
  // parameters see zero gradient iff the donated moments are detached.
  const double donor_sg = max_grad(Direction::kEdgeToRgb, true, LossWeights{1.0, 0.0}, "rgb.");
  const double donor_leak = max_grad(Direction::kEdgeToRgb, false, LossWeights{1.0, 0.0}, "rgb.");

  Outcome o;
  o.pass = edge_off == 0.0 && rgb_off == 0.0 && donor_sg == 0.0 && donor_leak > 0.0;
  o.detail = fmt("edge|alpha_edge=0: %.1e, rgb|alpha_rgb=0: %.1e, donor w/ sg: %.1e (all exactly 0); "
                 "donor w/o sg: %.1e (nonzero)",
                 edge_off, rgb_off, donor_sg, donor_leak);
  return o;
}

// 5. Sobel magnitude against an explicit kernel-loop oracle.
Outcome criterion_sobel_oracle() {
  static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  Rng rng(1005);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    const Tensor img = rand_tokens(rng, {1, 9, 9}, 0.0, 1.0);
    const Tensor got = sobel_edges(img);
    for (std::int64_t y = 0; y < 9; ++y) {
      for (std::int64_t x = 0; x < 9; ++x) {
        double sx = 0.0, sy = 0.0;
        for (int dy = 0; dy < 3; ++dy) {
          for (int dx = 0; dx < 3; ++dx) {
            const std::int64_t yy = std::clamp<std::int64_t>(y + dy - 1, 0, 8);
            const std::int64_t xx = std::clamp<std::int64_t>(x + dx - 1, 0, 8);
            sx += kx[dy][dx] * img(0, yy, xx);
            sy += ky[dy][dx] * img(0, yy, xx);
          }
        }
        const double want = std::min(1.0, std::sqrt(sx * sx + sy * sy));
        worst = std::max(worst, std::abs(got(0, y, x) - want));
      }
    }
  }
  Outcome o;
  o.pass = worst <= 1e-12;
  o.detail = fmt("50 random 9x9 images incl. borders: worst |diff|=%.2e (tol 1e-12)", worst);
  return o;
}

// 6. Corpus statistics: two-pass oracle, degenerate corpus, shipped defaults.
Outcome criterion_stats_pipeline() {
  Rng rng(1006);
  std::vector<Tensor> corpus = {rand_tokens(rng, {2, 3, 5, 5}, 0.0, 1.0),
                                rand_tokens(rng, {3, 3, 7, 7}, 0.0, 1.0)};
  const NormalizationStats got = compute_corpus_stats(corpus);

  std::vector<double> pixels;
  for (const Tensor& item : corpus) {
    const std::int64_t T = item.rank() == 4 ? item.shape()[0] : 1;
    const std::int64_t side = item.shape()[item.rank() - 1];
    for (std::int64_t t = 0; t < T; ++t) {
      Tensor frame({3, item.shape()[item.rank() - 2], side});
      std::copy_n(item.data() + t * frame.size(), frame.size(), frame.data());
      const Tensor e = edge_map(frame);
      pixels.insert(pixels.end(), e.data(), e.data() + e.size());
    }
  }
  double mean = 0.0;
  for (double p : pixels) mean += p;
  mean /= static_cast<double>(pixels.size());
  double var = 0.0;
  for (double p : pixels) var += (p - mean) * (p - mean);
  const double std_dev = std::sqrt(var / static_cast<double>(pixels.size()));

  const NormalizationStats flat = compute_corpus_stats(std::vector<Tensor>{Tensor({2, 3, 6, 6}, 0.4)});
  const NormalizationStats defaults = default_edge_stats();

  Outcome o;
  const double d_mean = std::abs(got.mean.at(0) - mean);
  const double d_std = std::abs(got.std.at(0) - std_dev);
  o.pass = d_mean <= 1e-9 && d_std <= 1e-9 && flat.mean.at(0) == 0.0 && flat.std.at(0) == 0.0 &&
           defaults.mean.at(0) == 0.026 && defaults.std.at(0) == 0.037;
  o.detail = fmt("two-pass |d mean|=%.2e |d std|=%.2e (tol 1e-9); constant corpus -> (%g, %g); "
                 "defaults (%g, %g)",
                 d_mean, d_std, flat.mean.at(0), flat.std.at(0), defaults.mean.at(0), defaults.std.at(0));
  return o;
}

// 7. Moment tensors take the declared shapes for both normalization kinds.
Outcome criterion_moment_shapes() {
  Rng rng(1007);
  bool ok = true;
  for (int i = 0; i < 10; ++i) {
    const std::int64_t B = 1 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t T = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t N1 = 2 + static_cast<std::int64_t>(rng.below(16));
    const std::int64_t C = 2 + static_cast<std::int64_t>(rng.below(31));
    const Tensor h = rand_tokens(rng, {B, T, N1, C}, -1.0, 1.0);
    const Moments pono = compute_moments(h, NormKind::kPono);
    const Moments in = compute_moments(h, NormKind::kIn);
    ok = ok && pono.mean.shape() == (Shape{B, T, N1}) && pono.std.shape() == (Shape{B, T, N1});
    ok = ok && in.mean.shape() == (Shape{B, T, C}) && in.std.shape() == (Shape{B, T, C});
  }
  Outcome o;
  o.pass = ok;
  o.detail = "10 random configs: channel-moments BxTx(N+1), token-moments BxTxC";
  return o;
}

// 8. The combined loss is the stated weighted sum, in plain double arithmetic.
Outcome criterion_loss_contract() {
  Rng rng(1008);
  const Tensor lr = rand_tokens(rng, {3, 5}, -2.0, 2.0);
  const Tensor le = rand_tokens(rng, {3, 5}, -2.0, 2.0);
  const std::vector<int> labels = {0, 3, 2};

  // Scalar cross entropy: mean over rows of logsumexp(row) - row[label].
  const auto scalar_ce = [&](const Tensor& logits) {
    double total = 0.0;
    for (std::int64_t b = 0; b < 3; ++b) {
      double mx = logits(b, 0);
      for (std::int64_t k = 1; k < 5; ++k) mx = std::max(mx, logits(b, k));
      double sum = 0.0;
      for (std::int64_t k = 0; k < 5; ++k) sum += std::exp(logits(b, k) - mx);
      total += mx + std::log(sum) - logits(b, static_cast<std::int64_t>(labels[static_cast<std::size_t>(b)]));
    }
    return total / 3.0;
  };
  const double ce_rgb = scalar_ce(lr);
  const double ce_edge = scalar_ce(le);

  double worst_combo = 0.0, worst_ce = 0.0;
  for (const LossWeights& w : {LossWeights{}, LossWeights{0.3, 0.7}, LossWeights{2.0, 0.0}}) {
    LossBreakdown parts;
    total_loss(ag::constant(lr), ag::constant(le), labels, w, &parts);
    worst_ce = std::max({worst_ce, std::abs(parts.rgb - ce_rgb), std::abs(parts.edge - ce_edge)});
    worst_combo = std::max(worst_combo, std::abs(parts.total - (w.alpha_edge * parts.edge + w.alpha_rgb * parts.rgb)));
  }
  Outcome o;
  o.pass = worst_combo <= 1e-12 && worst_ce <= 1e-9;
  o.detail = fmt("defaults (alpha_edge=1.0, alpha_rgb=0.5) and 2 other weightings: "
                 "worst |total - weighted sum|=%.2e (tol 1e-12); scalar-CE check %.2e",
                 worst_combo, worst_ce);
  return o;
}

// 9. With no exchange layers the streams are fully decoupled: scrambling one
// tower's parameters must not move the other tower's logits.
Outcome criterion_decoupling() {
  ModelConfig mc;
  mc.vit.image_size = 8;
  mc.vit.patch_size = 4;
  mc.vit.hidden_dim = 8;
  mc.vit.num_heads = 2;
  mc.vit.num_layers = 2;
  mc.vit.mlp_dim = 16;
  mc.vit.num_classes = 3;
  mc.moex_layers = {};

  TwoStreamModel base(mc);
  Rng init(1009);
  base.init_params(init);

  const auto clone_with_scrambled = [&](const std::string& prefix, std::uint64_t seed) {
    TwoStreamModel m(mc);
    Rng scramble(seed);
    auto src = base.named_params();
    auto dst = m.named_params();
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i].second.mutable_value() = src[i].second.value();
      if (src[i].first.rfind(prefix, 0) == 0) {
        Tensor& t = dst[i].second.mutable_value();
        for (std::int64_t k = 0; k < t.size(); ++k) t[k] = scramble.uniform(-0.5, 0.5);
      }
    }
    return m;
  };
  TwoStreamModel edge_scrambled = clone_with_scrambled("edge.", 7);
  TwoStreamModel rgb_scrambled = clone_with_scrambled("rgb.", 8);

  Rng rng(1010);
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    const Tensor rgb = rand_tokens(rng, {2, 2, 3, 8, 8}, -1.0, 1.0);
    const Tensor edge = rand_tokens(rng, {2, 2, 1, 8, 8}, -1.0, 1.0);
    const StreamLogits want = base.forward(rgb, edge);
    const StreamLogits got_rgb = edge_scrambled.forward(rgb, edge);
    const StreamLogits got_edge = rgb_scrambled.forward(rgb, edge);
    for (std::int64_t k = 0; k < want.rgb.value().size(); ++k) {
      worst = std::max(worst, std::abs(want.rgb.value()[k] - got_rgb.rgb.value()[k]));
      worst = std::max(worst, std::abs(want.edge.value()[k] - got_edge.edge.value()[k]));
    }
  }
  Outcome o;
  o.pass = worst <= 1e-6;
  o.detail = fmt("5 inputs, layers=[]: worst cross-tower influence on logits %.2e (tol 1e-6)", worst);
  return o;
}

// 10. The aligned-variant harness separates a background reader from a
// motion reader on a rho-controlled set.
Outcome criterion_bias_harness() {
  SyntheticSceneSpec spec;
  spec.num_classes = 4;
  spec.texture_pool = 4;
  spec.rho = 1.0;
  spec.num_videos = 200;
  spec.frames = 12;
  spec.image_size = 32;
  spec.seed = 1010;
  const std::string dir = testutil::make_temp_dir("accept_bias");
  const std::vector<VideoEntry> entries = generate_dataset(spec, dir);

  testutil::BackgroundColorReader bg_reader(4);
  testutil::ActorMotionReader motion_reader;
  const StreamReport bg =
      summarize_stream(evaluate_classifier(dir, entries, spec.frames, bg_reader, "bg"), "bg");
  const StreamReport motion =
      summarize_stream(evaluate_classifier(dir, entries, spec.frames, motion_reader, "motion"), "motion");
  fs::remove_all(dir);

  Outcome o;
  o.pass = bg.bor >= bg.hor + 0.3 && motion.hor >= motion.bor + 0.3;
  o.detail = fmt("200 videos, K=4: background reader BOR=%.3f HOR=%.3f; motion reader HOR=%.3f BOR=%.3f "
                 "(both margins >= 0.3)",
                 bg.bor, bg.hor, motion.hor, motion.bor);
  return o;
}

// Accuracy on the background-only variants of a corpus for one model stream.
double stream_bor(TwoStreamModel& model, int stream, const std::string& corpus,
                  const std::vector<VideoEntry>& entries, int clip_len) {
  ModelStreamClassifier clf(model, stream, default_rgb_stats(), default_edge_stats());
  const std::string bg_root = variant_corpus_dir(corpus, kBgOnlyDir);
  std::int64_t correct = 0;
  for (const VideoEntry& e : entries) {
    if (clf.predict(load_clip_rgb(bg_root, e, clip_len)) == e.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(entries.size());
}

// 11. Soft directional experiment: edge stream vs RGB-only baseline BOR.
Outcome criterion_directional_experiment() {
  VitConfig vit;
  vit.image_size = 16;
  vit.patch_size = 4;
  vit.hidden_dim = 64;
  vit.num_heads = 2;
  vit.num_layers = 4;
  vit.mlp_dim = 256;
  vit.num_classes = 4;

  ModelConfig moex_cfg;
  moex_cfg.vit = vit;
  moex_cfg.moex = MoexSettings{NormKind::kPono, Direction::kEdgeToRgb, true, 1e-5};
  moex_cfg.moex_layers = {1};
  ModelConfig base_cfg;
  base_cfg.vit = vit;
  base_cfg.moex_layers = {};

  SyntheticSceneSpec test_spec;
  test_spec.num_classes = 4;
  test_spec.texture_pool = 4;
  test_spec.rho = 0.0;
  test_spec.num_videos = 200;
  test_spec.frames = 6;
  test_spec.image_size = 16;
  test_spec.seed = 999;
  const std::string test_dir = testutil::make_temp_dir("accept_dir_test");
  const std::vector<VideoEntry> test_entries = generate_dataset(test_spec, test_dir);

  TrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 8;
  tc.frames = 6;
  tc.lr = 3e-4;
  tc.weight_decay = 1e-4;

  std::string per_seed;
  int wins = 0;
  double first_seed_rho1_edge = 0.0, first_seed_rho1_rgb = 0.0;
  const std::uint64_t seeds[3] = {101, 102, 103};
  for (int si = 0; si < 3; ++si) {
    SyntheticSceneSpec train_spec = test_spec;
    train_spec.rho = 0.9;
    train_spec.num_videos = 64;
    train_spec.seed = seeds[si];
    const std::string train_dir = testutil::make_temp_dir("accept_dir_train");
    const std::vector<VideoEntry> train_entries = generate_dataset(train_spec, train_dir);
    const ClipStore store =
        load_clip_store(train_dir, train_entries, tc.frames, default_rgb_stats(), default_edge_stats());
    tc.seed = seeds[si];

    TwoStreamModel moex_model(moex_cfg);
    Rng moex_init(seeds[si]);
    moex_model.init_params(moex_init);
    train_model(moex_model, store, tc, LossWeights{});  // defaults: alpha_edge 1.0, alpha_rgb 0.5

    TwoStreamModel base_model(base_cfg);
    Rng base_init(seeds[si]);
    base_model.init_params(base_init);
    train_model(base_model, store, tc, LossWeights{0.0, 1.0});  // RGB-only

    const double edge_bor = stream_bor(moex_model, 1, test_dir, test_entries, tc.frames);
    const double rgb_bor = stream_bor(base_model, 0, test_dir, test_entries, tc.frames);
    if (edge_bor < rgb_bor) ++wins;
    per_seed += fmt("%sseed %llu: edge %.3f vs rgb-only %.3f", si ? "; " : "",
                    static_cast<unsigned long long>(seeds[si]), edge_bor, rgb_bor);

    if (si == 0) {
      // Supplementary: on a rho=1 set the texture shortcut is live, and the
      // gap between the streams becomes unmistakable.
      SyntheticSceneSpec rho1 = test_spec;
      rho1.rho = 1.0;
      rho1.seed = 555;
      const std::string rho1_dir = testutil::make_temp_dir("accept_dir_rho1");
      const std::vector<VideoEntry> rho1_entries = generate_dataset(rho1, rho1_dir);
      first_seed_rho1_edge = stream_bor(moex_model, 1, rho1_dir, rho1_entries, tc.frames);
      first_seed_rho1_rgb = stream_bor(base_model, 0, rho1_dir, rho1_entries, tc.frames);
      fs::remove_all(rho1_dir);
    }
    fs::remove_all(train_dir);
  }
  fs::remove_all(test_dir);

  Outcome o;
  o.pass = wins >= 2;
  o.detail = fmt("rho=0 test BOR, %d/3 seeds favor edge [%s]; rho=1 supplement (seed 101): "
                 "edge %.3f vs rgb-only %.3f",
                 wins, per_seed.c_str(), first_seed_rho1_edge, first_seed_rho1_rgb);
  return o;
}

// 12. Same seed, same metrics bytes.
Outcome criterion_determinism() {
  ModelConfig mc;
  mc.vit.image_size = 8;
  mc.vit.patch_size = 4;
  mc.vit.hidden_dim = 8;
  mc.vit.num_heads = 2;
  mc.vit.num_layers = 1;
  mc.vit.mlp_dim = 16;
  mc.vit.num_classes = 2;
  mc.moex_layers = {1};

  Rng data_rng(1012);
  ClipStore store;
  for (int i = 0; i < 6; ++i) {
    ClipSample s;
    s.rgb = rand_tokens(data_rng, {2, 3, 8, 8}, -1.0, 1.0);
    s.edge = rand_tokens(data_rng, {2, 1, 8, 8}, -1.0, 1.0);
    s.label = i % 2;
    store.push_back(std::move(s));
  }
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.lr = 1e-3;
  tc.seed = 9;

  const std::string dir = testutil::make_temp_dir("accept_det");
  std::vector<std::vector<unsigned char>> bytes;
  for (int run = 0; run < 2; ++run) {
    TwoStreamModel model(mc);
    Rng init(tc.seed);
    model.init_params(init);
    const std::string path = (fs::path(dir) / ("metrics" + std::to_string(run) + ".ndjson")).string();
    std::ofstream out(path, std::ios::trunc);
    train_model(model, store, tc, LossWeights{}, &out);
    out.close();
    bytes.push_back(read_binary_file(path));
  }
  fs::remove_all(dir);

  Outcome o;
  o.pass = !bytes[0].empty() && bytes[0] == bytes[1];
  o.detail = fmt("two 3-epoch runs, seed 9: metrics files %s (%zu bytes)",
                 o.pass ? "byte-identical" : "DIFFER", bytes[0].size());
  return o;
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> fn;
  double limit_s;  // 0 = no stated runtime bound
  bool gated;
};

}  // namespace
}  // namespace moexda

int main() {
  using namespace moexda;
  const std::vector<Criterion> criteria = {
      {1, "moment-transfer invariant", criterion_moment_transfer, 10.0, true},
      {2, "exchange vs scalar oracle", criterion_exchange_oracle, 0.0, true},
      {3, "gradient checks", criterion_gradchecks, 300.0, true},
      {4, "stop-gradient blocking", criterion_stop_gradient, 0.0, true},
      {5, "sobel vs loop oracle", criterion_sobel_oracle, 0.0, true},
      {6, "corpus stats pipeline", criterion_stats_pipeline, 0.0, true},
      {7, "moment shape conformance", criterion_moment_shapes, 0.0, true},
      {8, "loss weighting contract", criterion_loss_contract, 0.0, true},
      {9, "stream decoupling", criterion_decoupling, 0.0, true},
      {10, "bias harness discrimination", criterion_bias_harness, 120.0, true},
      {11, "directional debias experiment (soft)", criterion_directional_experiment, 3600.0, false},
      {12, "train determinism", criterion_determinism, 0.0, true},
  };

  bool all_ok = true;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_s == 0.0 || dt <= c.limit_s;
    const bool pass = o.pass && in_time;
    std::printf("[CRITERION %02d] %s  %s (%s; %.1fs%s)\n", c.id, pass ? "PASS" : "FAIL", c.title,
                o.detail.c_str(), dt, in_time ? "" : " OVER TIME LIMIT");
    if (c.gated && !pass) all_ok = false;
    if (!c.gated) {
      std::printf("[CRITERION %02d] note: soft criterion, outcome recorded but not gated\n", c.id);
    }
    std::fflush(stdout);
  }
  std::printf("acceptance: %s\n", all_ok ? "all gated criteria passed" : "GATED FAILURES present");
  return all_ok ? 0 : 1;
}
