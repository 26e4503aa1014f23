#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "saelab/encoders.hpp"
#include "saelab/error.hpp"
#include "saelab/sae.hpp"

using namespace saelab;
namespace fs = std::filesystem;


TEST_CASE("init_model follows the initialization recipe") {
  RngStream rng(1);
  const SaeModel m = init_model(Arch::Spade, 2, 5, 0, rng);
  CHECK(m.dec == m.w);
  CHECK(m.lambda() == doctest::Approx(0.25));
  CHECK(softplus(m.lambda_raw) == doctest::Approx(0.25));
  for (double b : m.b_d) CHECK(b == 0.0);
  RngStream rng2(1);
  const SaeModel r = init_model(Arch::JumpRelu, 4, 5, 0, rng2);
  for (double t : r.theta) CHECK(t == 1e-3);
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(norm2(r.dec.column(j)) == doctest::Approx(1.0).epsilon(1e-12));
    // Decoder atoms point along the encoder columns.
    const double cosv = dot(r.dec.column(j), r.w.column(j)) / norm2(r.w.column(j));
    CHECK(cosv == doctest::Approx(1.0).epsilon(1e-12));
  }
  RngStream rng3(1);
  CHECK_THROWS_AS(init_model(Arch::TopK, 2, 4, 5, rng3), InvalidArgument);
}

TEST_CASE("softplus helpers invert each other") {
  for (double y : {1e-4, 0.25, 1.0, 7.5, 40.0}) CHECK(softplus(softplus_inverse(y)) == doctest::Approx(y).epsilon(1e-12));
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("relu with identity encoder scales the input") {
  RngStream rng(2);
  SaeModel m = init_model(Arch::Relu, 2, 2, 0, rng);
  m.w = Matrix::identity(2);
  const auto f = forward(m, std::vector<double>{0.8, 0.4});
  CHECK(f.z[0] == doctest::Approx(0.2));
  CHECK(f.z[1] == doctest::Approx(0.1));
}

TEST_CASE("spade codes have unit l1 norm") {
  RngStream rng(3);
  const SaeModel m = init_model(Arch::Spade, 4, 9, 0, rng);
  const Matrix x = sample_normal(rng, 50, 4, 0.0, 1.0);
  const Matrix z = encode_batch(m, x);
  for (std::size_t i = 0; i < 50; ++i) {
    double s = 0.0;
    for (double v : z.row(i)) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("batch encode and reconstruct agree with single-row forward") {
  for (Arch arch : {Arch::Relu, Arch::JumpRelu, Arch::TopK, Arch::Spade}) {
    RngStream rng(4);
    const SaeModel m = init_model(arch, 3, 7, 3, rng);
    const Matrix x = sample_normal(rng, 20, 3, 0.0, 2.0);
    const Matrix z = encode_batch(m, x), xh = reconstruct_batch(m, x);
    for (std::size_t i = 0; i < 20; ++i) {
      const auto f = forward(m, x.row(i));
      for (std::size_t j = 0; j < 7; ++j) CHECK(std::abs(f.z[j] - z(i, j)) < 1e-12);
      for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(f.x_hat[j] - xh(i, j)) < 1e-12);
    }
  }
}

TEST_CASE("regularizer values") {
  const std::vector<double> z{0.5, 0.0, 0.25};
  const std::vector<double> x{1.0, 0.0};
  const Matrix w{{1.0, 0.0, 0.0}, {0.0, 0.0, 2.0}};
  CHECK(regularizer(Arch::Relu, z, x, w) == 0.75);
  CHECK(regularizer(Arch::JumpRelu, z, x, w) == 2.0);
  CHECK(regularizer(Arch::TopK, z, x, w) == 0.0);
  // sum_i z_i ||x - W_i||^2 = 0.5 * 0 + 0.25 * (1 + 4)
  CHECK(regularizer(Arch::Spade, z, x, w) == doctest::Approx(1.25));
}

TEST_CASE("perfect reconstruction gives zero loss and zero gradients") {
  RngStream rng(5);
  SaeModel m = init_model(Arch::Relu, 2, 2, 0, rng);
  m.w = Matrix::identity(2);
  m.dec = Matrix{{4.0, 0.0}, {0.0, 4.0}};
  const Matrix batch{{0.5, 1.0}, {2.0, 0.3}};
  const auto lg = backward(m, batch, LossSettings{});
  CHECK(lg.loss.total == doctest::Approx(0.0).epsilon(1e-14));
  for (auto g : grad_blocks(lg.grads))
    for (double v : g) CHECK(std::abs(v) < 1e-12);
  CHECK_THROWS_AS(loss(m, Matrix(0, 2), LossSettings{}), InvalidArgument);
}

TEST_CASE("inactive latents receive no decoder gradient") {
  RngStream rng(6);
  SaeModel m = init_model(Arch::Relu, 2, 3, 0, rng);
  m.w = Matrix{{1.0, 0.0, -1.0}, {0.0, 1.0, -1.0}};
  const Matrix batch{{0.5, 1.0}, {2.0, 0.3}};
  const auto lg = backward(m, batch, LossSettings{});
  CHECK(lg.grads.dec(0, 2) == 0.0);
  CHECK(lg.grads.dec(1, 2) == 0.0);
  CHECK(lg.grads.dec(0, 0) != 0.0);
  CHECK(lg.fired == std::vector<bool>{true, true, false});
}

TEST_CASE("spade total loss is at least the mse") {
  RngStream rng(7);
  const SaeModel m = init_model(Arch::Spade, 3, 5, 0, rng);
  const Matrix batch = sample_normal(rng, 16, 3, 0.0, 1.0);
  LossSettings s;
  s.gamma = 0.5;
  const auto l = loss(m, batch, s);
  CHECK(l.total >= l.mse);
  CHECK(l.reg > 0.0);
}

TEST_CASE("topk aux loss") {
  RngStream rng(8);
  SaeModel m = init_model(Arch::TopK, 2, 2, 1, rng);
  const std::vector<double> x{1.0, 2.0};
  const std::vector<double> residual{0.3, 0.4};
  CHECK(aux_loss_topk(m, x, residual, 1) == 0.0);
  m.inactive_steps[1] = m.options.dead_window;
  CHECK(aux_loss_topk(m, x, std::vector<double>{0.0, 0.0}, 1) == 0.0);
  // Dead latent 1 points along the residual; its pre-activation is
  // (1/4) * W_1 . x = 0.2, so the aux reconstruction is 0.2 * r / |r|.
  m.w = Matrix{{1.0, 0.32}, {0.0, 0.24}};
  m.dec = Matrix{{1.0, 0.6}, {0.0, 0.8}};
  const double v = 0.25 * (0.32 * 1.0 + 0.24 * 2.0);
  const double expected = (0.5 - v) * (0.5 - v);
  const double aux = aux_loss_topk(m, x, residual, 1);
  CHECK(aux == doctest::Approx(expected).epsilon(1e-12));
  CHECK(aux < 0.25);
}

TEST_CASE("full-model gradients match finite differences") {
  for (Arch arch : {Arch::Relu, Arch::JumpRelu, Arch::TopK, Arch::Spade}) {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
      CAPTURE(seed);
      const auto r = gradcheck::finite_difference_check(arch, seed);
      CHECK(r.total_backward == doctest::Approx(r.total_forward).epsilon(1e-12));
      if (arch == Arch::TopK) CHECK(r.aux_loss > 0.0);
      for (const auto& rec : r.records) {
        INFO(to_string(arch) << " block " << rec.block << " coord " << rec.coord << " analytic " << rec.analytic
                             << " fd " << rec.numeric);
        CHECK(rec.rel_error < 1e-4);
      }
    }
  }
}

TEST_CASE("larger batches take the dense gradient path with the same result") {
  for (Arch arch : {Arch::Relu, Arch::TopK, Arch::Spade}) {
    RngStream rng(14);
    SaeModel m = init_model(arch, 5, 12, 6, rng);
    const Matrix batch = sample_normal(rng, 64, 5, 0.0, 1.0);
    LossSettings s;
    s.gamma = 0.1;
    const auto full = backward(m, batch, s);
    // Per-row accumulation: average of single-row gradients.
    SaeGrads acc = SaeGrads::zeros_like(m);
    for (std::size_t i = 0; i < 64; ++i) {
      const auto one = backward(m, batch.select_rows(std::vector<std::size_t>{i}), s);
      auto dst = grad_blocks(acc);
      const auto src = grad_blocks(one.grads);
      for (std::size_t b = 0; b < kParamBlocks; ++b)
        for (std::size_t j = 0; j < dst[b].size(); ++j) dst[b][j] += src[b][j] / 64.0;
    }
    const auto a = grad_blocks(full.grads);
    const auto e = grad_blocks(static_cast<const SaeGrads&>(acc));
    for (std::size_t b = 0; b < kParamBlocks; ++b)
      for (std::size_t j = 0; j < a[b].size(); ++j) CHECK(std::abs(a[b][j] - e[b][j]) < 1e-10);
  }
}

TEST_CASE("a small gradient step lowers the loss for relu and spade") {
  for (Arch arch : {Arch::Relu, Arch::Spade}) {
    RngStream rng(15);
    SaeModel m = gradcheck::random_model(arch, rng);
    const Matrix batch = gradcheck::sample_batch(m, rng, 16, 1);
    LossSettings s;
    s.gamma = 0.1;
    const auto lg = backward(m, batch, s);
    SaeModel stepped = m;
    auto p = param_blocks(stepped);
    const auto g = grad_blocks(lg.grads);
    for (std::size_t b = 0; b < kParamBlocks; ++b)
      for (std::size_t j = 0; j < p[b].size(); ++j) p[b][j] -= 1e-6 * g[b][j];
    CHECK(loss(stepped, batch, s).total < lg.loss.total);
  }
}

TEST_CASE("normalize_decoder") {
  RngStream rng(16);
  SaeModel m = init_model(Arch::Relu, 2, 3, 0, rng);
  m.dec = Matrix{{3.0, 0.0, 0.6}, {4.0, 0.0, 0.8}};
  const auto zero = normalize_decoder(m);
  CHECK(zero == std::vector<std::size_t>{1});
  CHECK(m.dec(0, 0) == doctest::Approx(0.6));
  CHECK(m.dec(1, 0) == doctest::Approx(0.8));
  CHECK(m.dec(0, 1) == 0.0);
  const Matrix before = m.dec;
  normalize_decoder(m);
  CHECK(max_abs_diff(before, m.dec) < 1e-15);
}

TEST_CASE("checkpoint round trip is exact") {
  for (Arch arch : {Arch::Relu, Arch::JumpRelu, Arch::TopK, Arch::Spade}) {
    RngStream rng(17);
    SaeModel m = gradcheck::random_model(arch, rng);
    const fs::path dir = fs::temp_directory_path() / ("saelab_ckpt_" + to_string(arch));
    fs::remove_all(dir);
    save_model(m, dir);
    CHECK(load_model(dir) == m);
    fs::remove_all(dir);
  }
  CHECK_THROWS_AS(load_model("no/such/checkpoint"), IoError);
  const fs::path bad = fs::temp_directory_path() / "saelab_ckpt_bad";
  fs::remove_all(bad);
  fs::create_directories(bad);
  std::ofstream(bad / "model.json") << "{not json";
  CHECK_THROWS_AS(load_model(bad), FormatError);
  fs::remove_all(bad);
}
