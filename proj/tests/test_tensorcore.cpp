#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "hymad/ops.hpp"
#include "hymad/optim.hpp"
#include "test_util.hpp"

using namespace hymad;
using namespace hymad::testing;

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from({2, 3}, std::vector<double>(5)), ShapeError);
  auto t = Tensor::zeros({3, 4}, true);
  CHECK(t.numel() == 12);
  CHECK_FALSE(t.has_grad());
  t.grad_buffer();
  CHECK(t.grad().size() == t.numel());
}

TEST_CASE("matmul") {
  std::mt19937_64 rng(1);
  auto b = random_tensor({2, 4}, rng);
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  CHECK(max_abs_diff(matmul(eye, b).data(), b.data()) == 0.0);

  auto z = matmul(Tensor::zeros({2, 3}), random_tensor({3, 4}, rng));
  CHECK(z.shape() == Shape{2, 4});
  CHECK(std::all_of(z.data().begin(), z.data().end(), [](double v) { return v == 0.0; }));

  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_tensor({3, 3}, rng), y = random_tensor({3, 3}, rng);
    auto expect = flatten(naive_matmul(to_mat(x), to_mat(y)));
    CHECK(max_abs_diff(matmul(x, y).data(), expect) <= 1e-12);
    auto expect_nt = flatten(naive_matmul(to_mat(x), naive_transpose(to_mat(y))));
    CHECK(max_abs_diff(matmul_nt(x, y).data(), expect_nt) <= 1e-12);
  }

  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("softmax_rows") {
  auto u = softmax_rows(Tensor::full({2, 5}, 3.7));
  for (double v : u.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));

  auto one = softmax_rows(Tensor::from({3, 1}, {-4, 0, 9}));
  for (double v : one.data()) CHECK(v == 1.0);

  auto p = softmax_rows(Tensor::from({1, 2}, {0.0, std::log(2.0)}));
  CHECK(std::fabs(p.at(0) - 1.0 / 3.0) <= 1e-15);
  CHECK(std::fabs(p.at(1) - 2.0 / 3.0) <= 1e-15);

  CHECK_THROWS_AS(softmax_rows(Tensor::from({1, 2}, {0.0, std::nan("")})), NumericError);

  SUBCASE("rows sum to one") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
      auto m = random_tensor({4, 7}, rng, -300.0, 300.0);
      auto s = softmax_rows(m);
      for (std::size_t r = 0; r < 4; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 7; ++c) {
          CHECK(s.at(r, c) >= 0.0);
          total += s.at(r, c);
        }
        CHECK(std::fabs(total - 1.0) <= 1e-9);
      }
    }
  }
}

TEST_CASE("attention") {
  std::mt19937_64 rng(3);
  SUBCASE("single key returns its value row") {
    auto q = random_tensor({5, 3}, rng), k = random_tensor({1, 3}, rng),
         v = random_tensor({1, 2}, rng);
    auto out = attention(q, k, v);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 2; ++c) CHECK(out.at(r, c) == v.at(c));
  }
  SUBCASE("zero query averages values") {
    auto k = random_tensor({6, 3}, rng), v = random_tensor({6, 2}, rng);
    auto out = attention(Tensor::zeros({2, 3}), k, v);
    for (std::size_t c = 0; c < 2; ++c) {
      double mean = 0.0;
      for (std::size_t r = 0; r < 6; ++r) mean += v.at(r, c);
      mean /= 6.0;
      for (std::size_t r = 0; r < 2; ++r) CHECK(std::fabs(out.at(r, c) - mean) <= 1e-15);
    }
  }
  SUBCASE("matches two-step oracle") {
    auto q = random_tensor({4, 2}, rng), k = random_tensor({4, 2}, rng),
         v = random_tensor({4, 2}, rng);
    auto expect = flatten(naive_attention(to_mat(q), to_mat(k), to_mat(v)));
    CHECK(max_abs_diff(attention(q, k, v).data(), expect) <= 1e-12);
  }
  SUBCASE("permuting keys and values together") {
    auto q = random_tensor({3, 4}, rng), k = random_tensor({5, 4}, rng),
         v = random_tensor({5, 3}, rng);
    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    std::vector<double> kp, vp;
    for (auto i : perm) {
      for (std::size_t c = 0; c < 4; ++c) kp.push_back(k.at(i, c));
      for (std::size_t c = 0; c < 3; ++c) vp.push_back(v.at(i, c));
    }
    auto a = attention(q, k, v);
    auto b = attention(q, Tensor::from({5, 4}, kp), Tensor::from({5, 3}, vp));
    CHECK(max_abs_diff(a.data(), b.data()) <= 1e-12);
  }
  CHECK_THROWS_AS(attention(Tensor::zeros({2, 3}), Tensor::zeros({2, 4}), Tensor::zeros({2, 4})),
                  ShapeError);
  CHECK_THROWS_AS(attention(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}), Tensor::zeros({3, 4})),
                  ShapeError);
}

TEST_CASE("rnn_forward") {
  SUBCASE("zero weights give zero states") {
    RnnParams p{Tensor::zeros({3, 3}), Tensor::zeros({3, 2}), Tensor::zeros({3})};
    std::mt19937_64 rng(4);
    auto h = rnn_forward(random_tensor({6, 2}, rng), p, Tensor::zeros({3}));
    for (double v : h.data()) CHECK(v == 0.0);
  }
  SUBCASE("scalar closed form") {
    RnnParams p{Tensor::zeros({1, 1}), Tensor::from({1, 1}, {1.0}), Tensor::zeros({1})};
    auto h = rnn_forward(Tensor::from({2, 1}, {1.0, -1.0}), p, Tensor::zeros({1}));
    CHECK(h.at(0) == std::tanh(1.0));
    CHECK(h.at(1) == std::tanh(-1.0));
  }
  SUBCASE("matches scalar-loop oracle") {
    std::mt19937_64 rng(5);
    const std::size_t T = 7, C = 3, H = 4;
    RnnParams p{random_tensor({H, H}, rng), random_tensor({H, C}, rng), random_tensor({H}, rng)};
    auto f = random_tensor({T, C}, rng);
    auto h0 = random_tensor({H}, rng);
    std::vector<double> prev(h0.data().begin(), h0.data().end()), expect;
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> next(H);
      for (std::size_t i = 0; i < H; ++i) {
        double z = p.b.at(i);
        for (std::size_t j = 0; j < H; ++j) z += p.w_h.at(i, j) * prev[j];
        for (std::size_t j = 0; j < C; ++j) z += p.w_x.at(i, j) * f.at(t, j);
        next[i] = std::tanh(z);
      }
      expect.insert(expect.end(), next.begin(), next.end());
      prev = next;
    }
    CHECK(max_abs_diff(rnn_forward(f, p, h0).data(), expect) <= 1e-12);
  }
  CHECK_THROWS_AS(rnn_forward(Tensor::zeros({4, 2}),
                              RnnParams{Tensor::zeros({3, 3}), Tensor::zeros({3, 5}), Tensor::zeros({3})},
                              Tensor::zeros({3})),
                  ShapeError);
}

TEST_CASE("dense") {
  std::mt19937_64 rng(6);
  auto x = random_tensor({3, 2}, rng);
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  CHECK(max_abs_diff(dense(x, eye, Tensor::zeros({2}), Activation::kLinear).data(), x.data()) == 0.0);
  auto r = dense(Tensor::from({1, 1}, {-1.0}), Tensor::from({1, 1}, {1.0}), Tensor::zeros({1}),
                 Activation::kRelu);
  CHECK(r.item() == 0.0);

  auto w = random_tensor({2, 2}, rng), b = random_tensor({2}, rng);
  auto expect = naive_matmul(to_mat(x), to_mat(w));
  for (auto& row : expect)
    for (std::size_t c = 0; c < 2; ++c) row[c] += b.at(c);
  CHECK(max_abs_diff(dense(x, w, b, Activation::kLinear).data(), flatten(expect)) <= 1e-14);
}

TEST_CASE("bce_with_logits") {
  CHECK(std::fabs(bce_with_logits(Tensor::from({1, 1}, {0.0}), Tensor::from({1, 1}, {1.0})).item() -
                  std::log(2.0)) <= 1e-15);
  CHECK(bce_with_logits(Tensor::from({1, 1}, {30.0}), Tensor::from({1, 1}, {1.0})).item() <= 1e-12);
  CHECK(std::fabs(bce_with_logits(Tensor::from({1, 2}, {0.0, 0.0}), Tensor::from({1, 2}, {1.0, 0.0}))
                      .item() -
                  std::log(2.0)) <= 1e-15);
  CHECK_THROWS_AS(bce_with_logits(Tensor::from({1, 1}, {0.0}), Tensor::from({1, 1}, {0.5})),
                  ValidationError);
  CHECK_THROWS_AS(bce_with_logits(Tensor::zeros({1, 2}), Tensor::zeros({1, 3})), ShapeError);

  SUBCASE("finite at extreme logits and never negative") {
    std::mt19937_64 rng(8);
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 200; ++trial) {
      auto z = random_tensor({2, 4}, rng, -200.0, 200.0);
      std::vector<double> y(8);
      for (auto& v : y) v = coin(rng) ? 1.0 : 0.0;
      const double loss = bce_with_logits(z, Tensor::from({2, 4}, y)).item();
      CHECK(std::isfinite(loss));
      CHECK(loss >= 0.0);
    }
    // Moderate logits agree with the literal sigmoid-then-log form.
    auto z = random_tensor({1, 4}, rng, -5.0, 5.0);
    std::vector<double> y{1, 0, 1, 0};
    double expect = 0.0;
    for (std::size_t i = 0; i < 4; ++i) expect += naive_bce(z.at(i), y[i]) / 4.0;
    CHECK(std::fabs(bce_with_logits(z, Tensor::from({1, 4}, y)).item() - expect) <= 1e-13);
  }
}

TEST_CASE("backward") {
  std::mt19937_64 rng(9);
  auto x = random_tensor({3, 2}, rng, -1.0, 1.0, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  auto s = Tensor::scalar(1.7, true);
  backward(mul(s, s));
  CHECK(s.grad()[0] == doctest::Approx(3.4));

  SUBCASE("accumulates across uses and calls") {
    auto a = Tensor::scalar(2.0, true);
    backward(add(a, scale(a, 3.0)));
    CHECK(a.grad()[0] == 4.0);
    backward(a.reshape({1}));
    CHECK(a.grad()[0] == 5.0);
    a.zero_grad();
    CHECK(a.grad()[0] == 0.0);
  }

  CHECK_THROWS_AS(backward(x), UsageError);
  CHECK_THROWS_AS(backward(Tensor::scalar(1.0)), UsageError);

  SUBCASE("no-grad mode records nothing") {
    NoGradGuard guard;
    auto y = scale(x, 2.0);
    CHECK_FALSE(y.requires_grad());
  }
}

TEST_CASE("grad_check") {
  std::mt19937_64 rng(10);
  SUBCASE("quadratic") {
    auto a = random_tensor({4}, rng, -1, 1, true);
    auto report = grad_check([&] { return sum(mul(a, a)); }, {{"a", a}});
    CHECK(report.max_rel_err <= 1e-8);
  }
  SUBCASE("tanh chain") {
    auto a = random_tensor({3, 3}, rng, -1, 1, true);
    auto w = random_tensor({3, 2}, rng, -1, 1, true);
    auto report = grad_check([&] { return sum(tanh(matmul(tanh(a), w))); }, {{"a", a}, {"w", w}});
    CHECK(report.max_rel_err <= 1e-6);
    CHECK(report.per_param.size() == 2);
  }
  SUBCASE("composed graph over every primitive") {
    auto q = random_tensor({4, 3}, rng, -1, 1, true);
    auto k = random_tensor({5, 3}, rng, -1, 1, true);
    auto v = random_tensor({5, 2}, rng, -1, 1, true);
    auto gamma = random_tensor({2}, rng, 0.5, 1.5, true);
    auto beta = random_tensor({2}, rng, -0.5, 0.5, true);
    auto w = random_tensor({4, 3}, rng, -1, 1, true);
    auto b = random_tensor({3}, rng, -1, 1, true);
    RnnParams rp{random_tensor({3, 3}, rng, -0.5, 0.5, true), random_tensor({3, 4}, rng, -1, 1, true),
                 random_tensor({3}, rng, -0.1, 0.1, true)};
    auto h0 = random_tensor({3}, rng, -0.5, 0.5, true);
    auto targets = Tensor::from({1, 3}, {1, 0, 1});
    // Direct readout of the attention output keeps every q/k/v gradient
    // well above finite-difference roundoff.
    auto readout = random_tensor({4, 2}, rng, -1, 1);
    auto fn = [&] {
      auto att = attention(q, k, v);                                   // 4x2
      auto ln = layer_norm_rows(att, gamma, beta);                     // 4x2
      auto wide = concat_cols(ln, slice_cols(q, 0, 2));                // 4x4
      auto seq = transpose(wide);                                      // 4x4
      auto states = rnn_forward(seq, rp, h0);                          // 4x3
      auto pooled = mean_rows(add(states, relu(dense(seq, w, b, Activation::kLinear))));  // 1x3
      auto logits = sub(scale(pooled, 2.0), abs(mean_rows(dense(seq, w, b, Activation::kRelu))));
      return add(add(bce_with_logits(logits, targets), mean(mul(softmax_rows(logits), logits))),
                 sum(mul(att, readout)));
    };
    auto report = grad_check(fn, {{"q", q}, {"k", k}, {"v", v}, {"gamma", gamma}, {"beta", beta},
                                  {"w", w}, {"b", b}, {"w_h", rp.w_h}, {"w_x", rp.w_x},
                                  {"rnn_b", rp.b}, {"h0", h0}});
    for (const auto& e : report.per_param) {
      INFO(e.name, " worst@", e.worst_index, " analytic=", e.worst_analytic,
           " numeric=", e.worst_numeric);
      CHECK(e.max_rel_err <= 1e-4);
    }
  }
  SUBCASE("convolution and pooling") {
    auto x = random_tensor({40}, rng, -1, 1, true);
    auto kern = random_tensor({3, 7}, rng, -1, 1, true);
    auto report = grad_check(
        [&] {
          return add(sum(mul(conv1d_same_pooled(x, kern, 4), conv1d_same_pooled(x, kern, 4))),
                     sum(tanh(avg_pool_cols(conv1d_same(x, kern), 5))));
        },
        {{"x", x}, {"kernels", kern}});
    CHECK(report.max_rel_err <= 1e-6);
  }
  CHECK_THROWS_AS(grad_check([] { return Tensor::scalar(1.0); }, {}, 0.0), ValidationError);
}

TEST_CASE("convolution") {
  std::mt19937_64 rng(11);
  SUBCASE("matches double-loop oracle") {
    auto x = random_tensor({64}, rng);
    auto kern = random_tensor({4, 17}, rng);
    auto expect = flatten(naive_conv_same(std::vector<double>(x.data().begin(), x.data().end()),
                                          to_mat(kern)));
    auto y = conv1d_same(x, kern);
    CHECK(y.shape() == Shape{4, 64});
    CHECK(max_abs_diff(y.data(), expect) <= 1e-10);
  }
  SUBCASE("fused pooling equals pool of convolution") {
    for (std::size_t stride : {1u, 2u, 4u, 16u, 7u}) {
      auto x = random_tensor({160}, rng);
      auto kern = random_tensor({3, 33}, rng);
      auto fused = conv1d_same_pooled(x, kern, stride);
      auto composed = avg_pool_cols(conv1d_same(x, kern), stride);
      CHECK(fused.shape() == composed.shape());
      CHECK(max_abs_diff(fused.data(), composed.data()) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(conv1d_same(Tensor::zeros({10}), Tensor::zeros({1, 11})), ValidationError);
  CHECK_THROWS_AS(conv1d_same(Tensor::zeros({10}), Tensor::zeros({1, 4})), ValidationError);
}

TEST_CASE("adamw") {
  SUBCASE("zero grad and no decay leaves params unchanged") {
    auto p = Tensor::from({2}, {0.3, -1.2}, true);
    p.grad_buffer();
    AdamW opt({p}, {.lr = 0.01, .weight_decay = 0.0});
    opt.step();
    CHECK(p.at(0) == 0.3);
    CHECK(p.at(1) == -1.2);
  }
  SUBCASE("one-step hand trace") {
    auto p = Tensor::scalar(1.0, true);
    p.grad_buffer()[0] = 1.0;
    AdamW opt({p}, {.lr = 0.01, .weight_decay = 0.0});
    opt.step();
    CHECK(std::fabs(p.item() - (1.0 - 0.01 / (1.0 + 1e-8))) <= 1e-15);
    CHECK(opt.state().step == 1);
  }
  SUBCASE("decoupled decay") {
    auto p = Tensor::scalar(2.0, true);
    p.grad_buffer();
    AdamW opt({p}, {.lr = 0.01, .weight_decay = 0.1});
    opt.step();
    CHECK(std::fabs(p.item() - 2.0 * (1.0 - 0.001)) <= 1e-15);
  }
  SUBCASE("lr = 0 is bit-identical") {
    std::mt19937_64 rng(12);
    auto p = random_tensor({5}, rng, -3, 3, true);
    std::vector<double> before(p.data().begin(), p.data().end());
    AdamW opt({p}, {.lr = 0.0});
    for (int i = 0; i < 10; ++i) {
      auto& g = p.grad_buffer();
      for (auto& v : g) v = std::uniform_real_distribution<double>(-5, 5)(rng);
      opt.step();
    }
    CHECK(std::equal(before.begin(), before.end(), p.data().begin()));
  }
  SUBCASE("non-finite gradient aborts without updating") {
    auto p = Tensor::from({2}, {1.0, 2.0}, true);
    p.grad_buffer() = {0.5, std::nan("")};
    AdamW opt({p}, {});
    CHECK_THROWS_AS(opt.step(), NumericError);
    CHECK(p.at(0) == 1.0);
    CHECK(opt.state().step == 0);
  }
}
