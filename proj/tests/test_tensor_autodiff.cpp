#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "semformer/autodiff.hpp"
#include "semformer/rng.hpp"
#include "semformer/tensor.hpp"
#include "test_support.hpp"

using namespace semformer;
using namespace semformer::testing;
namespace ad = semformer::ad;

TEST_CASE("tensor basics") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    t(1, 2) = 5.0;
    CHECK(t[5] == 5.0);
    CHECK_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
    Tensor r = t.reshaped({3, 2});
    CHECK(r(2, 1) == 5.0);
    CHECK(Tensor::scalar(2.5)[0] == 2.5);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), std::invalid_argument);
}

TEST_CASE("rng determinism and ranges") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.uniform() == b.uniform());
    }
    Rng c(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = c.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const std::int64_t k = c.uniform_int(3, 9);
        CHECK(k >= 3);
        CHECK(k <= 9);
    }
}

TEST_CASE("forward values of basic ops") {
    ad::Var a = ad::constant(Tensor({2, 2}, {1, 2, 3, 4}));
    ad::Var b = ad::constant(Tensor({2, 2}, {5, 6, 7, 8}));
    CHECK(ad::add(a, b)->value[3] == 12);
    CHECK(ad::sub(b, a)->value[0] == 4);
    CHECK(ad::mul(a, b)->value[2] == 21);
    CHECK(ad::matmul(a, b)->value[0] == doctest::Approx(19));  // 1*5+2*7
    CHECK(ad::transpose(a)->value[1] == 3);
    CHECK(ad::sum_all(a)->value[0] == 10);
    CHECK(ad::mean_all(a)->value[0] == 2.5);
    CHECK(ad::relu(ad::constant(Tensor({2}, {-1, 2})))->value[0] == 0);
    CHECK(ad::sigmoid(ad::constant(Tensor({1}, {0})))->value[0] == doctest::Approx(0.5));

    // softmax rows sum to 1
    Rng rng(3);
    ad::Var s = ad::softmax_rows(ad::constant(random_tensor({4, 7}, rng, -3, 3)));
    for (int i = 0; i < 4; ++i) {
        double rowsum = 0;
        for (int j = 0; j < 7; ++j) rowsum += s->value(i, j);
        CHECK(rowsum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("gradients: arithmetic and activations") {
    Rng rng(11);
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor y = random_tensor({3, 4}, rng);

    CHECK(gradient_check([&](const ad::Var& v) { return ad::sum_all(ad::mul(v, ad::constant(y))); },
                         x) < 1e-7);
    CHECK(gradient_check(
              [&](const ad::Var& v) { return ad::sum_all(ad::square(ad::add(v, ad::constant(y)))); },
              x) < 1e-7);
    CHECK(gradient_check([&](const ad::Var& v) { return ad::mean_all(ad::gelu(v)); }, x) < 1e-7);
    CHECK(gradient_check([&](const ad::Var& v) { return ad::mean_all(ad::sigmoid(v)); }, x) < 1e-7);
    // keep relu inputs away from the kink
    Tensor shifted = x;
    for (double& v : shifted.vec()) v += (v >= 0 ? 0.5 : -0.5);
    CHECK(gradient_check([&](const ad::Var& v) { return ad::sum_all(ad::relu(v)); }, shifted) <
          1e-7);
    const Tensor pos = random_tensor({5}, rng, 0.5, 2.0);
    CHECK(gradient_check([&](const ad::Var& v) { return ad::sum_all(ad::log_op(v)); }, pos) < 1e-7);
    CHECK(gradient_check([&](const ad::Var& v) { return ad::sum_all(ad::sqrt_op(v)); }, pos) <
          1e-7);
    CHECK(gradient_check([&](const ad::Var& v) { return ad::sum_all(ad::reciprocal(v)); }, pos) <
          1e-7);
}

TEST_CASE("gradients: matmul, slicing, concat, transpose, reshape") {
    Rng rng(13);
    const Tensor a = random_tensor({3, 5}, rng);
    const Tensor b = random_tensor({5, 4}, rng);
    const Tensor w = random_tensor({5}, rng);

    CHECK(gradient_check_multi(
              [&](const std::vector<ad::Var>& vs) {
                  return ad::sum_all(ad::square(ad::matmul(vs[0], vs[1])));
              },
              {a, b}) < 1e-6);
    CHECK(gradient_check(
              [&](const ad::Var& v) {
                  return ad::sum_all(ad::square(ad::add_row_broadcast(v, ad::constant(w))));
              },
              a) < 1e-7);
    CHECK(gradient_check(
              [&](const ad::Var& v) {
                  return ad::sum_all(ad::square(ad::slice_rows(v, 1, 3)));
              },
              a) < 1e-7);
    CHECK(gradient_check(
              [&](const ad::Var& v) {
                  return ad::sum_all(ad::square(ad::slice_cols(v, 2, 5)));
              },
              a) < 1e-7);
    CHECK(gradient_check(
              [&](const ad::Var& v) {
                  auto parts = std::vector<ad::Var>{ad::slice_rows(v, 0, 1), ad::slice_rows(v, 1, 3)};
                  return ad::sum_all(ad::square(ad::concat_rows(parts)));
              },
              a) < 1e-7);
    CHECK(gradient_check(
              [&](const ad::Var& v) {
                  auto parts = std::vector<ad::Var>{ad::slice_cols(v, 0, 2), ad::slice_cols(v, 2, 5)};
                  return ad::sum_all(ad::square(ad::concat_cols(parts)));
              },
              a) < 1e-7);
    CHECK(gradient_check(
              [&](const ad::Var& v) { return ad::sum_all(ad::square(ad::transpose(v))); }, a) <
          1e-7);
    CHECK(gradient_check(
              [&](const ad::Var& v) {
                  return ad::sum_all(ad::square(ad::reshape(v, {5, 3})));
              },
              a) < 1e-7);
    const Tensor m = random_tensor({3, 1}, rng, 0.1, 0.9);
    CHECK(gradient_check_multi(
              [&](const std::vector<ad::Var>& vs) {
                  return ad::sum_all(ad::square(ad::mul_col_broadcast(vs[0], vs[1])));
              },
              {a, m}) < 1e-7);
}

TEST_CASE("gradients: softmax, layer_norm, reductions") {
    Rng rng(17);
    const Tensor x = random_tensor({4, 6}, rng, -2, 2);
    const Tensor gamma = random_tensor({6}, rng, 0.5, 1.5);
    const Tensor beta = random_tensor({6}, rng, -0.3, 0.3);
    const Tensor post = random_tensor({4, 6}, rng);

    CHECK(gradient_check(
              [&](const ad::Var& v) {
                  return ad::sum_all(ad::mul(ad::softmax_rows(v), ad::constant(post)));
              },
              x) < 1e-6);
    CHECK(gradient_check_multi(
              [&](const std::vector<ad::Var>& vs) {
                  return ad::sum_all(
                      ad::mul(ad::layer_norm(vs[0], vs[1], vs[2]), ad::constant(post)));
              },
              {x, gamma, beta}) < 1e-6);
    CHECK(gradient_check([&](const ad::Var& v) { return ad::sum_all(ad::square(ad::sum_rows(v))); },
                         x) < 1e-7);
    CHECK(gradient_check(
              [&](const ad::Var& v) { return ad::sum_all(ad::square(ad::mean_rows(v))); }, x) <
          1e-7);
    // max-based ops: random values make ties measure-zero
    CHECK(gradient_check([&](const ad::Var& v) { return ad::sum_all(ad::square(ad::max_rows(v))); },
                         x) < 1e-6);
    CHECK(gradient_check(
              [&](const ad::Var& v) {
                  return ad::sum_all(ad::square(ad::rowwise_max_excluding(v)));
              },
              x) < 1e-6);
}

TEST_CASE("rowwise_max_excluding semantics") {
    // K=2: N_1 = M_2 and N_2 = M_1
    Tensor m({2, 3}, {0.1, 0.5, 0.9, 0.4, 0.2, 0.6});
    ad::Var n = ad::rowwise_max_excluding(ad::constant(m));
    CHECK(n->value(0, 0) == 0.4);
    CHECK(n->value(0, 2) == 0.6);
    CHECK(n->value(1, 1) == 0.5);
    // single row -> zeros (empty max convention)
    ad::Var single = ad::rowwise_max_excluding(ad::constant(Tensor({1, 3}, {0.3, 0.4, 0.5})));
    for (int j = 0; j < 3; ++j) CHECK(single->value(0, j) == 0.0);
    // three rows: max over the two others
    Tensor m3({3, 1}, {0.2, 0.9, 0.5});
    ad::Var n3 = ad::rowwise_max_excluding(ad::constant(m3));
    CHECK(n3->value(0, 0) == 0.9);
    CHECK(n3->value(1, 0) == 0.5);
    CHECK(n3->value(2, 0) == 0.9);
}

TEST_CASE("gradients: bilinear upsample and patch ops") {
    Rng rng(19);
    const Tensor small = random_tensor({3, 4}, rng, 0, 1);
    CHECK(gradient_check(
              [&](const ad::Var& v) {
                  return ad::sum_all(ad::square(ad::bilinear_upsample(v, 7, 9)));
              },
              small) < 1e-7);

    // FD cancellation over a 768-term reduction caps the attainable
    // precision here; the round-trip check below is exact.
    const Tensor img = random_tensor({16 * 16, 3}, rng, 0, 1);
    CHECK(gradient_check(
              [&](const ad::Var& v) {
                  return ad::sum_all(ad::square(ad::extract_patches(v, 16, 16, 8)));
              },
              img) < 1e-5);
    const Tensor patches = random_tensor({4, 8 * 8 * 3}, rng);
    CHECK(gradient_check(
              [&](const ad::Var& v) {
                  return ad::sum_all(ad::square(ad::tile_patches(v, 16, 16, 8)));
              },
              patches) < 1e-5);

    // patch extraction and tiling are inverse permutations
    ad::Var round =
        ad::tile_patches(ad::extract_patches(ad::constant(img), 16, 16, 8), 16, 16, 8);
    for (std::int64_t i = 0; i < img.numel(); ++i) CHECK(round->value[i] == img[i]);
}

TEST_CASE("bilinear upsample endpoints") {
    // constant map stays constant
    ad::Var c = ad::bilinear_upsample(ad::constant(Tensor::full({2, 2}, 0.7)), 8, 8);
    for (std::int64_t i = 0; i < 64; ++i) CHECK(c->value[i] == doctest::Approx(0.7));
    // identity when sizes match
    Rng rng(5);
    const Tensor x = random_tensor({4, 4}, rng);
    ad::Var same = ad::bilinear_upsample(ad::constant(x), 4, 4);
    for (std::int64_t i = 0; i < 16; ++i) CHECK(same->value[i] == doctest::Approx(x[i]));
}

TEST_CASE("backward twice on separate graphs is consistent") {
    Rng rng(23);
    const Tensor x = random_tensor({4, 4}, rng);
    auto run = [&]() {
        ad::Var v = ad::leaf(x, true);
        ad::Var loss = ad::sum_all(ad::square(ad::matmul(v, v)));
        ad::backward(loss);
        return v->grad_or_zero();
    };
    const Tensor g1 = run();
    const Tensor g2 = run();
    for (std::int64_t i = 0; i < g1.numel(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("grad accumulates over reused subexpression") {
    // f = sum(x) + sum(x) -> grad 2 everywhere
    ad::Var v = ad::leaf(Tensor::full({3}, 1.0), true);
    ad::Var s = ad::sum_all(v);
    ad::backward(ad::add(s, s));
    for (int i = 0; i < 3; ++i) CHECK(v->grad_or_zero()[i] == 2.0);
}

TEST_CASE("clamp gradient gating") {
    ad::Var v = ad::leaf(Tensor({3}, {-0.5, 0.5, 1.5}), true);
    ad::backward(ad::sum_all(ad::clamp(v, 0.0, 1.0)));
    CHECK(v->grad_or_zero()[0] == 0.0);
    CHECK(v->grad_or_zero()[1] == 1.0);
    CHECK(v->grad_or_zero()[2] == 0.0);
}
