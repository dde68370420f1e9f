#include <catch2/catch_amalgamated.hpp>

#include "pixelvol/ndiff/adam.hpp"
#include "pixelvol/ndiff/checkpoint.hpp"
#include "pixelvol/ndiff/finite_diff.hpp"
#include "pixelvol/ndiff/ops.hpp"

using namespace pixelvol;
using namespace pixelvol::ndiff;

namespace {

// Checks the tape gradient of a scalar functional against central finite
// differences on every element of every input.
template <class BuildFn>
double grad_check(const std::vector<Array<double>>& inputs, BuildFn&& build, double h = 1e-6) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& a : inputs) vars.push_back(tape.leaf(a.with_requires_grad(true)));
  Var<double> loss = build(tape, vars);
  tape.backward(loss);

  double worst = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto analytic = tape.grad(vars[k]).to_vector();
    auto numeric = numeric_gradient(
        [&](const Array<double>& perturbed) {
          Tape<double> t2;
          std::vector<Var<double>> vs;
          for (size_t j = 0; j < inputs.size(); ++j)
            vs.push_back(t2.leaf(j == k ? perturbed : inputs[j]));
          return t2.value(build(t2, vs))[0];
        },
        inputs[k], h);
    worst = std::max(worst, max_relative_error(std::span<const double>(analytic),
                                               std::span<const double>(numeric)));
  }
  return worst;
}

Array<double> random_array(Shape shape, util::Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Array<double>::uniform(std::move(shape), rng, lo, hi);
}

}  // namespace

TEST_CASE("matmul forward identities") {
  Tape<double> tape;
  auto I2 = tape.constant(Array<double>({2, 2}, {1, 0, 0, 1}));
  auto M = tape.constant(Array<double>({2, 2}, {1, 2, 3, 4}));
  auto P = matmul(I2, M);
  CHECK(tape.value(P).to_vector() == std::vector<double>{1, 2, 3, 4});

  auto a = tape.constant(Array<double>({1, 2}, {1, 0}));
  auto b = tape.constant(Array<double>({2, 1}, {0, 5}));
  CHECK(tape.value(matmul(a, b)).to_vector() == std::vector<double>{0});

  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
}

TEST_CASE("matmul gradient vs finite differences") {
  util::Rng rng(11);
  auto A = random_array({3, 4}, rng);
  auto B = random_array({4, 2}, rng);
  double err = grad_check({A, B}, [](Tape<double>& t, std::vector<Var<double>>& v) {
    return reduce_sum(square(matmul(v[0], v[1])));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("conv2d trivial cases") {
  Tape<double> tape;
  auto x = tape.constant(Array<double>::full({1, 3, 3}, 1.0));
  auto w = tape.constant(Array<double>({1, 1, 1, 1}, {2.0}));
  auto y = conv2d(x, w, 1, 0);
  CHECK(tape.value(y).shape() == Shape{1, 3, 3});
  for (double v : tape.value(y).values()) CHECK(v == 2.0);

  // Impulse response: under the cross-correlation convention the output patch
  // around the delta holds the kernel mirrored in both axes.
  util::Rng rng(5);
  auto kernel = random_array({1, 1, 3, 3}, rng);
  std::vector<double> delta(25, 0.0);
  delta[2 * 5 + 2] = 1.0;
  auto xd = tape.constant(Array<double>({1, 5, 5}, delta));
  auto wk = tape.constant(kernel);
  auto yk = conv2d(xd, wk, 1, 1);
  const auto& out = tape.value(yk);
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      CHECK(out[(2 + dy) * 5 + (2 + dx)] ==
            Catch::Approx(kernel[(1 - dy) * 3 + (1 - dx)]).margin(1e-15));

  CHECK_THROWS_AS(conv2d(x, tape.constant(Array<double>({1, 1, 2, 2}, {1, 1, 1, 1})), 1, 0),
                  std::invalid_argument);
  // 4x4 input, k=3, stride 2, pad 0 -> non-integral extent
  auto x4 = tape.constant(Array<double>::full({1, 4, 4}, 1.0));
  auto w3 = tape.constant(random_array({1, 1, 3, 3}, rng));
  CHECK_THROWS_AS(conv2d(x4, w3, 2, 0), std::invalid_argument);
  auto wrong_ch = tape.constant(random_array({1, 2, 3, 3}, rng));
  CHECK_THROWS_AS(conv2d(x, wrong_ch, 1, 1), std::invalid_argument);
}

TEST_CASE("conv2d gradient vs finite differences") {
  util::Rng rng(7);
  auto x = random_array({2, 6, 5}, rng);
  auto w = random_array({3, 2, 3, 3}, rng);
  auto b = random_array({3}, rng);
  double err = grad_check({x, w, b}, [](Tape<double>& t, std::vector<Var<double>>& v) {
    return reduce_sum(square(conv2d(v[0], v[1], v[2], 1, 1)));
  });
  CHECK(err < 1e-5);

  // strided
  auto xs = random_array({1, 7, 7}, rng);
  auto ws = random_array({2, 1, 3, 3}, rng);
  double err2 = grad_check({xs, ws}, [](Tape<double>& t, std::vector<Var<double>>& v) {
    return reduce_sum(square(conv2d(v[0], v[1], 2, 1)));
  });
  CHECK(err2 < 1e-5);
}

TEST_CASE("upsample2x") {
  Tape<double> tape;
  auto c = tape.constant(Array<double>::full({2, 3, 3}, 0.7));
  for (double v : tape.value(upsample2x(c)).values()) CHECK(v == Catch::Approx(0.7).margin(1e-15));

  auto one = tape.constant(Array<double>({1, 1, 1}, {4.2}));
  auto up = upsample2x(one);
  CHECK(tape.value(up).shape() == Shape{1, 2, 2});
  for (double v : tape.value(up).values()) CHECK(v == 4.2);

  util::Rng rng(3);
  auto x = random_array({2, 3, 3}, rng);
  double err = grad_check({x}, [](Tape<double>& t, std::vector<Var<double>>& v) {
    return reduce_sum(square(upsample2x(v[0])));
  });
  CHECK(err < 1e-5);
}

TEST_CASE("pointwise forward values") {
  Tape<double> tape;
  auto x = tape.constant(Array<double>({2}, {-1.0, 2.0}));
  auto r = relu(x);
  CHECK(tape.value(r).to_vector() == std::vector<double>{0.0, 2.0});

  auto z = tape.constant(Array<double>::scalar(0.0));
  CHECK(tape.value(sigmoid(z))[0] == 0.5);
  CHECK(tape.value(softplus(z))[0] == Catch::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(tape.value(exp_op(z))[0] == 1.0);
  CHECK(tape.value(negate(x)).to_vector() == std::vector<double>{1.0, -2.0});
}

TEST_CASE("softplus gradient at -3, 0, 3") {
  for (double x0 : {-3.0, 0.0, 3.0}) {
    double err = grad_check({Array<double>::scalar(x0)},
                            [](Tape<double>& t, std::vector<Var<double>>& v) {
                              return reduce_sum(softplus(v[0]));
                            });
    CHECK(err < 1e-6);
  }
}

TEST_CASE("pointwise gradients vs finite differences") {
  util::Rng rng(19);
  // keep relu inputs away from the kink
  std::vector<double> vals;
  for (int i = 0; i < 12; ++i) {
    double v = rng.uniform(-2.0, 2.0);
    if (std::abs(v) < 0.1) v += v < 0 ? -0.1 : 0.1;
    vals.push_back(v);
  }
  Array<double> x({3, 4}, vals);
  auto builders = std::vector<std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>>{
      [](Tape<double>& t, auto& v) { return reduce_sum(relu(v[0])); },
      [](Tape<double>& t, auto& v) { return reduce_sum(sigmoid(v[0])); },
      [](Tape<double>& t, auto& v) { return reduce_sum(exp_op(v[0])); },
      [](Tape<double>& t, auto& v) { return reduce_sum(square(v[0])); },
      [](Tape<double>& t, auto& v) { return reduce_sum(clamp(v[0], -1.5, 1.5)); },
  };
  for (auto& b : builders) CHECK(grad_check({x}, b) < 1e-6);
}

TEST_CASE("broadcast add and mul") {
  Tape<double> tape;
  auto m = tape.leaf(Array<double>({2, 3}, {1, 2, 3, 4, 5, 6}).with_requires_grad(true));
  auto row = tape.leaf(Array<double>({3}, {10, 20, 30}).with_requires_grad(true));
  auto s = add(m, row);
  CHECK(tape.value(s).to_vector() == std::vector<double>{11, 22, 33, 14, 25, 36});
  tape.backward(reduce_sum(s));
  CHECK(tape.grad(row).to_vector() == std::vector<double>{2, 2, 2});

  auto bad = tape.constant(Array<double>({2}, {1, 2}));
  CHECK_THROWS_AS(add(m, bad), std::invalid_argument);

  util::Rng rng(23);
  auto a = random_array({4, 3}, rng);
  auto b = random_array({3}, rng);
  double err = grad_check({a, b}, [](Tape<double>& t, std::vector<Var<double>>& v) {
    return reduce_sum(square(mul(v[0], v[1])));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("reductions") {
  Tape<double> tape;
  auto x = tape.constant(Array<double>({3}, {1, 2, 3}));
  CHECK(tape.value(reduce_sum(x))[0] == 6.0);

  auto c = tape.constant(Array<double>::full({4, 5}, 2.5));
  for (int axis : {0, 1})
    for (double v : tape.value(reduce_mean(c, axis)).values()) CHECK(v == 2.5);
  CHECK_THROWS_AS(reduce_sum(c, 2), std::invalid_argument);

  // gradient of mean is uniform 1/n
  Tape<double> t2;
  auto y = t2.leaf(Array<double>({5}, {1, 2, 3, 4, 5}).with_requires_grad(true));
  t2.backward(reduce_mean(y));
  Array<double> gy = t2.grad(y);
  for (double g : gy.values()) CHECK(g == Catch::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("concat and narrow") {
  Tape<double> tape;
  auto a = tape.constant(Array<double>({1, 1}, {1}));
  auto b = tape.constant(Array<double>({1, 1}, {2}));
  auto single = concat<double>({a}, 1);
  CHECK(tape.value(single).to_vector() == std::vector<double>{1});
  auto ab = concat<double>({a, b}, 1);
  CHECK(tape.value(ab).shape() == Shape{1, 2});
  CHECK(tape.value(ab).to_vector() == std::vector<double>{1, 2});

  auto bad = tape.constant(Array<double>({2, 1}, {1, 2}));
  CHECK_THROWS_AS(concat<double>({a, bad}, 1), std::invalid_argument);

  // slice(concat(xs)) == xs, and gradients route back to the right parts
  util::Rng rng(31);
  auto p0 = random_array({2, 3}, rng);
  auto p1 = random_array({2, 2}, rng);
  Tape<double> t2;
  auto v0 = t2.leaf(p0.with_requires_grad(true));
  auto v1 = t2.leaf(p1.with_requires_grad(true));
  auto cat = concat<double>({v0, v1}, 1);
  auto back0 = columns(cat, 0, 3);
  auto back1 = columns(cat, 3, 5);
  CHECK(t2.value(back0).to_vector() == p0.to_vector());
  CHECK(t2.value(back1).to_vector() == p1.to_vector());
  double err = grad_check({p0, p1}, [](Tape<double>& t, std::vector<Var<double>>& v) {
    auto cat = concat<double>({v[0], v[1]}, 1);
    return reduce_sum(square(columns(cat, 1, 4)));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("backward basics") {
  Tape<double> tape;
  auto w = tape.leaf(Array<double>::scalar(3.0).with_requires_grad(true));
  auto loss = square(w);
  tape.backward(loss);
  CHECK(tape.grad(w)[0] == 6.0);

  // fan-out accumulates
  Tape<double> t2;
  auto u = t2.leaf(Array<double>::scalar(2.0).with_requires_grad(true));
  auto l2 = add(square(u), scale_add(u, 4.0));  // u^2 + 4u -> 2u + 4 = 8
  t2.backward(l2);
  CHECK(t2.grad(u)[0] == 8.0);

  // unreachable parameters get zeros
  auto orphan = t2.leaf(Array<double>::scalar(1.0).with_requires_grad(true));
  CHECK(t2.grad(orphan).to_vector() == std::vector<double>{0.0});

  auto vec = t2.constant(Array<double>({2}, {1, 2}));
  CHECK_THROWS_AS(t2.backward(vec), std::invalid_argument);
}

TEST_CASE("gradient accumulation is insertion-order independent for independent branches") {
  util::Rng rng(41);
  auto a = random_array({8}, rng);
  auto b = random_array({8}, rng);
  auto run = [&](bool swap) {
    Tape<double> tape;
    auto va = tape.leaf(a.with_requires_grad(true));
    auto vb = tape.leaf(b.with_requires_grad(true));
    Var<double> fa, fb;
    if (swap) {
      fb = reduce_sum(square(vb));
      fa = reduce_sum(exp_op(va));
    } else {
      fa = reduce_sum(exp_op(va));
      fb = reduce_sum(square(vb));
    }
    tape.backward(add(fa, fb));
    auto ga = tape.grad(va).to_vector();
    auto gb = tape.grad(vb).to_vector();
    ga.insert(ga.end(), gb.begin(), gb.end());
    return ga;
  };
  auto g1 = run(false), g2 = run(true);
  for (size_t i = 0; i < g1.size(); ++i) CHECK(relative_error(g1[i], g2[i]) < 1e-12);
}

TEST_CASE("ops do not mutate inputs") {
  util::Rng rng(43);
  auto a = random_array({3, 3}, rng);
  auto b = random_array({3, 3}, rng);
  auto snapshot_a = a.to_vector();
  auto snapshot_b = b.to_vector();
  Tape<double> tape;
  auto va = tape.leaf(a.with_requires_grad(true));
  auto vb = tape.leaf(b.with_requires_grad(true));
  auto loss = reduce_sum(square(add(matmul(va, vb), mul(va, vb))));
  tape.backward(loss);
  CHECK(a.to_vector() == snapshot_a);
  CHECK(b.to_vector() == snapshot_b);
}

TEST_CASE("non-finite forward values are detected when checks are on") {
  bool was = finite_checks_enabled();
  set_finite_checks(true);
  Tape<double> tape;
  auto big = tape.constant(Array<double>::scalar(1e308));
  CHECK_THROWS_AS(exp_op(big), std::runtime_error);
  set_finite_checks(was);
}

TEST_CASE("adam") {
  SECTION("zero gradient leaves parameters unchanged while moments decay") {
    ParamStore<double> store;
    store.add("p", Array<double>({2}, {1.0, -2.0}));
    AdamState<double> state;
    state.m["p"] = {0.0, 0.0};
    state.v["p"] = {0.5, 0.25};
    GradMap<double> grads;
    grads["p"] = {0.0, 0.0};
    adam_step(store, grads, state, AdamConfig<double>{});
    CHECK(store.value("p").to_vector() == std::vector<double>{1.0, -2.0});
    CHECK(state.v["p"][0] == Catch::Approx(0.5 * 0.999).epsilon(1e-12));
    CHECK(state.m["p"][0] == 0.0);
  }

  SECTION("first step magnitude is about lr * sign(g)") {
    ParamStore<double> store;
    store.add("p", Array<double>({2}, {0.0, 0.0}));
    AdamState<double> state;
    GradMap<double> grads;
    grads["p"] = {0.37, -1.42};
    AdamConfig<double> cfg;
    cfg.lr = 5e-4;
    adam_step(store, grads, state, cfg);
    auto p = store.value("p").to_vector();
    CHECK(p[0] == Catch::Approx(-cfg.lr).margin(1e-6));
    CHECK(p[1] == Catch::Approx(cfg.lr).margin(1e-6));
  }

  SECTION("identical inputs give bit-identical results") {
    auto run = [] {
      util::Rng rng(99);
      ParamStore<double> store;
      store.add("p", Array<double>::uniform({6}, rng, -1, 1));
      AdamState<double> state;
      for (int i = 0; i < 3; ++i) {
        GradMap<double> grads;
        std::vector<double> g(6);
        for (auto& x : g) x = rng.uniform(-1, 1);
        grads["p"] = g;
        adam_step(store, grads, state, AdamConfig<double>{});
      }
      return store.value("p").to_vector();
    };
    CHECK(run() == run());
  }

  SECTION("shape mismatch is an error") {
    ParamStore<double> store;
    store.add("p", Array<double>({2}, {0.0, 0.0}));
    AdamState<double> state;
    GradMap<double> grads;
    grads["p"] = {1.0};
    CHECK_THROWS_AS(adam_step(store, grads, state, AdamConfig<double>{}), std::invalid_argument);
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  util::Rng rng(7);
  ParamStore<float> store;
  store.add("nrad.l0.w", Array<float>::uniform({4, 3}, rng, -1, 1));
  store.add("nfeat.enc0.b", Array<float>::uniform({8}, rng, -1, 1));

  Checkpoint ckpt;
  append_params(ckpt, store);
  ckpt.tensors.push_back(make_blob<uint64_t>("trainer.rng", {2}, {rng.state(), 17}));
  ckpt.tensors.push_back(make_text_blob("meta.config", "{\"k\":1}"));

  std::string bytes = serialize_checkpoint(ckpt);
  Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);

  ParamStore<float> restored;
  restored.add("nrad.l0.w", Array<float>::zeros({4, 3}));
  restored.add("nfeat.enc0.b", Array<float>::zeros({8}));
  load_params(back, restored);
  CHECK(restored.value("nrad.l0.w").to_vector() == store.value("nrad.l0.w").to_vector());
  CHECK(blob_values<uint64_t>(*back.find("trainer.rng")) == std::vector<uint64_t>{rng.state(), 17});
  CHECK(blob_text(*back.find("meta.config")) == "{\"k\":1}");

  // dtype confusion is an error
  CHECK_THROWS_AS(blob_values<float>(*back.find("trainer.rng")), std::runtime_error);
}
