#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "vln/rng.hpp"
#include "vln/tensor.hpp"

using vln::GradCheckReport;
using vln::NodeId;
using vln::Rng;
using vln::Tape;
using vln::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

using Params = std::map<std::string, Tensor>;

// Wraps a tape-building function into the grad_check closure contract.
vln::LossClosure closure_of(std::function<NodeId(Tape&, std::map<std::string, NodeId>&)> build) {
  return [build](const Params& params, Params* grads) {
    Tape tape;
    std::map<std::string, NodeId> ids;
    for (const auto& [name, tensor] : params) ids[name] = tape.input(tensor);
    const NodeId loss = build(tape, ids);
    const double value = tape.value(loss).data[0];
    if (grads) {
      tape.backward(loss);
      for (const auto& [name, id] : ids) (*grads)[name] = tape.grad(id);
    }
    return value;
  };
}

}  // namespace

TEST_CASE("matmul identity returns the left operand") {
  Rng rng(1);
  Tape tape;
  const Tensor a = random_tensor({3, 3}, rng);
  Tensor eye = Tensor::zeros({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  const NodeId out = tape.matmul(tape.input(a), tape.input(eye));
  for (std::size_t i = 0; i < a.numel(); ++i)
    CHECK(tape.value(out).data[i] == doctest::Approx(a.data[i]).epsilon(1e-12));
}

TEST_CASE("softmax of a constant vector is uniform") {
  Tape tape;
  const NodeId out = tape.softmax(tape.input(Tensor::vec({0.0, 0.0, 0.0})));
  for (double v : tape.value(out).data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rows are distributions and shift-invariant") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.index(8);
    Tensor x = random_tensor({n}, rng, 3.0);
    Tape tape;
    const NodeId sm = tape.softmax(tape.input(x));
    double total = 0.0;
    for (double v : tape.value(sm).data) {
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-9);

    const double shift = rng.uniform(-10.0, 10.0);
    Tensor shifted = x;
    for (double& v : shifted.data) v += shift;
    const NodeId sm2 = tape.softmax(tape.input(shifted));
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(tape.value(sm).data[i] - tape.value(sm2).data[i]) < 1e-9);
  }
}

TEST_CASE("tanh adjoint matches central differences at x=0.5") {
  const double x = 0.5;
  const double h = 1e-5;
  Tape tape;
  const NodeId in = tape.input(Tensor::vec({x}));
  const NodeId out = tape.sum(tape.tanh(in));
  tape.backward(out);
  const double analytic = tape.grad(in).data[0];
  const double numeric = (std::tanh(x + h) - std::tanh(x - h)) / (2.0 * h);
  CHECK(vln::relative_error(analytic, numeric) < 1e-8);
}

TEST_CASE("backward of sum(W x) has outer-product structure") {
  Rng rng(3);
  const Tensor w = random_tensor({4, 3}, rng);
  const Tensor x = random_tensor({3}, rng);
  Tape tape;
  const NodeId wid = tape.input(w);
  const NodeId xid = tape.input(x);
  const NodeId loss = tape.sum(tape.matmul(wid, xid));
  tape.backward(loss);
  // d/dW sum(Wx) = 1 x^T  (every row equals x)
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(tape.grad(wid).at(r, c) == doctest::Approx(x.data[c]).epsilon(1e-12));
  // d/dx = W^T 1 (column sums)
  for (std::size_t c = 0; c < 3; ++c) {
    double col = 0.0;
    for (std::size_t r = 0; r < 4; ++r) col += w.at(r, c);
    CHECK(tape.grad(xid).data[c] == doctest::Approx(col).epsilon(1e-12));
  }
}

TEST_CASE("constant-zero loss leaves all gradients zero") {
  Rng rng(4);
  Tape tape;
  const NodeId a = tape.input(random_tensor({5}, rng));
  const NodeId loss = tape.sum(tape.scale(a, 0.0));
  tape.backward(loss);
  for (double g : tape.grad(a).data) CHECK(g == 0.0);
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  const NodeId a = tape.input(Tensor::vec({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(a), std::invalid_argument);
}

TEST_CASE("shape mismatches name the op and both shapes") {
  Tape tape;
  const NodeId a = tape.input(Tensor::zeros({2, 3}));
  const NodeId b = tape.input(Tensor::zeros({2}));
  try {
    tape.matmul(a, b);
    FAIL("expected a shape error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("{2,3}") != std::string::npos);
    CHECK(msg.find("{2}") != std::string::npos);
  }
  CHECK_THROWS_AS(tape.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(tape.mul(a, b), std::invalid_argument);
}

TEST_CASE("rebuilding the same graph is bit-identical") {
  auto build = [](Tape& tape) {
    Rng rng(99);
    const NodeId w = tape.input(random_tensor({4, 6}, rng));
    const NodeId x = tape.input(random_tensor({6}, rng));
    const NodeId h = tape.tanh(tape.matmul(w, x));
    return tape.sum(tape.softmax(h));
  };
  Tape t1, t2;
  const NodeId l1 = build(t1);
  const NodeId l2 = build(t2);
  REQUIRE(t1.size() == t2.size());
  CHECK(t1.value(l1).data[0] == t2.value(l2).data[0]);
  t1.backward(l1);
  t2.backward(l2);
  for (std::size_t i = 0; i < t1.size(); ++i) {
    const auto id = static_cast<NodeId>(i);
    CHECK(t1.grad(id).data == t2.grad(id).data);
  }
}

TEST_CASE("every primitive adjoint agrees with central finite differences") {
  Rng rng(2024);
  constexpr double kTol = 1e-6;

  SUBCASE("matmul mat-vec") {
    Params p{{"a", random_tensor({3, 4}, rng)}, {"x", random_tensor({4}, rng)}};
    auto r = grad_check(closure_of([](Tape& t, auto& ids) {
                          return t.sum(t.matmul(ids.at("a"), ids.at("x")));
                        }),
                        p, kTol);
    CHECK(r.pass);
  }
  SUBCASE("matmul mat-mat") {
    Params p{{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({4, 2}, rng)}};
    auto r = grad_check(closure_of([](Tape& t, auto& ids) {
                          return t.sum(t.tanh(t.matmul(ids.at("a"), ids.at("b"))));
                        }),
                        p, kTol);
    CHECK(r.pass);
  }
  SUBCASE("add mul scale") {
    Params p{{"a", random_tensor({5}, rng)}, {"b", random_tensor({5}, rng)}};
    auto r = grad_check(closure_of([](Tape& t, auto& ids) {
                          const NodeId s = t.add(ids.at("a"), t.scale(ids.at("b"), -1.7));
                          return t.sum(t.mul(s, ids.at("a")));
                        }),
                        p, kTol);
    CHECK(r.pass);
  }
  SUBCASE("concat rank-1 and rank-2") {
    Params p{{"a", random_tensor({3}, rng)},
             {"b", random_tensor({2}, rng)},
             {"c", random_tensor({2, 2}, rng)},
             {"d", random_tensor({2, 3}, rng)}};
    auto r = grad_check(closure_of([](Tape& t, auto& ids) {
                          const NodeId v = t.concat({ids.at("a"), ids.at("b")});
                          const NodeId m = t.concat({ids.at("c"), ids.at("d")});
                          return t.add(t.sum(t.tanh(v)), t.sum(t.sigmoid(m)));
                        }),
                        p, kTol);
    CHECK(r.pass);
  }
  SUBCASE("softmax with weights") {
    Params p{{"x", random_tensor({6}, rng)}, {"w", random_tensor({6}, rng)}};
    auto r = grad_check(closure_of([](Tape& t, auto& ids) {
                          return t.sum(t.mul(t.softmax(ids.at("x")), ids.at("w")));
                        }),
                        p, kTol);
    CHECK(r.pass);
  }
  SUBCASE("log of sigmoid") {
    Params p{{"x", random_tensor({5}, rng)}};
    auto r = grad_check(closure_of([](Tape& t, auto& ids) {
                          return t.mean(t.log(t.sigmoid(ids.at("x"))));
                        }),
                        p, kTol);
    CHECK(r.pass);
  }
  SUBCASE("embedding rows") {
    Params p{{"table", random_tensor({5, 3}, rng)}};
    auto r = grad_check(closure_of([](Tape& t, auto& ids) {
                          const NodeId rows = t.embed(ids.at("table"), {1, 3, 3});
                          return t.sum(t.tanh(rows));
                        }),
                        p, kTol);
    CHECK(r.pass);
  }
  SUBCASE("dropout mask") {
    Params p{{"x", random_tensor({6}, rng)}};
    auto r = grad_check(closure_of([](Tape& t, auto& ids) {
                          return t.sum(t.dropout(ids.at("x"), {2.0, 0.0, 2.0, 2.0, 0.0, 2.0}));
                        }),
                        p, kTol);
    CHECK(r.pass);
  }
  SUBCASE("transpose reshape pick mean") {
    Params p{{"m", random_tensor({3, 4}, rng)}};
    auto r = grad_check(closure_of([](Tape& t, auto& ids) {
                          const NodeId tr = t.transpose(ids.at("m"));
                          const NodeId flat = t.reshape(tr, {12});
                          return t.add(t.pick(flat, 5), t.mean(flat));
                        }),
                        p, kTol);
    CHECK(r.pass);
  }
}

TEST_CASE("grad_check on a single linear layer is near-exact") {
  Rng rng(11);
  Params p{{"w", random_tensor({3, 4}, rng)}, {"b", random_tensor({3}, rng)}};
  const Tensor x = random_tensor({4}, rng);
  auto r = grad_check(closure_of([x](Tape& t, auto& ids) {
                        return t.sum(t.add(t.matmul(ids.at("w"), t.input(x)), ids.at("b")));
                      }),
                      p, 1e-10);
  CHECK(r.pass);
  CHECK(r.entries.size() == 2);
  for (const auto& e : r.entries) CHECK(e.max_rel_err < 1e-10);
}

TEST_CASE("grad_check rejects non-deterministic closures") {
  int calls = 0;
  auto closure = [&calls](const Params&, Params* grads) {
    if (grads) (*grads)["x"] = Tensor::vec({0.0});
    return static_cast<double>(calls++);
  };
  Params p{{"x", Tensor::vec({1.0})}};
  CHECK_THROWS_AS(vln::grad_check(closure, p, 1e-6), std::runtime_error);
}

TEST_CASE("first_non_finite reports the earliest bad node") {
  Tape tape;
  tape.input(Tensor::vec({1.0}));
  const NodeId bad = tape.log(tape.input(Tensor::vec({-1.0})));  // NaN
  (void)bad;
  const std::string where = tape.first_non_finite();
  CHECK(where.find("log") != std::string::npos);
}
