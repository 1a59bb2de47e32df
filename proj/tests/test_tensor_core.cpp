#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "star/errors.hpp"
#include "star/ops.hpp"
#include "star/stf.hpp"

using namespace star;

namespace {

Var leaf(Tape& tape, Tensor t) { return tape.variable(std::move(t)); }

}  // namespace

TEST_CASE("matmul") {
  Tape tape;
  SUBCASE("identity") {
    auto out = matmul(tape.constant(Tensor::identity(2)), tape.constant(Tensor::matrix({{1, 2}, {3, 4}})));
    CHECK(out.value() == Tensor::matrix({{1, 2}, {3, 4}}));
  }
  SUBCASE("hand computed 1x1") {
    auto out = matmul(tape.constant(Tensor::matrix({{1, 2}})), tape.constant(Tensor::matrix({{3}, {4}})));
    CHECK(out.value() == Tensor::matrix({{11}}));
  }
  SUBCASE("matches triple loop") {
    const Tensor a = oracle::random_tensor({4, 5}, 1);
    const Tensor b = oracle::random_tensor({5, 3}, 2);
    auto out = matmul(tape.constant(a), tape.constant(b));
    CHECK(max_abs_diff(out.value(), oracle::matmul(a, b)) <= 1e-12);
  }
  SUBCASE("large ragged shapes match triple loop") {
    const Tensor a = oracle::random_tensor({37, 29}, 3);
    const Tensor b = oracle::random_tensor({29, 21}, 4);
    auto out = matmul(tape.constant(a), tape.constant(b));
    CHECK(max_abs_diff(out.value(), oracle::matmul(a, b)) <= 1e-12);
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3})));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
    }
  }
}

TEST_CASE("softmax_rows") {
  Tape tape;
  SUBCASE("uniform row") {
    auto out = softmax_rows(tape.constant(Tensor::matrix({{0, 0, 0}})));
    for (double v : out.value().data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("two-element closed form") {
    const double x = 0.3, c = 1.7;
    auto out = softmax_rows(tape.constant(Tensor::matrix({{x, x + c}})));
    CHECK(std::abs(out.value()[0] - 1.0 / (1.0 + std::exp(c))) <= 1e-15);
    CHECK(std::abs(out.value()[1] - std::exp(c) / (1.0 + std::exp(c))) <= 1e-15);
  }
  SUBCASE("large logits against extended precision") {
    auto out = softmax_rows(tape.constant(Tensor::matrix({{1000, 1001}})));
    CHECK(out.value().all_finite());
    const long double e = std::exp(1.0L);
    CHECK(std::abs(out.value()[0] - static_cast<double>(1.0L / (1.0L + e))) <= 1e-15);
    CHECK(std::abs(out.value()[0] + out.value()[1] - 1.0) <= 1e-12);
  }
  SUBCASE("rows sum to one and ignore constant shifts") {
    Tensor x = oracle::random_tensor({6, 11}, 7, -20, 20);
    Tensor shifted = x;
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t j = 0; j < 11; ++j) shifted.at(r, j) += 3.5 * static_cast<double>(r) - 9.0;
    auto a = softmax_rows(tape.constant(x));
    auto b = softmax_rows(tape.constant(shifted));
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 11; ++j) s += a.value().at(r, j);
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    CHECK(max_abs_diff(a.value(), b.value()) <= 1e-12);
    for (std::size_t r = 0; r < 6; ++r) {
      std::vector<double> row(x.raw() + r * 11, x.raw() + (r + 1) * 11);
      auto ref = oracle::softmax(row);
      for (std::size_t j = 0; j < 11; ++j) CHECK(std::abs(ref[j] - a.value().at(r, j)) <= 1e-14);
    }
  }
}

TEST_CASE("layer_norm") {
  Tape tape;
  auto ones = [&](std::size_t d) { return tape.constant(Tensor::filled({d}, 1.0)); };
  auto zeros = [&](std::size_t d) { return tape.constant(Tensor::zeros({d})); };
  SUBCASE("constant vector maps to zeros") {
    auto out = layer_norm(tape.constant(Tensor::filled({1, 5}, 4.2)), ones(5), zeros(5));
    CHECK(out.value().max_abs() == 0.0);
  }
  SUBCASE("[1,3] maps to [-1,1] as eps vanishes") {
    auto out = layer_norm(tape.constant(Tensor::matrix({{1, 3}})), ones(2), zeros(2), 1e-14);
    CHECK(std::abs(out.value()[0] + 1.0) <= 1e-12);
    CHECK(std::abs(out.value()[1] - 1.0) <= 1e-12);
  }
  SUBCASE("rows have zero mean and unit variance as eps vanishes") {
    auto out = layer_norm(tape.constant(oracle::random_tensor({3, 8}, 11, -5, 5)), ones(8), zeros(8), 1e-14);
    for (std::size_t r = 0; r < 3; ++r) {
      double mean = 0.0, var = 0.0;
      for (std::size_t j = 0; j < 8; ++j) mean += out.value().at(r, j) / 8.0;
      for (std::size_t j = 0; j < 8; ++j) var += std::pow(out.value().at(r, j) - mean, 2) / 8.0;
      CHECK(std::abs(mean) <= 1e-10);
      CHECK(std::abs(var - 1.0) <= 1e-6);
    }
  }
  SUBCASE("default eps scales the variance to v / (v + eps)") {
    const Tensor x = oracle::random_tensor({3, 8}, 13, -2, 2);
    auto out = layer_norm(tape.constant(x), ones(8), zeros(8));
    for (std::size_t r = 0; r < 3; ++r) {
      double mx = 0.0, vx = 0.0, vo = 0.0;
      for (std::size_t j = 0; j < 8; ++j) mx += x.at(r, j) / 8.0;
      for (std::size_t j = 0; j < 8; ++j) vx += std::pow(x.at(r, j) - mx, 2) / 8.0;
      for (std::size_t j = 0; j < 8; ++j) vo += std::pow(out.value().at(r, j), 2) / 8.0;
      CHECK(std::abs(vo - vx / (vx + kLayerNormEps)) <= 1e-12);
    }
  }
  SUBCASE("scale and shift invariance as eps vanishes") {
    const Tensor x = oracle::random_tensor({4, 16}, 12, -3, 3);
    for (auto [a, c] : {std::pair{2.5, -1.0}, std::pair{0.7, 10.0}, std::pair{13.0, 0.25}}) {
      Tensor y = x;
      for (double& v : y.data()) v = a * v + c;
      auto lx = layer_norm(tape.constant(x), ones(16), zeros(16), 1e-14);
      auto ly = layer_norm(tape.constant(y), ones(16), zeros(16), 1e-14);
      CHECK(max_abs_diff(lx.value(), ly.value()) <= 1e-8);
    }
  }
  SUBCASE("gain/bias shape mismatch") {
    CHECK_THROWS_AS(layer_norm(tape.constant(Tensor({2, 3})), ones(2), zeros(3)), DimensionError);
  }
}

TEST_CASE("affine") {
  Tape tape;
  SUBCASE("identity weight") {
    const Tensor x = oracle::random_tensor({3, 4}, 13);
    auto out = affine(tape.constant(x), tape.constant(Tensor::identity(4)),
                      tape.constant(Tensor::zeros({4})));
    CHECK(out.value() == x);
  }
  SUBCASE("hand computed") {
    auto out = affine(tape.constant(Tensor::vector({1, 1})), tape.constant(Tensor::matrix({{2}, {3}})),
                      tape.constant(Tensor::vector({1})));
    CHECK(out.value() == Tensor::vector({6}));
  }
  SUBCASE("weight gradient matches central differences") {
    const double err = oracle::finite_difference_error(
        [](Tape&, const std::vector<Var>& in) {
          return oracle::project_to_scalar(affine(in[0], in[1], in[2]));
        },
        {oracle::random_tensor({2, 3, 5}, 14), oracle::random_tensor({5, 4}, 15),
         oracle::random_tensor({4}, 16)});
    CHECK(err <= 1e-6);
  }
}

TEST_CASE("concat, split, mean_over, gelu") {
  Tape tape;
  SUBCASE("concat preserves order") {
    const Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    const Tensor b = Tensor::matrix({{7, 8, 9}, {10, 11, 12}});
    auto out = concat({tape.constant(a), tape.constant(b)}, 0);
    CHECK(out.value() == Tensor::matrix({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}, {10, 11, 12}}));
  }
  SUBCASE("concat then split is the identity") {
    for (std::size_t axis = 0; axis < 3; ++axis) {
      Shape sa = {2, 3, 4}, sb = {2, 3, 4};
      sb[axis] = 5;
      const Tensor a = oracle::random_tensor(sa, 20 + axis);
      const Tensor b = oracle::random_tensor(sb, 30 + axis);
      auto parts = split(concat({tape.constant(a), tape.constant(b)}, axis), axis, {sa[axis], 5});
      CHECK(parts[0].value() == a);
      CHECK(parts[1].value() == b);
    }
  }
  SUBCASE("mean over axis 0") {
    auto out = mean_over(tape.constant(Tensor::matrix({{1, 3}, {5, 7}})), 0);
    CHECK(out.value() == Tensor::vector({3, 5}));
  }
  SUBCASE("gelu fixed point") {
    auto out = gelu(tape.constant(Tensor::vector({0})));
    CHECK(out.value()[0] == 0.0);
  }
}

TEST_CASE("backward") {
  Tape tape;
  const Tensor x0 = oracle::random_tensor({3, 4}, 40);
  SUBCASE("sum gives ones") {
    Var x = leaf(tape, x0);
    tape.backward(sum(x));
    CHECK(tape.grad(x) == Tensor::filled({3, 4}, 1.0));
  }
  SUBCASE("sum of squares gives 2x") {
    Var x = leaf(tape, x0);
    tape.backward(sum(mul(x, x)));
    Tensor expect = x0;
    for (double& v : expect.data()) v *= 2.0;
    CHECK(max_abs_diff(tape.grad(x), expect) == 0.0);
  }
  SUBCASE("non-scalar loss is a contract error") {
    Var x = leaf(tape, x0);
    CHECK_THROWS_AS(tape.backward(x), ContractError);
  }
  SUBCASE("gradient of a sum of losses is the sum of gradients") {
    Var x = leaf(tape, x0);
    Var l1 = oracle::project_to_scalar(gelu(x), 1);
    Var l2 = oracle::project_to_scalar(softmax_rows(x), 2);
    tape.backward(l1);
    Tensor g1 = tape.grad(x);
    tape.backward(l2);
    Tensor g2 = tape.grad(x);
    tape.backward(add(l1, l2));
    g1.add_scaled(g2);
    CHECK(max_abs_diff(tape.grad(x), g1) <= 1e-14);
  }
  SUBCASE("constants receive no gradient") {
    Var x = leaf(tape, x0);
    Var c = tape.constant(x0);
    tape.backward(sum(mul(x, c)));
    CHECK(tape.grad(c).max_abs() == 0.0);
    CHECK(tape.grad(x) == x0);
  }
}

TEST_CASE("every primitive matches central differences") {
  using oracle::project_to_scalar;
  struct Case {
    const char* name;
    oracle::LossBuilder build;
    std::vector<Tensor> inputs;
  };
  const std::vector<Case> cases = {
      {"matmul", [](Tape&, const std::vector<Var>& in) { return project_to_scalar(matmul(in[0], in[1])); },
       {oracle::random_tensor({4, 5}, 1), oracle::random_tensor({5, 3}, 2)}},
      {"add/sub/scale",
       [](Tape&, const std::vector<Var>& in) {
         return project_to_scalar(scale(sub(add(in[0], in[1]), mul(in[0], in[1])), 1.7));
       },
       {oracle::random_tensor({3, 3}, 3), oracle::random_tensor({3, 3}, 4)}},
      {"softmax_rows", [](Tape&, const std::vector<Var>& in) { return project_to_scalar(softmax_rows(in[0])); },
       {oracle::random_tensor({4, 7}, 5, -3, 3)}},
      {"layer_norm",
       [](Tape&, const std::vector<Var>& in) { return project_to_scalar(layer_norm(in[0], in[1], in[2])); },
       {oracle::random_tensor({2, 3, 6}, 6, -2, 2), oracle::random_tensor({6}, 7, 0.5, 1.5),
        oracle::random_tensor({6}, 8)}},
      {"affine",
       [](Tape&, const std::vector<Var>& in) { return project_to_scalar(affine(in[0], in[1], in[2])); },
       {oracle::random_tensor({5, 4}, 9), oracle::random_tensor({4, 6}, 10), oracle::random_tensor({6}, 11)}},
      {"gelu", [](Tape&, const std::vector<Var>& in) { return project_to_scalar(gelu(in[0])); },
       {oracle::random_tensor({3, 5}, 12, -3, 3)}},
      {"concat",
       [](Tape&, const std::vector<Var>& in) { return project_to_scalar(concat({in[0], in[1]}, 1)); },
       {oracle::random_tensor({2, 3, 2}, 13), oracle::random_tensor({2, 4, 2}, 14)}},
      {"mean_over", [](Tape&, const std::vector<Var>& in) { return project_to_scalar(mean_over(in[0], 1)); },
       {oracle::random_tensor({3, 4, 2}, 15)}},
      {"index_select/repeat",
       [](Tape&, const std::vector<Var>& in) {
         return project_to_scalar(add(index_select(in[0], 1, {2, 0, 2}), repeat(in[1], 1, 3)));
       },
       {oracle::random_tensor({2, 3, 2}, 16), oracle::random_tensor({2, 1, 2}, 17)}},
      {"reshape", [](Tape&, const std::vector<Var>& in) { return project_to_scalar(reshape(in[0], {6, 2})); },
       {oracle::random_tensor({3, 4}, 18)}},
  };
  for (const Case& c : cases) {
    INFO(c.name);
    CHECK(oracle::finite_difference_error(c.build, c.inputs) <= 1e-6);
  }
}

TEST_CASE("outputs stay finite on finite inputs") {
  Tape tape;
  Var x = tape.constant(oracle::random_tensor({8, 32}, 50, -500, 500));
  Var g = tape.constant(Tensor::filled({32}, 1.0));
  Var b = tape.constant(Tensor::zeros({32}));
  CHECK(softmax_rows(x).value().all_finite());
  CHECK(layer_norm(x, g, b).value().all_finite());
  CHECK(gelu(x).value().all_finite());
}

TEST_CASE("STF format") {
  const auto dir = std::filesystem::temp_directory_path() / "star_stf_test";
  std::filesystem::create_directories(dir);
  SUBCASE("golden bytes") {
    const auto bytes = encode_stf(Tensor::matrix({{1.0, -2.0}}));
    const std::vector<std::uint8_t> expect = {
        'S', 'T', 'F', '1', 2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0,
        0, 0, 0, 0, 0, 0, 0xf0, 0x3f,   // 1.0
        0, 0, 0, 0, 0, 0, 0x00, 0xc0};  // -2.0
    CHECK(bytes == expect);
  }
  SUBCASE("round trip is bitwise") {
    Tensor t = oracle::random_tensor({3, 1, 4}, 60, -1e300, 1e300);
    t[0] = -0.0;
    t[1] = 5e-324;
    write_stf(dir / "t.stf", t);
    CHECK(read_stf(dir / "t.stf") == t);
  }
  SUBCASE("truncated payload") {
    auto bytes = encode_stf(oracle::random_tensor({2, 2}, 61));
    bytes.pop_back();
    CHECK_THROWS_WITH_AS(decode_stf(bytes), doctest::Contains("payload"), FormatError);
  }
  SUBCASE("bad magic") {
    auto bytes = encode_stf(Tensor::vector({1}));
    bytes[3] = '2';
    CHECK_THROWS_WITH_AS(decode_stf(bytes), doctest::Contains("magic"), FormatError);
  }
  SUBCASE("bad rank and dims") {
    auto bytes = encode_stf(Tensor::vector({1}));
    bytes[4] = 200;
    CHECK_THROWS_WITH_AS(decode_stf(bytes), doctest::Contains("rank"), FormatError);
    bytes[4] = 5;
    CHECK_THROWS_WITH_AS(decode_stf(bytes), doctest::Contains("dims"), FormatError);
  }
  std::filesystem::remove_all(dir);
}
