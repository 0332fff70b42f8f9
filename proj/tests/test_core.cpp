#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "oracles.hpp"
#include "xfer/checkpoint.hpp"
#include "xfer/loss.hpp"
#include "xfer/net.hpp"
#include "xfer/optim.hpp"
#include "xfer/rng.hpp"

using namespace xfer;

namespace {

Tensor<float> random_batch(int n, int channels, int size, std::uint64_t seed) {
  Tensor<float> t({n, channels, size, size});
  Rng rng(seed);
  for (float& v : t.data) v = static_cast<float>(rng.uniform());
  return t;
}

std::vector<int> random_binary_labels(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int& y : labels) y = rng.uniform() < 0.5 ? 0 : 1;
  return labels;
}

Architecture tiny_binary_arch(int in_channels, int in_size, int f1, int f2, int hidden) {
  Architecture a;
  a.in_channels = in_channels;
  a.in_size = in_size;
  a.layers = {conv_layer(f1), relu_layer(), maxpool_layer(2),
              conv_layer(f2), relu_layer(), maxpool_layer(2),
              flatten_layer(), dense_layer(hidden), relu_layer(),
              dense_layer(1, true), sigmoid_layer()};
  a.validate();
  return a;
}

Architecture tiny_softmax_arch(int in_size, int filters, int hidden, int classes) {
  Architecture a;
  a.in_channels = 3;
  a.in_size = in_size;
  a.layers = {conv_layer(filters), relu_layer(), maxpool_layer(2),
              flatten_layer(), dense_layer(hidden), relu_layer(),
              dense_layer(classes, true), softmax_layer()};
  a.validate();
  return a;
}

}  // namespace

TEST_CASE("rng streams are deterministic and key-separated") {
  Rng a(derive_key(42, 1, 2));
  Rng b(derive_key(42, 1, 2));
  Rng c(derive_key(42, 1, 3));
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t va = a.next_u64();
    all_equal &= (va == b.next_u64());
    any_diff |= (va != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_diff);

  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
  }
  Rng idx(9);
  for (int i = 0; i < 1000; ++i) REQUIRE(idx.uniform_index(7) < 7);
}

TEST_CASE("tensor rejects inconsistent construction") {
  CHECK_THROWS_AS(Tensor<float>({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, {1.f, 2.f, 3.f}), ShapeError);
  Tensor<float> t({2, 3});
  CHECK(t.size() == 6);
}

TEST_CASE("forward matches the loop-based oracle on random small nets") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
    Architecture arch = tiny_binary_arch(3, 8, 3, 4, 5);
    ParameterVector params = init_random(arch, seed);
    Tensor<float> batch = random_batch(3, 3, 8, seed + 100);
    auto res = forward(arch, params, batch);
    auto ref = oracle::forward_ref(arch, params.cast<double>(), batch.cast<double>());
    REQUIRE(res.outputs.shape == std::vector<int>{3, 1});
    for (std::size_t i = 0; i < res.outputs.size(); ++i) {
      CHECK(std::abs(res.outputs.data[i] - ref.data[i]) < 1e-5);
    }
  }
  for (std::uint64_t seed : {5ull, 6ull}) {
    Architecture arch = tiny_softmax_arch(8, 3, 6, 4);
    ParameterVector params = init_random(arch, seed);
    Tensor<float> batch = random_batch(2, 3, 8, seed + 100);
    auto res = forward(arch, params, batch);
    auto ref = oracle::forward_ref(arch, params.cast<double>(), batch.cast<double>());
    for (std::size_t i = 0; i < res.outputs.size(); ++i) {
      CHECK(std::abs(res.outputs.data[i] - ref.data[i]) < 1e-5);
    }
  }
}

TEST_CASE("identity conv kernel passes the input through") {
  Architecture a;
  a.in_channels = 1;
  a.in_size = 6;
  a.layers = {conv_layer(1), flatten_layer(), dense_layer(1, true)};
  a.validate();
  ParameterVector params = init_random(a, 1);
  params[0].value.fill(0.f);
  params[0].value.at(0, 0, 1, 1) = 1.f;  // center tap
  params[1].value.fill(0.f);
  Tensor<float> batch = random_batch(2, 1, 6, 77);
  auto res = forward(a, params, batch);
  const Tensor<float>& conv_out = res.tape.entries[1].input;  // input to flatten
  REQUIRE(conv_out.shape == batch.shape);
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(conv_out.data[i] == batch.data[i]);
}

TEST_CASE("zero head weights emit exactly 0.5 through the sigmoid") {
  Architecture arch = tiny_binary_arch(3, 8, 2, 2, 4);
  ParameterVector params = init_random(arch, 3);
  const auto infos = arch.param_infos();
  for (std::size_t i = 0; i < infos.size(); ++i) {
    if (infos[i].head) params[i].value.fill(0.f);
  }
  Tensor<float> batch = random_batch(4, 3, 8, 9);
  auto res = forward(arch, params, batch);
  for (float v : res.outputs.data) CHECK(v == 0.5f);
}

TEST_CASE("analytic gradients match finite differences on random tiny nets") {
  // binary nets with the weighted loss
  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    Architecture arch = tiny_binary_arch(3, 8, 2, 3, 4);
    ParameterVector params = init_random(arch, seed);
    Tensor<float> batch = random_batch(3, 3, 8, seed * 7);
    std::vector<int> labels = random_binary_labels(3, seed * 13);
    const double w_pos = 2.0, w_neg = 1.0;

    auto res = forward(arch, params, batch);
    tape_loss_weighted_bce(res.tape, labels, w_pos, w_neg);
    ParameterVector grads = backward(res.tape);

    auto fd = oracle::finite_difference_grads(
        arch, params, batch.cast<double>(), [&](const Tensor<double>& out) {
          return oracle::weighted_bce_ref(out, labels, w_pos, w_neg);
        });
    REQUIRE(fd.skipped * 10 <= fd.total);  // kink crossings must be rare
    for (std::size_t p = 0; p < grads.size(); ++p) {
      for (std::size_t j = 0; j < grads[p].value.size(); ++j) {
        if (!fd.valid[p][j]) continue;
        INFO(grads[p].name << "[" << j << "] analytic=" << grads[p].value.data[j]
                           << " fd=" << fd.grads[p].value.data[j]);
        REQUIRE(oracle::grad_close(grads[p].value.data[j], fd.grads[p].value.data[j]));
      }
    }
  }
  // softmax net with cross-entropy
  {
    Architecture arch = tiny_softmax_arch(8, 2, 5, 3);
    ParameterVector params = init_random(arch, 21);
    Tensor<float> batch = random_batch(3, 3, 8, 22);
    std::vector<int> labels = {0, 2, 1};
    auto res = forward(arch, params, batch);
    tape_loss_softmax_ce(res.tape, labels);
    ParameterVector grads = backward(res.tape);
    auto fd = oracle::finite_difference_grads(
        arch, params, batch.cast<double>(),
        [&](const Tensor<double>& out) { return oracle::softmax_ce_ref(out, labels); });
    REQUIRE(fd.skipped * 10 <= fd.total);
    for (std::size_t p = 0; p < grads.size(); ++p) {
      for (std::size_t j = 0; j < grads[p].value.size(); ++j) {
        if (!fd.valid[p][j]) continue;
        REQUIRE(oracle::grad_close(grads[p].value.data[j], fd.grads[p].value.data[j]));
      }
    }
  }
}

TEST_CASE("a zeroed branch gets an exactly zero gradient") {
  Architecture a;
  a.in_channels = 1;
  a.in_size = 4;
  a.layers = {flatten_layer(), dense_layer(3), relu_layer(), dense_layer(1, true),
              sigmoid_layer()};
  a.validate();
  ParameterVector params = init_random(a, 5);
  // cut hidden unit 1 out of the head: head.w shape (1,3)
  params[2].value.at(0, 1) = 0.f;
  Tensor<float> batch = random_batch(2, 1, 4, 6);
  auto res = forward(a, params, batch);
  tape_loss_weighted_bce(res.tape, {1, 0}, 1.0, 1.0);
  ParameterVector grads = backward(res.tape);
  // fc1.w row 1 and fc1.b entry 1 never influence the loss
  for (int i = 0; i < grads[0].value.dim(1); ++i) CHECK(grads[0].value.at(1, i) == 0.f);
  CHECK(grads[1].value.at(1) == 0.f);
}

TEST_CASE("raw backward on a linear head reproduces the analytic gradient") {
  Architecture a;
  a.in_channels = 1;
  a.in_size = 2;
  a.layers = {flatten_layer(), dense_layer(1, true)};
  a.validate();
  ParameterVector params = init_random(a, 8);
  Tensor<float> batch = random_batch(1, 1, 2, 15);
  auto res = forward(a, params, batch);
  const double y = res.outputs.at(0, 0);
  const double t = 0.25;
  // squared-loss surrogate: L = (y - t)^2, dL/dy = 2 (y - t)
  res.tape.d_outputs = Tensor<float>({1, 1});
  res.tape.d_outputs.at(0, 0) = static_cast<float>(2.0 * (y - t));
  res.tape.has_loss = true;
  ParameterVector grads = backward(res.tape);
  for (int i = 0; i < 4; ++i) {
    const double expected = 2.0 * (y - t) * batch.data[static_cast<std::size_t>(i)];
    CHECK(std::abs(grads[0].value.at(0, i) - expected) < 1e-6);
  }
}

TEST_CASE("tape reuse and missing loss are state errors") {
  Architecture arch = tiny_binary_arch(3, 8, 2, 2, 3);
  ParameterVector params = init_random(arch, 2);
  Tensor<float> batch = random_batch(2, 3, 8, 3);
  auto res = forward(arch, params, batch);
  CHECK_THROWS_AS(backward(res.tape), StateError);
  tape_loss_weighted_bce(res.tape, {0, 1}, 1.0, 1.0);
  (void)backward(res.tape);
  CHECK_THROWS_AS(backward(res.tape), StateError);
}

TEST_CASE("forward rejects shape mismatches") {
  Architecture arch = tiny_binary_arch(3, 8, 2, 2, 3);
  ParameterVector params = init_random(arch, 2);
  Tensor<float> wrong = random_batch(2, 3, 10, 3);
  CHECK_THROWS_AS(forward(arch, params, wrong), ShapeError);
  ParameterVector broken = params;
  broken[0].value = Tensor<float>({1, 1, 3, 3});
  Tensor<float> batch = random_batch(2, 3, 8, 3);
  CHECK_THROWS_AS(forward(arch, broken, batch), ShapeError);
}

TEST_CASE("weighted BCE values and reductions") {
  // y=1, p=0.5, r=2 -> 2 ln 2
  CHECK(weighted_bce_loss({0.5}, {1}, 2.0) == Catch::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  // confident correct negative -> loss near zero
  CHECK(weighted_bce_loss({1e-9}, {0}, 3.0) < 1e-6);
  // r=1 reduces to plain BCE (independent implementation)
  Rng rng(31);
  std::vector<double> probs;
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) {
    probs.push_back(rng.uniform(0.01, 0.99));
    labels.push_back(rng.uniform() < 0.4 ? 1 : 0);
  }
  CHECK(std::abs(weighted_bce_loss(probs, labels, 1.0) - oracle::bce_ref(probs, labels)) <= 1e-6);
  // mismatched lengths
  CHECK_THROWS_AS(weighted_bce_loss({0.5, 0.5}, {1}, 1.0), ShapeError);
}

TEST_CASE("sgd momentum follows the update rule") {
  Architecture a;
  a.in_channels = 1;
  a.in_size = 2;
  a.layers = {flatten_layer(), dense_layer(1, true)};
  ParameterVector params = init_random(a, 4);
  ParameterVector start = params;
  ParameterVector grads = zeros_like(params);
  grads[0].value.fill(0.5f);
  ParameterVector velocity = zeros_like(params);

  SECTION("zero learning rate leaves parameters unchanged") {
    sgd_step(params, grads, 0.0, 0.9, velocity);
    CHECK(params == start);
  }
  SECTION("zero momentum is plain gradient descent") {
    sgd_step(params, grads, 0.1, 0.0, velocity);
    for (int i = 0; i < 4; ++i) {
      CHECK(params[0].value.at(0, i) ==
            Catch::Approx(start[0].value.at(0, i) - 0.1 * 0.5).margin(1e-7));
    }
  }
  SECTION("two steps with momentum 0.9 on a constant gradient") {
    sgd_step(params, grads, 0.1, 0.9, velocity);
    sgd_step(params, grads, 0.1, 0.9, velocity);
    // v1 = g, v2 = 1.9 g -> total displacement lr*g*(1 + 1.9)
    for (int i = 0; i < 4; ++i) {
      CHECK(params[0].value.at(0, i) ==
            Catch::Approx(start[0].value.at(0, i) - 0.1 * 0.5 * 2.9).margin(1e-6));
    }
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  Architecture arch = tiny_binary_arch(3, 8, 2, 3, 4);
  Checkpoint ckpt;
  ckpt.fingerprint = arch.fingerprint();
  ckpt.provenance = {"random", std::string("source_dr"), 12345, 15};
  ckpt.params = init_random(arch, 99);

  const auto path = std::filesystem::temp_directory_path() / "xfer_test_ckpt.bin";
  save_checkpoint(ckpt, path.string());
  Checkpoint loaded = load_checkpoint(path.string());
  CHECK(loaded == ckpt);
  // and the file bytes themselves are stable across saves
  auto bytes1 = checkpoint_bytes(ckpt);
  auto bytes2 = checkpoint_bytes(loaded);
  CHECK(bytes1 == bytes2);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt and truncated checkpoints are rejected") {
  Architecture arch = tiny_binary_arch(3, 8, 2, 2, 3);
  Checkpoint ckpt;
  ckpt.fingerprint = arch.fingerprint();
  ckpt.provenance = {"random", std::nullopt, 1, 0};
  ckpt.params = init_random(arch, 1);
  auto bytes = checkpoint_bytes(ckpt);

  SECTION("altered magic") {
    auto bad = bytes;
    bad[0] = 'Y';
    CHECK_THROWS_AS(parse_checkpoint(bad), CorruptCheckpointError);
  }
  SECTION("truncation at several prefixes") {
    for (std::size_t keep : {std::size_t(4), std::size_t(11), std::size_t(40), bytes.size() - 3}) {
      std::vector<std::uint8_t> bad(bytes.begin(), bytes.begin() + static_cast<long>(keep));
      CHECK_THROWS_AS(parse_checkpoint(bad), CorruptCheckpointError);
    }
  }
  SECTION("trailing garbage") {
    auto bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(parse_checkpoint(bad), CorruptCheckpointError);
  }
  SECTION("unsupported version") {
    auto bad = bytes;
    bad[8] = 9;  // version u32 LE starts after the 8-byte magic
    CHECK_THROWS_AS(parse_checkpoint(bad), CorruptCheckpointError);
  }
}

TEST_CASE("checkpoint wire format lays out exactly as specified") {
  Checkpoint ckpt;
  ckpt.fingerprint = "ab";
  ckpt.provenance = {"random", std::nullopt, 7, 0};
  ParameterVector pv;
  Tensor<float> t({1, 2}, {1.0f, -2.0f});
  pv.params.push_back({"w", t});
  ckpt.params = pv;
  auto bytes = checkpoint_bytes(ckpt);

  // magic
  REQUIRE(std::string(bytes.begin(), bytes.begin() + 8) == "XFRCKPT1");
  std::size_t off = 8;
  auto u32at = [&](std::size_t o) {
    return static_cast<std::uint32_t>(bytes[o]) | (static_cast<std::uint32_t>(bytes[o + 1]) << 8) |
           (static_cast<std::uint32_t>(bytes[o + 2]) << 16) |
           (static_cast<std::uint32_t>(bytes[o + 3]) << 24);
  };
  CHECK(u32at(off) == 1);  // version
  off += 4;
  CHECK(u32at(off) == 2);  // fingerprint length
  off += 4;
  CHECK(std::string(bytes.begin() + off, bytes.begin() + off + 2) == "ab");
  off += 2;
  const std::uint32_t prov_len = u32at(off);
  off += 4;
  const std::string prov(bytes.begin() + off, bytes.begin() + off + prov_len);
  CHECK(prov.find("\"seed\":7") != std::string::npos);
  off += prov_len;
  CHECK(u32at(off) == 1);  // tensor count
  off += 4;
  CHECK(u32at(off) == 1);  // name length
  off += 4;
  CHECK(bytes[off] == 'w');
  off += 1;
  CHECK(u32at(off) == 2);  // rank
  off += 4;
  CHECK(u32at(off) == 1);  // dim 0
  CHECK(u32at(off + 4) == 2);  // dim 1
  off += 8;
  float v0, v1;
  std::memcpy(&v0, bytes.data() + off, 4);
  std::memcpy(&v1, bytes.data() + off + 4, 4);
  CHECK(v0 == 1.0f);
  CHECK(v1 == -2.0f);
  CHECK(off + 8 == bytes.size());
}

TEST_CASE("init_random is seed-deterministic") {
  Architecture arch = tiny_binary_arch(3, 8, 2, 3, 4);
  CHECK(init_random(arch, 10) == init_random(arch, 10));
  CHECK(!(init_random(arch, 10) == init_random(arch, 11)));
  // biases zero, weights within the layer bound
  ParameterVector pv = init_random(arch, 10);
  auto infos = arch.param_infos();
  for (std::size_t i = 0; i < infos.size(); ++i) {
    if (infos[i].fan_in == 0) {
      for (float v : pv[i].value.data) CHECK(v == 0.f);
    } else {
      const double a = std::sqrt(6.0 / (infos[i].fan_in + infos[i].fan_out));
      for (float v : pv[i].value.data) {
        CHECK(std::abs(v) <= a);
      }
    }
  }
}
