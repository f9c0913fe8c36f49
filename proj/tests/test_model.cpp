#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <ldgcn/bench.hpp>
#include <ldgcn/model.hpp>
#include <ldgcn/rng.hpp>

#include "oracles.hpp"

using namespace ldgcn;

namespace {

ModelConfig toy_config(Variant v = Variant::standard) {
  ModelConfig cfg;
  cfg.in_channels = 3;
  cfg.conv_channels = 4;
  cfg.dw_kernel_a = 3;
  cfg.dw_kernel_b = 5;
  cfg.partial_ratio = 0.5;
  cfg.fc_hidden = 16;
  cfg.input_len = 16;
  cfg.variant = v;
  return cfg;
}

Input random_input(const ModelConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  Input x(cfg.in_channels, std::vector<double>(cfg.input_len));
  for (auto& row : x)
    for (double& v : row) v = rng.next_normal();
  return x;
}

ModelParams zero_params(const ModelConfig& cfg) {
  ModelParams p;
  static_cast<TensorSet&>(p) = make_zero_set(cfg);
  p.channel_mask.assign(cfg.total_channels(), 1);
  p.neuron_mask.assign(cfg.has_fc1() ? cfg.fc_hidden : 0, 1);
  return p;
}

size_t zero_count(const TensorSet& s) {
  size_t zeros = 0;
  s.for_each([&](std::string_view, const Tensor& t, bool) {
    for (double v : t.data) zeros += v == 0.0;
  });
  return zeros;
}

}  // namespace

TEST_CASE("config validation rejects malformed setups") {
  ModelConfig cfg = toy_config();
  CHECK_NOTHROW(cfg.validate());

  ModelConfig bad = cfg;
  bad.conv_channels = 3;  // odd
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.conv_channels = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.dw_kernel_a = 4;  // even
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.dw_kernel_b = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.partial_ratio = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.partial_ratio = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.fc_hidden = 4;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.n_classes = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.input_len = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.in_channels = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("derived channel counts per variant") {
  ModelConfig cfg = toy_config();
  CHECK(cfg.branch_channels() == 4);
  CHECK(cfg.total_channels() == 8);
  CHECK(cfg.partial_channels() == 4);
  CHECK(cfg.fc2_in() == 16);

  CHECK(toy_config(Variant::single_branch).total_channels() == 4);
  CHECK(toy_config(Variant::no_pointwise).branch_channels() == 3);
  CHECK(toy_config(Variant::no_pointwise).total_channels() == 6);
  CHECK(toy_config(Variant::single_fc).fc2_in() == 8);
  CHECK(toy_config(Variant::no_partialconv).partial_channels() == 0);
  CHECK(toy_config(Variant::no_depthwise).total_channels() == 8);
}

TEST_CASE("variant names round-trip") {
  for (uint32_t i = 0; i <= 5; ++i) {
    Variant v = static_cast<Variant>(i);
    CHECK(variant_from_string(variant_to_string(v)) == v);
  }
  CHECK_THROWS_AS(variant_from_string("dense"), std::invalid_argument);
}

TEST_CASE("initialization is deterministic in the seed") {
  ModelConfig cfg = toy_config();
  ModelParams a = init_model(cfg, 7);
  ModelParams b = init_model(cfg, 7);
  ModelParams c = init_model(cfg, 8);
  bool identical = true, any_diff = false;
  a.for_each([&](std::string_view name, const Tensor& t, bool) {
    const Tensor* tb = nullptr;
    const Tensor* tc = nullptr;
    b.for_each([&](std::string_view n2, const Tensor& t2, bool) {
      if (n2 == name) tb = &t2;
    });
    c.for_each([&](std::string_view n2, const Tensor& t2, bool) {
      if (n2 == name) tc = &t2;
    });
    if (t.data != tb->data) identical = false;
    if (t.data != tc->data) any_diff = true;
  });
  CHECK(identical);
  CHECK(any_diff);

  for (double v : a.bn_gamma.data) CHECK(v == 1.0);
  for (double v : a.bn_rvar.data) CHECK(v == 1.0);
  for (double v : a.bn_rmean.data) CHECK(v == 0.0);
  CHECK(a.channel_mask == std::vector<uint8_t>(8, 1));
  CHECK(a.neuron_mask == std::vector<uint8_t>(16, 1));
}

TEST_CASE("all-zero parameters score both classes equally") {
  ModelConfig cfg = toy_config();
  ModelParams p = zero_params(cfg);
  Input x = random_input(cfg, 11);
  auto [logp, cache] = forward(p, cfg, x, false);
  CHECK_THAT(logp[0], Catch::Matchers::WithinAbs(std::log(0.5), 1e-15));
  CHECK_THAT(logp[1], Catch::Matchers::WithinAbs(std::log(0.5), 1e-15));
}

TEST_CASE("log-probabilities always normalize") {
  for (uint64_t seed = 0; seed < 6; ++seed) {
    ModelConfig cfg = toy_config(static_cast<Variant>(seed));
    ModelParams p = init_model(cfg, seed + 1);
    Input x = random_input(cfg, seed + 100);
    for (bool training : {false, true}) {
      auto [logp, cache] = forward(p, cfg, x, training);
      CHECK(std::isfinite(logp[0]));
      CHECK(std::isfinite(logp[1]));
      CHECK_THAT(std::exp(logp[0]) + std::exp(logp[1]),
                 Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("batched inference equals per-item inference") {
  ModelConfig cfg = toy_config();
  ModelParams p = init_model(cfg, 3);
  Input x = random_input(cfg, 1);
  Input y = random_input(cfg, 2);
  BatchCache cache;
  forward_batch(p, cfg, {&x, &y}, false, cache);
  auto [lx, cx] = forward(p, cfg, x, false);
  auto [ly, cy] = forward(p, cfg, y, false);
  CHECK(cache.logp[0] == lx[0]);
  CHECK(cache.logp[1] == lx[1]);
  CHECK(cache.logp[2] == ly[0]);
  CHECK(cache.logp[3] == ly[1]);
}

TEST_CASE("forward validates its inputs") {
  ModelConfig cfg = toy_config();
  ModelParams p = init_model(cfg, 1);
  BatchCache cache;
  CHECK_THROWS_AS(forward_batch(p, cfg, {}, false, cache), std::invalid_argument);

  Input short_rows(cfg.in_channels, std::vector<double>(cfg.input_len - 1, 0.0));
  CHECK_THROWS_AS(forward(p, cfg, short_rows, false), std::invalid_argument);

  Input few_channels(cfg.in_channels - 1, std::vector<double>(cfg.input_len, 0.0));
  CHECK_THROWS_AS(forward(p, cfg, few_channels, false), std::invalid_argument);

  ModelParams bad_mask = p;
  bad_mask.channel_mask.pop_back();
  Input x = random_input(cfg, 4);
  CHECK_THROWS_AS(forward(bad_mask, cfg, x, false), std::invalid_argument);
}

TEST_CASE("masking a unit equals zeroing every weight it owns") {
  Rng rng(2024);
  for (Variant v : {Variant::standard, Variant::single_fc, Variant::single_branch}) {
    ModelConfig cfg = toy_config(v);
    for (int rep = 0; rep < 8; ++rep) {
      ModelParams masked = init_model(cfg, rng.next());
      for (uint8_t& m : masked.channel_mask) m = rng.next_below(2) ? 1 : 0;
      masked.channel_mask[0] = 1;  // keep the network nondegenerate
      for (uint8_t& m : masked.neuron_mask) m = rng.next_below(2) ? 1 : 0;
      if (!masked.neuron_mask.empty()) masked.neuron_mask[0] = 1;

      // the dense twin carries no masks but has the owned weights zeroed out
      ModelParams dense = masked;
      TensorSet freedom = weight_freedom(cfg, masked.channel_mask, masked.neuron_mask);
      auto dt = detail::tensor_list(static_cast<TensorSet&>(dense));
      auto ft = detail::tensor_list(freedom);
      for (size_t i = 0; i < dt.size(); ++i)
        for (size_t j = 0; j < dt[i]->data.size(); ++j) dt[i]->data[j] *= ft[i]->data[j];
      std::fill(dense.channel_mask.begin(), dense.channel_mask.end(), 1);
      std::fill(dense.neuron_mask.begin(), dense.neuron_mask.end(), 1);

      Input x = random_input(cfg, rng.next());
      for (bool training : {false, true}) {
        auto [lm, cm] = forward(masked, cfg, x, training);
        auto [ld, cd] = forward(dense, cfg, x, training);
        CHECK(lm[0] == ld[0]);
        CHECK(lm[1] == ld[1]);
      }
    }
  }
}

TEST_CASE("swapping the branches is a symmetry when their kernels agree") {
  ModelConfig cfg = toy_config();
  cfg.dw_kernel_b = 3;       // match the kernels so branch tensors are swappable
  cfg.partial_ratio = 1.0;   // fuse every channel so fusion rows travel with them
  size_t C = cfg.conv_channels, T = cfg.total_channels();

  ModelParams p = init_model(cfg, 51);
  Rng rng(52);
  for (double& v : p.bn_rmean.data) v = rng.next_uniform(-0.5, 0.5);
  for (double& v : p.bn_rvar.data) v = rng.next_uniform(0.5, 1.5);
  p.channel_mask[1] = 0;

  auto perm = [&](size_t ch) { return (ch + C) % T; };
  ModelParams q = p;
  q.pw_a_w = p.pw_b_w;
  q.pw_a_b = p.pw_b_b;
  q.pw_b_w = p.pw_a_w;
  q.pw_b_b = p.pw_a_b;
  q.dw_a_w = p.dw_b_w;
  q.dw_a_b = p.dw_b_b;
  q.dw_b_w = p.dw_a_w;
  q.dw_b_b = p.dw_a_b;
  for (size_t ch = 0; ch < T; ++ch) {
    size_t to = perm(ch);
    for (size_t j = 0; j < 3; ++j) q.fuse_w(to, j) = p.fuse_w(ch, j);
    q.fuse_b[to] = p.fuse_b[ch];
    q.bn_gamma[to] = p.bn_gamma[ch];
    q.bn_beta[to] = p.bn_beta[ch];
    q.bn_rmean[to] = p.bn_rmean[ch];
    q.bn_rvar[to] = p.bn_rvar[ch];
    q.channel_mask[to] = p.channel_mask[ch];
    for (size_t h = 0; h < cfg.fc_hidden; ++h) q.fc1_w(h, to) = p.fc1_w(h, ch);
  }

  Input x = random_input(cfg, 53);
  auto [lp, cp] = forward(p, cfg, x, false);
  auto [lq, cq] = forward(q, cfg, x, false);
  CHECK_THAT(lq[0], Catch::Matchers::WithinAbs(lp[0], 1e-12));
  CHECK_THAT(lq[1], Catch::Matchers::WithinAbs(lp[1], 1e-12));
}

TEST_CASE("executed FLOPs agree with the closed form and an explicit tally") {
  Rng rng(88);
  for (uint32_t vi = 0; vi <= 5; ++vi) {
    ModelConfig cfg = toy_config(static_cast<Variant>(vi));
    ModelParams p = init_model(cfg, vi + 1);

    SECTION("variant " + variant_to_string(cfg.variant) + ", dense") {
      Input x = random_input(cfg, 9);
      BatchCache cache;
      FlopCounter counted;
      forward_batch(p, cfg, {&x}, false, cache, &counted);
      uint64_t closed = network_flops(cfg, p.channel_mask, p.neuron_mask);
      uint64_t tallied = oracle::network_flops_loops(cfg, p.channel_mask, p.neuron_mask);
      CHECK(counted.flops == closed);
      CHECK(counted.flops == tallied);
    }

    SECTION("variant " + variant_to_string(cfg.variant) + ", masked") {
      for (uint8_t& m : p.channel_mask) m = rng.next_below(2) ? 1 : 0;
      p.channel_mask[0] = 1;
      for (uint8_t& m : p.neuron_mask) m = rng.next_below(2) ? 1 : 0;
      if (!p.neuron_mask.empty()) p.neuron_mask[0] = 1;
      Input x = random_input(cfg, 10);
      BatchCache cache;
      FlopCounter counted;
      forward_batch(p, cfg, {&x}, false, cache, &counted);
      uint64_t closed = network_flops(cfg, p.channel_mask, p.neuron_mask);
      uint64_t tallied = oracle::network_flops_loops(cfg, p.channel_mask, p.neuron_mask);
      CHECK(counted.flops == closed);
      CHECK(counted.flops == tallied);
    }
  }
}

TEST_CASE("weight freedom maps each masked unit to the weights it owns") {
  ModelConfig cfg = toy_config();
  cfg.conv_channels = 8;  // T = 16, P = 8
  cfg.fc_hidden = 16;
  size_t T = cfg.total_channels();
  std::vector<uint8_t> all_ch(T, 1), all_n(cfg.fc_hidden, 1);

  TensorSet free_all = weight_freedom(cfg, all_ch, all_n);
  CHECK(zero_count(free_all) == 0);

  // one masked hidden neuron: its FC1 row (16), FC1 bias, and FC2 column (2)
  std::vector<uint8_t> one_neuron = all_n;
  one_neuron[3] = 0;
  CHECK(zero_count(weight_freedom(cfg, all_ch, one_neuron)) == 16 + 1 + 2);

  // one masked fused channel (branch a, k=3): pointwise row+bias (3+1),
  // depthwise kernel+bias (3+1), fusion kernel+bias (3+1), BN scale+shift (2),
  // FC1 column (16)
  std::vector<uint8_t> one_fused = all_ch;
  one_fused[2] = 0;
  CHECK(zero_count(weight_freedom(cfg, one_fused, all_n)) == 4 + 4 + 4 + 2 + 16);

  // one masked pass-through channel (branch b, k=5): no fusion kernel
  std::vector<uint8_t> one_plain = all_ch;
  one_plain[12] = 0;
  CHECK(zero_count(weight_freedom(cfg, one_plain, all_n)) == 4 + 6 + 2 + 16);

  // running statistics are never claimed by any mask
  std::vector<uint8_t> none_ch(T, 0), none_n(cfg.fc_hidden, 0);
  TensorSet free_none = weight_freedom(cfg, none_ch, none_n);
  for (double v : free_none.bn_rmean.data) CHECK(v == 1.0);
  for (double v : free_none.bn_rvar.data) CHECK(v == 1.0);

  std::vector<uint8_t> short_mask(T - 1, 1);
  CHECK_THROWS_AS(weight_freedom(cfg, short_mask, all_n), std::invalid_argument);
}

TEST_CASE("nll loss of the uniform prediction") {
  std::array<double, 2> logp = {std::log(0.5), std::log(0.5)};
  CHECK_THAT(nll_loss(logp, 0), Catch::Matchers::WithinAbs(0.693147, 1e-6));
  CHECK_THAT(nll_loss(logp, 1), Catch::Matchers::WithinAbs(0.693147, 1e-6));
  CHECK_THROWS_AS(nll_loss(logp, 2), std::invalid_argument);
  CHECK_THROWS_AS(nll_loss(logp, -1), std::invalid_argument);
}
