#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck_util.hpp"
#include "mast/policy.hpp"

using namespace mast;

namespace {

PolicyConfig tiny_config(MapVariant variant) {
  PolicyConfig cfg;
  cfg.map_variant = variant;
  cfg.exploration_reward = variant != MapVariant::none;
  cfg.hidden = 24;
  cfg.action_emb = 8;
  cfg.map_radius = 3;
  cfg.n_classes = 4;
  cfg.xform_dim = 8;
  cfg.xform_heads = 2;
  cfg.xform_layers = 1;
  cfg.xform_ff = 16;
  return cfg;
}

Tensor random_image(const SensorConfig& s, Rng& rng) {
  Tensor img = Tensor::zeros({s.image_h, s.n_rays, 4});
  for (auto& v : img.values()) v = rng.uniform();
  return img;
}

EgoMap random_egomap(int radius, int n_classes, Rng& rng) {
  EgoMap ego;
  ego.radius = radius;
  ego.n_classes = n_classes;
  const int side = ego.side();
  ego.cells.assign(static_cast<std::size_t>(side) * side, 0);
  for (auto& b : ego.cells) {
    if (rng.uniform() < 0.5) b |= 1u;
    if (rng.uniform() < 0.3) b |= 1u << rng.uniform_int(1, n_classes);
  }
  ego.cells[static_cast<std::size_t>(radius) * side + radius] |= 1u;
  return ego;
}

}  // namespace

TEST_CASE("variant table") {
  REQUIRE(find_variant("MaAST") != nullptr);
  CHECK(find_variant("MaAST")->map == MapVariant::semantic_attention);
  CHECK(find_variant("MaAST")->exploration);
  CHECK(find_variant("RGBD")->map == MapVariant::none);
  CHECK(!find_variant("RGBD")->exploration);
  CHECK(find_variant("RGBD+EXP")->exploration);
  CHECK(find_variant("RGBD+SEM")->map == MapVariant::semantic_cnn);
  CHECK(find_variant("RGBD+OCC+ATT")->map == MapVariant::occupancy_attention);
  CHECK(find_variant("bogus") == nullptr);
}

TEST_CASE("default config produces 512-wide embeddings and the documented fuse widths") {
  PolicyConfig cfg;  // defaults: hidden 512, r=8, N_c=8
  Rng rng(1);
  PolicyNetwork net(cfg, rng);
  CHECK(net.params().get("fuse.w").dims() == std::vector<int>{1024, 512});
  CHECK(net.params().get("cnn.fc.w").dims() == std::vector<int>{512, 512});
  CHECK(net.params().get("gru.wz").dims() ==
        std::vector<int>{512 + 32 + PolicyConfig::kGoalDims, 512});

  Tensor img = Tensor::zeros({64, 64, 4});
  Tensor r_emb = net.visual_encoder(img);
  CHECK(r_emb.dims() == std::vector<int>{1, 512});

  PolicyConfig plain = cfg;
  plain.map_variant = MapVariant::none;
  Rng rng2(1);
  PolicyNetwork net2(plain, rng2);
  CHECK(net2.params().get("fuse.w").dims() == std::vector<int>{512, 512});
}

TEST_CASE("zero image gives a deterministic bias-path output") {
  PolicyConfig cfg = tiny_config(MapVariant::none);
  Rng rng(3);
  PolicyNetwork net(cfg, rng);
  Tensor img = Tensor::zeros({64, 64, 4});
  Tensor a = net.visual_encoder(img);
  Tensor b = net.visual_encoder(img);
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == b.values()[i]);
  for (double v : a.values()) CHECK(std::isfinite(v));
}

TEST_CASE("fuse output finite for random inputs") {
  PolicyConfig cfg = tiny_config(MapVariant::semantic_attention);
  Rng rng(5);
  PolicyNetwork net(cfg, rng);
  Rng data(7);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor r = Tensor::zeros({1, cfg.hidden});
    Tensor m = Tensor::zeros({1, cfg.hidden});
    for (auto& v : r.values()) v = data.uniform(-3.0, 3.0);
    for (auto& v : m.values()) v = data.uniform(-3.0, 3.0);
    Tensor h = net.fuse(r, m);
    for (double v : h.values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("gru: zero weights keep hidden at zero; one step stays bounded") {
  PolicyConfig cfg = tiny_config(MapVariant::none);
  Rng rng(9);
  PolicyNetwork net(cfg, rng);
  for (const char* n : {"gru.wz", "gru.uz", "gru.bz", "gru.wr", "gru.ur", "gru.br", "gru.wh",
                        "gru.uh", "gru.bh"}) {
    Tensor& t = net.params().get(n);
    std::fill(t.values().begin(), t.values().end(), 0.0);
  }
  Tensor fused = Tensor::full({1, cfg.hidden}, 0.7);
  Tensor h = net.gru_step(fused, PolicyConfig::kStartToken, {2.0, 0.3}, Tensor::zeros({1, cfg.hidden}));
  for (double v : h.values()) CHECK(v == 0.0);

  Rng rng2(11);
  PolicyNetwork net2(cfg, rng2);
  Tensor h2 = net2.gru_step(fused, 2, {2.0, 0.3}, Tensor::zeros({1, cfg.hidden}));
  for (double v : h2.values()) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("heads: zero hidden yields bias logits; softmax sums to one") {
  PolicyConfig cfg = tiny_config(MapVariant::none);
  Rng rng(13);
  PolicyNetwork net(cfg, rng);
  Tensor& ab = net.params().get("actor.b");
  ab.values()[1] = 0.37;
  auto [logits, value] = net.heads(Tensor::zeros({1, cfg.hidden}));
  CHECK(logits.at({0, 1}) == 0.37);
  CHECK(logits.at({0, 0}) == 0.0);
  CHECK(value.size() == 1);
  Tensor p = softmax(reshape(logits, {kNumActions}), 0);
  double s = 0.0;
  for (double v : p.values()) s += v;
  CHECK(std::fabs(s - 1.0) < 1e-12);
}

TEST_CASE("softmax shift invariance: adding a constant changes nothing") {
  Tensor logits = Tensor::from({4}, {0.3, -1.2, 2.0, 0.9});
  Tensor shifted = affine(logits, 1.0, 13.5);
  Tensor p = softmax(logits, 0);
  Tensor q = softmax(shifted, 0);
  for (int i = 0; i < 4; ++i) CHECK(p.at({i}) == doctest::Approx(q.at({i})).epsilon(1e-12));
}

TEST_CASE("sampling matches softmax frequencies within 0.01") {
  Tensor logits = Tensor::from({4}, {0.5, -0.5, 1.5, 0.0});
  Tensor p = softmax(logits, 0);
  Rng rng(21);
  std::array<int, 4> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    counts[static_cast<std::size_t>(sample_categorical(p.values(), rng.uniform()))]++;
  for (int a = 0; a < 4; ++a)
    CHECK(std::fabs(static_cast<double>(counts[static_cast<std::size_t>(a)]) / n - p.at({a})) <
          0.01);
}

TEST_CASE("act: greedy deterministic, sampling reproducible under a seed") {
  for (MapVariant variant : {MapVariant::none, MapVariant::semantic_attention,
                             MapVariant::occupancy_attention, MapVariant::semantic_cnn}) {
    PolicyConfig cfg = tiny_config(variant);
    Rng rng(31);
    PolicyNetwork net(cfg, rng);
    Rng data(33);
    Observation obs;
    obs.image = random_image(cfg.sensor, data);
    EgoMap ego = random_egomap(cfg.map_radius, cfg.n_classes, data);

    PolicyState s1 = net.initial_state();
    Rng a1(99);
    auto o1 = net.act(obs, ego, {3.0, 0.5}, s1, true, a1);
    PolicyState s2 = net.initial_state();
    Rng a2(99);
    auto o2 = net.act(obs, ego, {3.0, 0.5}, s2, true, a2);
    CHECK(o1.action == o2.action);
    CHECK(o1.log_prob == o2.log_prob);
    CHECK(o1.value == o2.value);

    PolicyState s3 = net.initial_state();
    Rng a3(123);
    auto o3 = net.act(obs, ego, {3.0, 0.5}, s3, false, a3);
    PolicyState s4 = net.initial_state();
    Rng a4(123);
    auto o4 = net.act(obs, ego, {3.0, 0.5}, s4, false, a4);
    CHECK(o3.action == o4.action);
    CHECK(o3.log_prob == o4.log_prob);
  }
}

TEST_CASE("gru sequence gradients over 8 steps match finite differences") {
  PolicyConfig cfg = tiny_config(MapVariant::none);
  cfg.hidden = 10;
  Rng rng(41);
  PolicyNetwork net(cfg, rng);
  Rng data(43);
  std::vector<Tensor> inputs;
  for (int t = 0; t < 8; ++t) {
    Tensor x = Tensor::zeros({1, cfg.hidden});
    for (auto& v : x.values()) v = data.uniform(-1.0, 1.0);
    inputs.push_back(x);
  }
  std::vector<double> dir(static_cast<std::size_t>(cfg.hidden));
  for (auto& v : dir) v = data.uniform(-1.0, 1.0);
  Tensor dir_t = Tensor::from({1, cfg.hidden}, std::vector<double>(dir));

  auto forward_scalar = [&]() {
    Tensor h = Tensor::zeros({1, cfg.hidden});
    for (int t = 0; t < 8; ++t)
      h = net.gru_step(inputs[static_cast<std::size_t>(t)], t % (kNumActions + 1),
                       {1.0 + t, 0.1 * t}, h);
    return sum_all(mul(h, dir_t));
  };
  for (const char* n : {"gru.wz", "gru.uz", "gru.bz", "gru.wr", "gru.ur", "gru.br", "gru.wh",
                        "gru.uh", "gru.bh", "act_emb"}) {
    const double err =
        testutil::param_fd_check(net.params(), net.params().get(n), forward_scalar, 1e-5, 60);
    INFO("param ", n);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("visual encoder gradients match finite differences (sampled coords)") {
  PolicyConfig cfg = tiny_config(MapVariant::none);
  Rng rng(51);
  PolicyNetwork net(cfg, rng);
  Rng data(53);
  Tensor img = random_image(cfg.sensor, data);
  std::vector<double> dir(static_cast<std::size_t>(cfg.hidden));
  for (auto& v : dir) v = data.uniform(-1.0, 1.0);
  Tensor dir_t = Tensor::from({1, cfg.hidden}, std::vector<double>(dir));
  auto forward_scalar = [&]() { return sum_all(mul(net.visual_encoder(img), dir_t)); };
  for (const char* n : {"cnn.c1.w", "cnn.c1.b", "cnn.c2.w", "cnn.c3.w", "cnn.fc.w", "cnn.fc.b"}) {
    const double err =
        testutil::param_fd_check(net.params(), net.params().get(n), forward_scalar, 1e-5, 25);
    INFO("param ", n);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("two-step unrolled end-to-end gradient check") {
  for (MapVariant variant :
       {MapVariant::semantic_attention, MapVariant::semantic_cnn, MapVariant::none}) {
    PolicyConfig cfg = tiny_config(variant);
    Rng rng(61);
    PolicyNetwork net(cfg, rng);
    Rng data(63);
    Tensor img1 = random_image(cfg.sensor, data);
    Tensor img2 = random_image(cfg.sensor, data);
    EgoMap ego1 = random_egomap(cfg.map_radius, cfg.n_classes, data);
    EgoMap ego2 = random_egomap(cfg.map_radius, cfg.n_classes, data);

    auto forward_scalar = [&]() {
      Tensor h = Tensor::zeros({1, cfg.hidden});
      auto s1 = net.forward_step(img1, ego1, {4.0, 0.7}, PolicyConfig::kStartToken, h);
      std::vector<int> a1{2};
      Tensor lp1 = cross_entropy_with_logits(reshape(s1.logits, {kNumActions}), a1);
      auto s2 = net.forward_step(img2, ego2, {3.0, -0.4}, 2, s1.hidden);
      std::vector<int> a2{0};
      Tensor lp2 = cross_entropy_with_logits(reshape(s2.logits, {kNumActions}), a2);
      Tensor vsum = add(reshape(s1.value, {1}), reshape(s2.value, {1}));
      return sum_all(add(add(lp1, lp2), affine(vsum, 0.5)));
    };
    for (std::size_t p = 0; p < net.params().count(); ++p) {
      const double err = testutil::param_fd_check(net.params(), net.params().tensor(p),
                                                  forward_scalar, 1e-5, 8);
      INFO("variant ", static_cast<int>(variant), " param ", net.params().name(p));
      CHECK(err < 1e-4);
    }
  }
}
