#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "gradcheck_util.hpp"
#include "mast/transformer.hpp"

using namespace mast;

namespace {

MapTransformerConfig tiny_config() {
  MapTransformerConfig cfg;
  cfg.radius = 2;
  cfg.n_channels = 4;  // N_c = 3
  cfg.dim = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.ff_dim = 16;
  cfg.out_dim = 6;
  return cfg;
}

EgoMap random_egomap(int radius, int n_classes, Rng& rng, double fill = 0.5) {
  EgoMap ego;
  ego.radius = radius;
  ego.n_classes = n_classes;
  const int side = ego.side();
  ego.cells.assign(static_cast<std::size_t>(side) * side, 0);
  for (auto& b : ego.cells) {
    if (rng.uniform() > fill) continue;
    if (rng.uniform() < 0.6) b |= 1u;
    if (rng.uniform() < 0.4) b |= 1u << rng.uniform_int(1, n_classes);
  }
  ego.cells[static_cast<std::size_t>(radius) * side + radius] |= 1u;
  return ego;
}

// All 8 dihedral images of a square integer matrix.
std::vector<std::vector<int>> dihedral_images(const std::vector<int>& m, int side) {
  auto at = [&](int i, int j) { return m[static_cast<std::size_t>(i) * side + j]; };
  std::vector<std::vector<int>> images;
  for (int op = 0; op < 8; ++op) {
    std::vector<int> img(m.size());
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j) {
        int v = 0;
        switch (op) {
          case 0: v = at(i, j); break;
          case 1: v = at(side - 1 - j, i); break;                  // rot90
          case 2: v = at(side - 1 - i, side - 1 - j); break;       // rot180
          case 3: v = at(j, side - 1 - i); break;                  // rot270
          case 4: v = at(i, side - 1 - j); break;                  // flip horizontal
          case 5: v = at(side - 1 - i, j); break;                  // flip vertical
          case 6: v = at(j, i); break;                             // transpose
          case 7: v = at(side - 1 - j, side - 1 - i); break;       // anti-transpose
        }
        img[static_cast<std::size_t>(i) * side + j] = v;
      }
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace

TEST_CASE("position indices for r=1") {
  PositionIndexMatrix p = build_position_indices(1);
  CHECK(p.n_indices == 3);
  const std::vector<int> want{2, 1, 2, 1, 0, 1, 2, 1, 2};
  CHECK(p.index == want);
}

TEST_CASE("position indices: center zero, K counts distinct squared distances") {
  for (int r = 1; r <= 8; ++r) {
    PositionIndexMatrix p = build_position_indices(r);
    CHECK(p.at(r, r) == 0);
    // K by direct enumeration
    std::set<int> d2s;
    for (int i = 0; i <= 2 * r; ++i)
      for (int j = 0; j <= 2 * r; ++j) d2s.insert((i - r) * (i - r) + (j - r) * (j - r));
    CHECK(p.n_indices == static_cast<int>(d2s.size()));
    // values are exactly 0..K-1
    std::set<int> seen(p.index.begin(), p.index.end());
    CHECK(static_cast<int>(seen.size()) == p.n_indices);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == p.n_indices - 1);
    // non-decreasing with squared distance
    for (int i = 0; i <= 2 * r; ++i)
      for (int j = 0; j <= 2 * r; ++j)
        for (int i2 = 0; i2 <= 2 * r; ++i2)
          for (int j2 = 0; j2 <= 2 * r; ++j2) {
            const int a = (i - r) * (i - r) + (j - r) * (j - r);
            const int b = (i2 - r) * (i2 - r) + (j2 - r) * (j2 - r);
            if (a < b) CHECK(p.at(i, j) < p.at(i2, j2));
            if (a == b) CHECK(p.at(i, j) == p.at(i2, j2));
          }
  }
  CHECK(build_position_indices(2).n_indices == 6);  // d2 in {0,1,2,4,5,8}
}

TEST_CASE("position indices equal all 8 dihedral images") {
  for (int r : {1, 2, 3, 4, 8}) {
    PositionIndexMatrix p = build_position_indices(r);
    for (const auto& img : dihedral_images(p.index, p.side())) CHECK(img == p.index);
  }
}

TEST_CASE("cell embeddings: sum of class bags plus positional rows") {
  MapTransformerConfig cfg = tiny_config();
  Rng rng(3);
  ParamSet params;
  MapTransformer xf(cfg, params, "map", rng);
  const int side = 2 * cfg.radius + 1;
  std::vector<std::vector<int>> channels(static_cast<std::size_t>(side) * side);
  channels[0] = {};          // unexplored
  channels[7] = {0, 3};      // traversable + class 3
  Tensor x = xf.cell_embeddings(channels);
  const Tensor& cls = params.get("map.cls_emb");
  const Tensor& pos = params.get("map.pos_emb");
  const auto& P = xf.position_indices();
  for (int d = 0; d < cfg.dim; ++d) {
    CHECK(x.at({0, d}) == pos.at({P.index[0], d}));
    CHECK(x.at({7, d}) ==
          doctest::Approx(cls.at({0, d}) + cls.at({3, d}) + pos.at({P.index[7], d}))
              .epsilon(1e-15));
  }
  // channel order within a bag cannot matter: bags are sets of rows
  std::vector<std::vector<int>> swapped = channels;
  swapped[7] = {3, 0};
  Tensor x2 = xf.cell_embeddings(swapped);
  for (int d = 0; d < cfg.dim; ++d) CHECK(x.at({7, d}) == x2.at({7, d}));
}

TEST_CASE("attention rows sum to one") {
  MapTransformerConfig cfg = tiny_config();
  Rng rng(5);
  ParamSet params;
  MapTransformer xf(cfg, params, "map", rng);
  const int side = 2 * cfg.radius + 1;
  const int S = side * side;
  Rng data_rng(17);
  for (int trial = 0; trial < 8; ++trial) {
    EgoMap ego = random_egomap(cfg.radius, cfg.n_channels - 1, data_rng);
    Tensor x = xf.cell_embeddings(MapTransformer::channels_from_egomap(ego));
    std::vector<std::vector<double>> rows;
    (void)xf.attention_layer(x, 0, &rows);
    REQUIRE(static_cast<int>(rows.size()) == cfg.n_heads);
    for (const auto& row : rows) {
      REQUIRE(static_cast<int>(row.size()) == S);
      double sum = 0.0;
      for (double v : row) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("identical cells attend uniformly") {
  MapTransformerConfig cfg = tiny_config();
  Rng rng(9);
  ParamSet params;
  MapTransformer xf(cfg, params, "map", rng);
  const int side = 2 * cfg.radius + 1;
  const int S = side * side;
  // force every cell's input equal: same bag, positional table all equal rows
  Tensor& pos = params.get("map.pos_emb");
  for (int i = 0; i < pos.dim(0); ++i)
    for (int d = 0; d < cfg.dim; ++d) pos.at({i, d}) = pos.at({0, d});
  std::vector<std::vector<int>> channels(static_cast<std::size_t>(S), std::vector<int>{1});
  Tensor x = xf.cell_embeddings(channels);
  std::vector<std::vector<double>> rows;
  (void)xf.attention_layer(x, 0, &rows);
  for (const auto& row : rows)
    for (double v : row) CHECK(v == doctest::Approx(1.0 / S).epsilon(1e-9));
}

TEST_CASE("permutation equivariance with flattened positional embeddings") {
  MapTransformerConfig cfg = tiny_config();
  cfg.radius = 1;  // 3x3 map
  Rng rng(21);
  ParamSet params;
  MapTransformer xf(cfg, params, "map", rng);
  Tensor& pos = params.get("map.pos_emb");
  for (int i = 0; i < pos.dim(0); ++i)
    for (int d = 0; d < cfg.dim; ++d) pos.at({i, d}) = pos.at({0, d});

  std::vector<std::vector<int>> channels(9);
  Rng data_rng(4);
  for (auto& c : channels) {
    if (data_rng.uniform() < 0.7) c.push_back(0);
    if (data_rng.uniform() < 0.5) c.push_back(data_rng.uniform_int(1, cfg.n_channels - 1));
  }
  const std::vector<int> perm{4, 2, 8, 0, 6, 1, 5, 3, 7};
  std::vector<std::vector<int>> permuted(9);
  for (int i = 0; i < 9; ++i) permuted[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
      channels[static_cast<std::size_t>(i)];

  Tensor y = xf.attention_layer(xf.cell_embeddings(channels), 0);
  Tensor yp = xf.attention_layer(xf.cell_embeddings(permuted), 0);
  for (int i = 0; i < 9; ++i)
    for (int d = 0; d < cfg.dim; ++d)
      CHECK(yp.at({perm[static_cast<std::size_t>(i)], d}) ==
            doctest::Approx(y.at({i, d})).epsilon(1e-9));

  // pooled output invariant under the permutation
  Tensor m = xf.forward(channels);
  Tensor mp = xf.forward(permuted);
  for (int d = 0; d < cfg.out_dim; ++d)
    CHECK(m.at({0, d}) == doctest::Approx(mp.at({0, d})).epsilon(1e-9));
}

TEST_CASE("map_forward output dims and determinism") {
  MapTransformerConfig cfg;  // paper-default sizes
  cfg.n_channels = 9;
  Rng rng(2);
  ParamSet params;
  MapTransformer xf(cfg, params, "map", rng);
  Rng data_rng(8);
  EgoMap ego = random_egomap(cfg.radius, 8, data_rng);
  Tensor a = xf.forward(MapTransformer::channels_from_egomap(ego));
  CHECK(a.dims() == std::vector<int>{1, 512});
  Tensor b = xf.forward(MapTransformer::channels_from_egomap(ego));
  for (int d = 0; d < 512; ++d) CHECK(a.at({0, d}) == b.at({0, d}));
}

TEST_CASE("map_forward is bitwise invariant under egomap rotation") {
  MapTransformerConfig cfg = tiny_config();
  cfg.radius = 3;
  Rng rng(33);
  ParamSet params;
  MapTransformer xf(cfg, params, "map", rng);
  Rng data_rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    EgoMap ego = random_egomap(cfg.radius, cfg.n_channels - 1, data_rng);
    Tensor base = xf.forward(MapTransformer::channels_from_egomap(ego));
    EgoMap rotated = ego;
    for (int k = 0; k < 3; ++k) {
      rotated = rot90_clockwise(rotated);
      Tensor out = xf.forward(MapTransformer::channels_from_egomap(rotated));
      for (int d = 0; d < cfg.out_dim; ++d) CHECK(out.at({0, d}) == base.at({0, d}));
    }
  }
}

TEST_CASE("map transformer gradients match finite differences") {
  MapTransformerConfig cfg;
  cfg.radius = 1;
  cfg.n_channels = 3;
  cfg.dim = 6;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.ff_dim = 12;
  cfg.out_dim = 4;
  Rng rng(77);
  ParamSet params;
  MapTransformer xf(cfg, params, "map", rng);
  std::vector<std::vector<int>> channels(9);
  Rng data_rng(6);
  for (auto& c : channels) {
    if (data_rng.uniform() < 0.7) c.push_back(0);
    if (data_rng.uniform() < 0.5) c.push_back(data_rng.uniform_int(1, 2));
  }
  std::vector<double> dir(static_cast<std::size_t>(cfg.out_dim));
  for (auto& v : dir) v = data_rng.uniform(-1.0, 1.0);
  Tensor dir_t = Tensor::from({1, cfg.out_dim}, std::vector<double>(dir));

  auto forward_scalar = [&]() { return sum_all(mul(xf.forward(channels), dir_t)); };
  for (std::size_t p = 0; p < params.count(); ++p) {
    const double err = testutil::param_fd_check(params, params.tensor(p), forward_scalar, 1e-5);
    INFO("parameter ", params.name(p));
    CHECK(err < 1e-4);
  }
}
