#pragma once

#include "mast/mapper.hpp"
#include "mast/params.hpp"
#include "mast/tensor.hpp"

namespace mast {

/// Position indices for a (2r+1)x(2r+1) egocentric window. A Gaussian kernel
/// with scale r/2 centered on the agent orders cells; every distinct kernel
/// value (equivalently, squared distance from the center) gets the next
/// consecutive integer, index 0 at the center. Cells equidistant from the
/// agent share an index, so the matrix carries all 8 dihedral symmetries of
/// the grid.
struct PositionIndexMatrix {
  int radius = 0;
  int n_indices = 0;        // K: number of distinct index values
  std::vector<int> index;   // row-major, side = 2r+1

  int side() const { return 2 * radius + 1; }
  int at(int row, int col) const {
    return index[static_cast<std::size_t>(row) * side() + col];
  }
};

PositionIndexMatrix build_position_indices(int radius);

struct MapTransformerConfig {
  int radius = 8;        // egomap radius r
  int n_channels = 9;    // class-embedding rows (N_c + 1 semantic, 2 occupancy)
  int dim = 128;         // D, embedding width (positional and semantic)
  int n_heads = 4;
  int n_layers = 2;
  int ff_dim = 512;      // 4 * D
  int out_dim = 512;     // N_h
  double ln_eps = 1e-5;
};

/// Parameters of the egocentric map transformer. Layer ell uses per-cell
/// (1x1) projections, so the spatial arrangement is untouched until pooling.
class MapTransformer {
 public:
  MapTransformer(const MapTransformerConfig& cfg, ParamSet& params, const std::string& prefix,
                 Rng& rng);
  /// Bind to parameters previously registered under the same prefix/config
  /// (checkpoint restore or worker clones).
  MapTransformer(const MapTransformerConfig& cfg, ParamSet& params, const std::string& prefix);

  const MapTransformerConfig& config() const { return cfg_; }
  const PositionIndexMatrix& position_indices() const { return pos_index_; }

  /// Per-cell channel-bag embeddings plus positional embeddings -> [S, D].
  Tensor cell_embeddings(const std::vector<std::vector<int>>& cell_channels) const;

  /// One multi-head self-attention + feed-forward block, [S,D] -> [S,D].
  /// When `capture` is non-null, each head's attention row for the center
  /// cell is appended to it ((2r+1)^2 values per head).
  Tensor attention_layer(const Tensor& x, int layer, std::vector<std::vector<double>>* capture =
                                                         nullptr) const;

  /// Full forward: embeddings, n_layers blocks, order-invariant mean pool
  /// over cells, projection to out_dim. Returns [1, out_dim].
  Tensor forward(const std::vector<std::vector<int>>& cell_channels,
                 std::vector<std::vector<double>>* capture = nullptr) const;

  /// Channel-bag lists for a semantic egomap (channel 0 + class channels).
  static std::vector<std::vector<int>> channels_from_egomap(const EgoMap& ego);
  /// Channel-bag lists for an occupancy view (0 traversable, 1 obstacle,
  /// unexplored empty).
  static std::vector<std::vector<int>> channels_from_occupancy(const OccupancyView& view);

 private:
  struct Layer {
    Tensor wq, bq, wk, bk, wv, bv;
    Tensor wo;
    Tensor ff1, ff2;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  };

  MapTransformerConfig cfg_;
  PositionIndexMatrix pos_index_;
  Tensor class_emb_;  // [n_channels, D]
  Tensor pos_emb_;    // [K, D]
  std::vector<Layer> layers_;
  Tensor pool_w_;     // [D, out_dim]
};

}  // namespace mast
