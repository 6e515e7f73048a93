#pragma once

#include "hmkg/autodiff.hpp"
#include "hmkg/param_binder.hpp"
#include "hmkg/rng.hpp"

#include <string>

// Bidirectional cross-attention between a tile's low-magnification vector and
// its high-magnification representation.
namespace hmkg::bix {

enum class BixMode {
  kSet,     // high side = the 16 updated cell embeddings
  kVector,  // high side = the pooled tile embedding (both softmaxes degenerate)
};

std::string to_string(BixMode mode);
BixMode bix_mode_from_string(const std::string& name);

// Untied: separate projections for each side (q/k/v_low act on f_low,
// q/k/v_high on the high side). Tied: q/k/v_low are shared by both sides and
// the *_high matrices are empty; requires d_low == d_high.
struct BixParams {
  ad::Matrix q_low, k_low, v_low;     // d_low x d
  ad::Matrix q_high, k_high, v_high;  // d_high x d (empty when tied)
  bool tied = false;
  int heads = 1;

  int dim() const { return static_cast<int>(q_low.cols()); }

  static BixParams init(int d_low, int d_high, int d, bool tied, int heads, Rng& rng);
  void validate() const;

  template <class Self, class Fn>
  static void visit(Self& self, const std::string& prefix, Fn&& fn) {
    fn(prefix + "q_low", self.q_low);
    fn(prefix + "k_low", self.k_low);
    fn(prefix + "v_low", self.v_low);
    if (!self.tied) {
      fn(prefix + "q_high", self.q_high);
      fn(prefix + "k_high", self.k_high);
      fn(prefix + "v_high", self.v_high);
    }
  }
  template <class Fn>
  void for_each(const std::string& prefix, Fn&& fn) { visit(*this, prefix, fn); }
  template <class Fn>
  void for_each(const std::string& prefix, Fn&& fn) const { visit(*this, prefix, fn); }
};

struct BixVars {
  ad::Var q_low, k_low, v_low, q_high, k_high, v_high;
  int heads = 1;
};

BixVars bind(ParamBinder& binder, const BixParams& params);

struct CrossAttention {
  ad::Var output;     // m x d
  ad::Var attention;  // m x n for one head; heads are stacked row-wise
};

// Softmax(Q K^T / sqrt(d_head)) V, per head over column blocks.
CrossAttention cross_attention(ad::Var queries, ad::Var keys, ad::Var values, int heads = 1);

struct FusedRoi {
  ad::Var fused;               // 1 x 2d = [low->high ; pooled high->low]
  CrossAttention low_to_high;  // 1 query against the high rows
  CrossAttention high_to_low;  // high rows against the single low key, before pooling
};

// f_low: 1 x d_low. high: r x d_high (r = 16 in set mode, 1 in vector mode).
FusedRoi fuse_roi(ad::Var f_low, ad::Var high, const BixVars& params);

}  // namespace hmkg::bix
