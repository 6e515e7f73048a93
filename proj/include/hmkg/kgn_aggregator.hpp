#pragma once

#include "hmkg/autodiff.hpp"
#include "hmkg/param_binder.hpp"
#include "hmkg/rng.hpp"

#include <string>
#include <vector>

// Knowledge-aware dynamic-graph aggregation (Agg). Nodes are projected into
// head and tail embeddings; each node links to its top-k highest scoring
// partners (score = head_u . tail_v), attends over them with a softmax, and
// the updated nodes are pooled by attention readout.
namespace hmkg::kgn {

struct KgnParams {
  ad::Matrix w_head;  // d_in x d_attn
  ad::Matrix w_tail;  // d_in x d_attn
  ad::Matrix w_msg;   // d_attn x d_out
  ad::Matrix w_self;  // d_in x d_out
  ad::Matrix query;   // d_out x 1, readout query
  int top_k = 6;

  int d_in() const { return static_cast<int>(w_head.rows()); }
  int d_attn() const { return static_cast<int>(w_head.cols()); }
  int d_out() const { return static_cast<int>(w_self.cols()); }

  // Seeded uniform(-a, a) with a = 1 / sqrt(fan_in) per matrix.
  static KgnParams init(int d_in, int d_attn, int d_out, int top_k, Rng& rng);
  void validate() const;

  template <class Fn>
  void for_each(const std::string& prefix, Fn&& fn) {
    fn(prefix + "w_head", w_head);
    fn(prefix + "w_tail", w_tail);
    fn(prefix + "w_msg", w_msg);
    fn(prefix + "w_self", w_self);
    fn(prefix + "query", query);
  }
  template <class Fn>
  void for_each(const std::string& prefix, Fn&& fn) const {
    fn(prefix + "w_head", w_head);
    fn(prefix + "w_tail", w_tail);
    fn(prefix + "w_msg", w_msg);
    fn(prefix + "w_self", w_self);
    fn(prefix + "query", query);
  }
};

struct KgnVars {
  ad::Var w_head, w_tail, w_msg, w_self, query;
  int top_k = 6;
};

KgnVars bind(ParamBinder& binder, const KgnParams& params);

struct EdgeSet {
  int n = 0;
  int width = 0;                      // neighbours per node
  std::vector<ad::Index> neighbors;   // n * width, row-major
  ad::Matrix logits;                  // n x width

  ad::Index neighbor(int node, int slot) const {
    return neighbors[static_cast<std::size_t>(node * width + slot)];
  }
};

struct Projection {
  ad::Var heads;  // n x d_attn
  ad::Var tails;  // n x d_attn
};

Projection head_tail_project(ad::Var nodes, const KgnVars& params);

// Per node, the top_k partners v != u by head_u . tail_v (ties -> lower index).
// A lone node gets a single self-edge.
EdgeSet build_dynamic_edges(const ad::Matrix& heads, const ad::Matrix& tails, int top_k);

struct AttentionResult {
  ad::Var updated;    // n x d_out
  ad::Var attention;  // n x width, rows sum to 1
};

// u' = tanh(x_u W_self + sum_v a_uv * m_uv W_msg), m_uv = tail_v * tanh(head_u + tail_v).
AttentionResult knowledge_attention_aggregate(ad::Var nodes, const Projection& projection,
                                              const EdgeSet& edges, const KgnVars& params);

struct ReadoutResult {
  ad::Var pooled;   // 1 x d_out
  ad::Var weights;  // 1 x n
};

ReadoutResult readout(ad::Var updated, const KgnVars& params);

struct AggregateResult {
  EdgeSet edges;
  AttentionResult attention;
  ReadoutResult readout;
  ad::Var pooled() const { return readout.pooled; }
  ad::Var nodes() const { return attention.updated; }
};

AggregateResult aggregate(ad::Var nodes, const KgnVars& params);

}  // namespace hmkg::kgn
