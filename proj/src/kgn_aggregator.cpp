#include "hmkg/kgn_aggregator.hpp"

#include "hmkg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hmkg::kgn {

namespace {

ad::Matrix uniform_init(int rows, int cols, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(rows));
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
  return m;
}

}  // namespace

KgnParams KgnParams::init(int d_in, int d_attn, int d_out, int top_k, Rng& rng) {
  if (d_in < 1 || d_attn < 1 || d_out < 1) throw DomainError("KgnParams: dims must be >= 1");
  KgnParams p;
  p.w_head = uniform_init(d_in, d_attn, rng);
  p.w_tail = uniform_init(d_in, d_attn, rng);
  p.w_msg = uniform_init(d_attn, d_out, rng);
  p.w_self = uniform_init(d_in, d_out, rng);
  p.query = uniform_init(d_out, 1, rng);
  p.top_k = top_k;
  p.validate();
  return p;
}

void KgnParams::validate() const {
  if (top_k < 1) throw DomainError("KgnParams: top_k must be >= 1");
  const bool ok = w_head.size() > 0 && w_tail.rows() == w_head.rows() && w_tail.cols() == w_head.cols() &&
                  w_msg.rows() == w_head.cols() && w_self.rows() == w_head.rows() &&
                  w_msg.cols() == w_self.cols() && query.rows() == w_self.cols() && query.cols() == 1;
  if (!ok) throw ShapeError("KgnParams: inconsistent parameter shapes");
}

KgnVars bind(ParamBinder& binder, const KgnParams& params) {
  params.validate();
  return {binder(params.w_head), binder(params.w_tail), binder(params.w_msg), binder(params.w_self),
          binder(params.query), params.top_k};
}

Projection head_tail_project(ad::Var nodes, const KgnVars& params) {
  if (nodes.rows() < 1) throw ShapeError("head_tail_project: empty node set");
  if (nodes.cols() != params.w_head.rows()) {
    throw ShapeError("head_tail_project: node dim " + std::to_string(nodes.cols()) +
                     " does not match d_in " + std::to_string(params.w_head.rows()));
  }
  return {ad::matmul(nodes, params.w_head), ad::matmul(nodes, params.w_tail)};
}

EdgeSet build_dynamic_edges(const ad::Matrix& heads, const ad::Matrix& tails, int top_k) {
  if (heads.rows() < 1) throw ShapeError("build_dynamic_edges: empty node set");
  if (heads.rows() != tails.rows() || heads.cols() != tails.cols()) {
    throw ShapeError("build_dynamic_edges: head/tail shapes differ");
  }
  if (top_k < 1) throw DomainError("build_dynamic_edges: top_k must be >= 1");
  const int n = static_cast<int>(heads.rows());
  EdgeSet edges;
  edges.n = n;
  if (n == 1) {
    edges.width = 1;
    edges.neighbors = {0};
    edges.logits = heads * tails.transpose();
    return edges;
  }
  edges.width = std::min(top_k, n - 1);
  edges.neighbors.reserve(static_cast<std::size_t>(n * edges.width));
  edges.logits.resize(n, edges.width);
  const ad::Matrix scores = heads * tails.transpose();
  std::vector<int> candidates(static_cast<std::size_t>(n - 1));
  for (int u = 0; u < n; ++u) {
    int at = 0;
    for (int v = 0; v < n; ++v) {
      if (v != u) candidates[static_cast<std::size_t>(at++)] = v;
    }
    std::partial_sort(candidates.begin(), candidates.begin() + edges.width, candidates.end(),
                      [&](int a, int b) {
                        const double sa = scores(u, a), sb = scores(u, b);
                        return sa > sb || (sa == sb && a < b);
                      });
    for (int s = 0; s < edges.width; ++s) {
      const int v = candidates[static_cast<std::size_t>(s)];
      edges.neighbors.push_back(v);
      edges.logits(u, s) = scores(u, v);
    }
  }
  return edges;
}

AttentionResult knowledge_attention_aggregate(ad::Var nodes, const Projection& projection,
                                              const EdgeSet& edges, const KgnVars& params) {
  const ad::Index n = nodes.rows();
  if (edges.n != n || projection.heads.rows() != n) {
    throw ShapeError("knowledge_attention_aggregate: edge set does not match node count");
  }
  // Differentiable logits are re-read from the score matrix at the selected positions.
  const ad::Var scores = ad::matmul_nt(projection.heads, projection.tails);
  const ad::Var logits = ad::gather_row_entries(scores, edges.neighbors, edges.width);
  const ad::Var attention = ad::softmax_rows(logits);

  std::vector<ad::Index> owners(edges.neighbors.size());
  for (std::size_t i = 0; i < owners.size(); ++i) owners[i] = static_cast<ad::Index>(i) / edges.width;
  const ad::Var head_rep = ad::gather_rows(projection.heads, owners);
  const ad::Var tail_nb = ad::gather_rows(projection.tails, edges.neighbors);
  const ad::Var interaction = ad::hadamard(tail_nb, ad::tanh(ad::add(head_rep, tail_nb)));
  const ad::Var message = ad::matmul(ad::segment_weighted_sum(attention, interaction), params.w_msg);
  const ad::Var updated = ad::tanh(ad::add(ad::matmul(nodes, params.w_self), message));
  return {updated, attention};
}

ReadoutResult readout(ad::Var updated, const KgnVars& params) {
  if (updated.rows() < 1) throw ShapeError("readout: empty node set");
  if (updated.cols() != params.query.rows()) throw ShapeError("readout: query dim mismatch");
  const ad::Var weights = ad::softmax_rows(ad::transpose(ad::matmul(updated, params.query)));
  return {ad::matmul(weights, updated), weights};
}

AggregateResult aggregate(ad::Var nodes, const KgnVars& params) {
  const Projection projection = head_tail_project(nodes, params);
  EdgeSet edges = build_dynamic_edges(projection.heads.value(), projection.tails.value(), params.top_k);
  AttentionResult attention = knowledge_attention_aggregate(nodes, projection, edges, params);
  ReadoutResult pooled = readout(attention.updated, params);
  return {std::move(edges), attention, pooled};
}

}  // namespace hmkg::kgn
