#include "hmkg/bix_fusion.hpp"

#include "hmkg/errors.hpp"

#include <cmath>
#include <vector>

namespace hmkg::bix {

std::string to_string(BixMode mode) { return mode == BixMode::kSet ? "set" : "vector"; }

BixMode bix_mode_from_string(const std::string& name) {
  if (name == "set") return BixMode::kSet;
  if (name == "vector") return BixMode::kVector;
  throw DomainError("unknown bix_mode '" + name + "'");
}

namespace {

ad::Matrix uniform_init(int rows, int cols, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(rows));
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
  return m;
}

}  // namespace

BixParams BixParams::init(int d_low, int d_high, int d, bool tied, int heads, Rng& rng) {
  if (d_low < 1 || d_high < 1 || d < 1) throw DomainError("BixParams: dims must be >= 1");
  if (tied && d_low != d_high) throw ConfigError("BixParams: tied projections need d_low == d_high");
  BixParams p;
  p.tied = tied;
  p.heads = heads;
  p.q_low = uniform_init(d_low, d, rng);
  p.k_low = uniform_init(d_low, d, rng);
  p.v_low = uniform_init(d_low, d, rng);
  if (!tied) {
    p.q_high = uniform_init(d_high, d, rng);
    p.k_high = uniform_init(d_high, d, rng);
    p.v_high = uniform_init(d_high, d, rng);
  }
  p.validate();
  return p;
}

void BixParams::validate() const {
  const int d = dim();
  if (d < 1) throw ShapeError("BixParams: attention dimension must be >= 1");
  if (heads < 1 || d % heads != 0) throw ConfigError("BixParams: heads must divide the attention dimension");
  auto same = [](const ad::Matrix& a, const ad::Matrix& b) { return a.rows() == b.rows() && a.cols() == b.cols(); };
  bool ok = same(q_low, k_low) && same(q_low, v_low);
  if (!tied) ok = ok && q_high.cols() == d && same(q_high, k_high) && same(q_high, v_high);
  if (!ok) throw ShapeError("BixParams: inconsistent projection shapes");
}

BixVars bind(ParamBinder& binder, const BixParams& params) {
  params.validate();
  BixVars v;
  v.q_low = binder(params.q_low);
  v.k_low = binder(params.k_low);
  v.v_low = binder(params.v_low);
  v.q_high = params.tied ? v.q_low : binder(params.q_high);
  v.k_high = params.tied ? v.k_low : binder(params.k_high);
  v.v_high = params.tied ? v.v_low : binder(params.v_high);
  v.heads = params.heads;
  return v;
}

CrossAttention cross_attention(ad::Var queries, ad::Var keys, ad::Var values, int heads) {
  if (keys.rows() < 1) throw ShapeError("cross_attention: need at least one key");
  if (queries.cols() != keys.cols() || keys.rows() != values.rows()) {
    throw ShapeError("cross_attention: Q/K/V shapes are inconsistent");
  }
  if (heads < 1 || queries.cols() % heads != 0 || values.cols() % heads != 0) {
    throw ShapeError("cross_attention: heads must divide the feature dimension");
  }
  if (heads == 1) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    const ad::Var attention = ad::softmax_rows(ad::scale(ad::matmul_nt(queries, keys), scale));
    return {ad::matmul(attention, values), attention};
  }
  // Multi-head: slice columns with constant selector matrices.
  ad::Tape& tape = *queries.tape();
  const ad::Index dq = queries.cols() / heads, dv = values.cols() / heads;
  std::vector<ad::Var> outputs, attentions;
  for (int h = 0; h < heads; ++h) {
    ad::Matrix sel_q = ad::Matrix::Zero(queries.cols(), dq);
    sel_q.block(h * dq, 0, dq, dq).setIdentity();
    ad::Matrix sel_v = ad::Matrix::Zero(values.cols(), dv);
    sel_v.block(h * dv, 0, dv, dv).setIdentity();
    const ad::Var pick_q = tape.constant(sel_q);
    const ad::Var pick_v = tape.constant(sel_v);
    CrossAttention head = cross_attention(ad::matmul(queries, pick_q), ad::matmul(keys, pick_q),
                                          ad::matmul(values, pick_v), 1);
    outputs.push_back(head.output);
    attentions.push_back(head.attention);
  }
  return {ad::concat_cols(outputs), ad::concat_rows(attentions)};
}

FusedRoi fuse_roi(ad::Var f_low, ad::Var high, const BixVars& params) {
  if (f_low.rows() != 1) throw ShapeError("fuse_roi: f_low must be a single row");
  if (!f_low.value().allFinite() || !high.value().allFinite()) {
    throw DomainError("fuse_roi: non-finite input");
  }
  const ad::Var q_l = ad::matmul(f_low, params.q_low);
  const ad::Var k_l = ad::matmul(f_low, params.k_low);
  const ad::Var v_l = ad::matmul(f_low, params.v_low);
  const ad::Var q_h = ad::matmul(high, params.q_high);
  const ad::Var k_h = ad::matmul(high, params.k_high);
  const ad::Var v_h = ad::matmul(high, params.v_high);

  FusedRoi out;
  out.low_to_high = cross_attention(q_l, k_h, v_h, params.heads);
  out.high_to_low = cross_attention(q_h, k_l, v_l, params.heads);
  const std::vector<ad::Var> parts = {out.low_to_high.output, ad::mean_rows(out.high_to_low.output)};
  out.fused = ad::concat_cols(parts);
  return out;
}

}  // namespace hmkg::bix
