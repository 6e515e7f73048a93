#include "hmkg/survival_head.hpp"

#include "hmkg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace hmkg::survival {

void TimeBinning::validate() const {
  if (bins < 2) throw DomainError("TimeBinning: need at least 2 bins");
  if (static_cast<int>(cut_points.size()) != bins - 1) {
    throw DomainError("TimeBinning: expected bins - 1 cut points");
  }
  for (std::size_t i = 1; i < cut_points.size(); ++i) {
    if (!(cut_points[i] > cut_points[i - 1])) throw DomainError("TimeBinning: cut points must increase strictly");
  }
}

int TimeBinning::assign_bin(double time) const {
  return static_cast<int>(std::upper_bound(cut_points.begin(), cut_points.end(), time) - cut_points.begin());
}

namespace {

// Linear-interpolation quantile of sorted data.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<double> cuts_from(std::vector<double> times, int bins) {
  std::sort(times.begin(), times.end());
  std::vector<double> cuts;
  for (int b = 1; b < bins; ++b) cuts.push_back(quantile(times, static_cast<double>(b) / bins));
  return cuts;
}

bool strictly_increasing(const std::vector<double>& v) {
  return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
}

}  // namespace

TimeBinning discretize_time(std::span<const SurvivalRecord> training, int bins) {
  if (training.empty()) throw DomainError("discretize_time: no records");
  if (bins < 2) throw DomainError("discretize_time: need at least 2 bins");
  std::vector<double> events, all;
  for (const SurvivalRecord& r : training) {
    all.push_back(r.time);
    if (r.event) events.push_back(r.time);
  }
  TimeBinning binning;
  binning.bins = bins;
  binning.cut_points = cuts_from(static_cast<int>(events.size()) >= bins ? events : all, bins);
  if (!strictly_increasing(binning.cut_points)) binning.cut_points = cuts_from(all, bins);
  binning.validate();
  return binning;
}

void assign_bins(std::vector<SurvivalRecord>& records, const TimeBinning& binning) {
  for (SurvivalRecord& r : records) r.bin = binning.assign_bin(r.time);
}

HazardOutput HazardOutput::from_logits(const Eigen::RowVectorXd& logits) {
  HazardOutput out;
  out.logits = logits;
  out.hazards = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
  out.survival.resize(logits.size());
  double s = 1.0;
  for (Eigen::Index t = 0; t < logits.size(); ++t) {
    s *= 1.0 - out.hazards(t);
    out.survival(t) = s;
  }
  out.risk = risk_score(out);
  return out;
}

double risk_score(const HazardOutput& output) { return -output.survival.sum(); }

namespace {

void check_record(const SurvivalRecord& record, Eigen::Index bins) {
  if (!record.bin) throw DomainError("nll_surv_loss: slide " + record.slide_id + " has no assigned bin");
  if (*record.bin < 0 || *record.bin >= bins) throw DomainError("nll_surv_loss: bin out of range");
}

// loss = sum_t -a_t log(max(1 - h_t, eps)) - b_t log(max(h_t, eps))
struct Coefficients {
  Eigen::RowVectorXd on_survive;
  Eigen::RowVectorXd on_event;
};

Coefficients coefficients(const SurvivalRecord& record, Eigen::Index bins, double alpha) {
  Coefficients c{Eigen::RowVectorXd::Zero(bins), Eigen::RowVectorXd::Zero(bins)};
  const int b = *record.bin;
  if (record.event) {
    c.on_survive.head(b).setOnes();
    c.on_event(b) = 1.0;
  } else {
    c.on_survive.head(b + 1).setConstant(1.0 - alpha);
  }
  return c;
}

double loss_value(const Eigen::RowVectorXd& hazards, const Coefficients& c) {
  double loss = 0.0;
  for (Eigen::Index t = 0; t < hazards.size(); ++t) {
    if (c.on_survive(t) != 0.0) loss -= c.on_survive(t) * std::log(std::max(1.0 - hazards(t), kLogEpsilon));
    if (c.on_event(t) != 0.0) loss -= c.on_event(t) * std::log(std::max(hazards(t), kLogEpsilon));
  }
  return loss;
}

}  // namespace

double nll_surv_loss(const HazardOutput& output, const SurvivalRecord& record, double alpha) {
  check_record(record, output.hazards.size());
  return loss_value(output.hazards, coefficients(record, output.hazards.size(), alpha));
}

double nll_surv_loss(std::span<const HazardOutput> outputs, std::span<const SurvivalRecord> records,
                     double alpha) {
  if (outputs.size() != records.size() || outputs.empty()) {
    throw DomainError("nll_surv_loss: batch sizes differ or are empty");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) total += nll_surv_loss(outputs[i], records[i], alpha);
  return total / static_cast<double>(outputs.size());
}

ad::Var nll_surv_loss(ad::Var logits, const SurvivalRecord& record, double alpha) {
  if (logits.rows() != 1) throw ShapeError("nll_surv_loss: logits must be a single row");
  check_record(record, logits.cols());
  const Eigen::RowVectorXd z = logits.value().row(0);
  const Eigen::RowVectorXd h = (1.0 / (1.0 + (-z.array()).exp())).matrix();
  const Coefficients c = coefficients(record, z.size(), alpha);
  ad::Matrix value(1, 1);
  value(0, 0) = loss_value(h, c);

  // d/dz -log(1 - h) = h, d/dz -log(h) = -(1 - h); zero where the clamp is active.
  ad::Matrix dz(1, z.size());
  for (Eigen::Index t = 0; t < z.size(); ++t) {
    double g = 0.0;
    if (1.0 - h(t) > kLogEpsilon) g += c.on_survive(t) * h(t);
    if (h(t) > kLogEpsilon) g -= c.on_event(t) * (1.0 - h(t));
    dz(0, t) = g;
  }
  const std::size_t id = logits.id();
  return logits.tape()->record(std::move(value), {logits}, [id, dz](ad::Tape& t, std::size_t self) {
    t.accumulate_expr(id, dz * t.grad_of(self)(0, 0));
  });
}

}  // namespace hmkg::survival
