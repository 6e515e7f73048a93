#pragma once

#include "hmkg/autodiff.hpp"
#include "hmkg/slide_geometry.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

// Discrete-time survival: T time bins, per-bin hazards h_t = sigmoid(logit_t),
// survival S_t = prod_{tau <= t} (1 - h_tau).
namespace hmkg::survival {

inline constexpr double kLogEpsilon = 1e-7;

struct TimeBinning {
  int bins = 4;
  std::vector<double> cut_points;  // bins - 1, strictly increasing

  void validate() const;
  // Index of the half-open interval [cut_{b-1}, cut_b) holding `time`.
  int assign_bin(double time) const;
};

// Cut points at the training-set quantiles of uncensored times (all times
// when fewer than `bins` events are available).
TimeBinning discretize_time(std::span<const SurvivalRecord> training, int bins = 4);

void assign_bins(std::vector<SurvivalRecord>& records, const TimeBinning& binning);

struct HazardOutput {
  Eigen::RowVectorXd logits;
  Eigen::RowVectorXd hazards;
  Eigen::RowVectorXd survival;
  double risk = 0.0;

  static HazardOutput from_logits(const Eigen::RowVectorXd& logits);
};

// risk = -sum_t S_t
double risk_score(const HazardOutput& output);

// NLL survival loss of one record. Censored terms are scaled by (1 - alpha);
// alpha = 0 gives the plain likelihood.
double nll_surv_loss(const HazardOutput& output, const SurvivalRecord& record, double alpha = 0.0);
double nll_surv_loss(std::span<const HazardOutput> outputs, std::span<const SurvivalRecord> records,
                     double alpha = 0.0);

// Differentiable form on a 1 x T logit row; returns a 1x1 loss node.
ad::Var nll_surv_loss(ad::Var logits, const SurvivalRecord& record, double alpha = 0.0);

}  // namespace hmkg::survival
