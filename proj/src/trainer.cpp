#include "hmkg/trainer.hpp"

#include "hmkg/errors.hpp"
#include "hmkg/rng.hpp"

#include <cmath>
#include <numeric>

namespace hmkg::harness {

namespace {

std::vector<ad::Matrix*> tensors(model::HmkgParams& p) {
  std::vector<ad::Matrix*> out;
  p.for_each([&out](const std::string&, ad::Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const ad::Matrix*> tensors(const model::HmkgParams& p) {
  std::vector<const ad::Matrix*> out;
  p.for_each([&out](const std::string&, const ad::Matrix& m) { out.push_back(&m); });
  return out;
}

void check_inputs(std::span<const FeatureBag* const> bags, std::span<const SurvivalRecord> records) {
  if (bags.empty() || bags.size() != records.size()) {
    throw DomainError("training set is empty or bags and records differ in length");
  }
}

}  // namespace

LossAndGradient loss_and_gradient(const model::HmkgParams& params, std::span<const FeatureBag* const> bags,
                                  std::span<const SurvivalRecord> records, double censor_alpha) {
  check_inputs(bags, records);
  LossAndGradient out{0.0, params.zeros_like()};
  const std::vector<const ad::Matrix*> source = tensors(params);
  const std::vector<ad::Matrix*> target = tensors(out.gradient);
  for (std::size_t i = 0; i < bags.size(); ++i) {
    ad::Tape tape;
    ParamBinder binder(tape, true);
    const model::ForwardTrace trace = model::forward(*bags[i], params, binder);
    const ad::Var loss = survival::nll_surv_loss(trace.logits, records[i], censor_alpha);
    tape.backward(loss);
    out.loss += loss.value()(0, 0);
    for (std::size_t t = 0; t < source.size(); ++t) *target[t] += binder.grad(*source[t]);
  }
  const double n = static_cast<double>(bags.size());
  out.loss /= n;
  for (ad::Matrix* g : target) *g /= n;
  return out;
}

double mean_loss(const model::HmkgParams& params, std::span<const FeatureBag* const> bags,
                 std::span<const SurvivalRecord> records, double censor_alpha) {
  check_inputs(bags, records);
  double total = 0.0;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    total += survival::nll_surv_loss(model::predict(*bags[i], params), records[i], censor_alpha);
  }
  return total / static_cast<double>(bags.size());
}

TrainResult train(const RunConfig& config, std::span<const FeatureBag* const> bags,
                  std::span<const SurvivalRecord> records) {
  config.validate();
  check_inputs(bags, records);
  const OptimizerConfig& opt = config.optimizer;

  TrainResult result{model::HmkgParams::init(config.model, config.seed), {}};
  result.log.initial_loss = mean_loss(result.params, bags, records, config.censor_alpha);

  model::HmkgParams first = result.params.zeros_like();
  model::HmkgParams second = result.params.zeros_like();
  const std::vector<ad::Matrix*> weights = tensors(result.params);
  const std::vector<ad::Matrix*> m1 = tensors(first);
  const std::vector<ad::Matrix*> m2 = tensors(second);

  Rng order_rng(derive_seed(config.seed, "batch-order"));
  std::vector<std::size_t> order(bags.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      std::vector<const FeatureBag*> batch_bags;
      std::vector<SurvivalRecord> batch_records;
      for (std::size_t i = start; i < end; ++i) {
        batch_bags.push_back(bags[order[i]]);
        batch_records.push_back(records[order[i]]);
      }
      LossAndGradient lg;
      try {
        lg = loss_and_gradient(result.params, batch_bags, batch_records, config.censor_alpha);
      } catch (const DomainError& e) {
        // After an update, overflowing activations mean the run diverged.
        if (step == 0) throw;
        throw TrainingError("diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      if (!std::isfinite(lg.loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
      }
      epoch_total += lg.loss * static_cast<double>(end - start);
      const std::vector<ad::Matrix*> grads = tensors(lg.gradient);
      ++step;
      for (std::size_t t = 0; t < weights.size(); ++t) {
        ad::Matrix g = *grads[t];
        if (opt.weight_decay > 0.0) g += opt.weight_decay * *weights[t];
        if (opt.kind == OptimizerKind::kMomentum) {
          *m1[t] = opt.momentum * *m1[t] + g;
          *weights[t] -= opt.learning_rate * *m1[t];
        } else {
          *m1[t] = opt.beta1 * *m1[t] + (1.0 - opt.beta1) * g;
          *m2[t] = opt.beta2 * *m2[t] + (1.0 - opt.beta2) * g.cwiseProduct(g);
          const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
          const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
          *weights[t] -= (opt.learning_rate / c1) *
                         (m1[t]->array() / ((m2[t]->array() / c2).sqrt() + opt.adam_epsilon)).matrix();
        }
        if (!weights[t]->allFinite()) {
          throw TrainingError("non-finite parameters at epoch " + std::to_string(epoch));
        }
      }
    }
    result.log.epoch_loss.push_back(epoch_total / static_cast<double>(order.size()));
  }
  result.log.final_loss = mean_loss(result.params, bags, records, config.censor_alpha);
  if (!std::isfinite(result.log.final_loss)) {
    throw TrainingError("non-finite loss at epoch " + std::to_string(opt.epochs));
  }
  return result;
}

}  // namespace hmkg::harness
