#include "cflow/training/objectives.hpp"

#include "cflow/errors.hpp"

namespace cflow {

LikelihoodPass log_likelihood(const ParamBinder& bind, const FlowModel& model, const Dequantized& batch, BnMode mode) {
  Tape& t = bind.tape();
  if (batch.values.rows() == 0) throw ContractViolation("log-likelihood of an empty batch");
  auto pass = model.to_latent(bind, t.constant(batch.values), mode);
  return {t.add(pass.logprob, t.constant(batch.offset)), std::move(pass.batch_stats)};
}

ObjectiveTerms mle_objective(const ParamBinder& bind, const FlowModel& model, const Dequantized& batch, BnMode mode) {
  auto ll = log_likelihood(bind, model, batch, mode);
  return {bind.tape().mean_all(ll.logp), std::move(ll.batch_stats), 0};
}

ObjectiveTerms contrastive_objective(const ParamBinder& bind, const FlowModel& model, const Dequantized& in_batch,
                                     BnMode in_mode, const Dequantized& ood_batch, double c) {
  Tape& t = bind.tape();
  if (ood_batch.values.rows() == 0) throw ContractViolation("contrastive objective needs a nonempty OOD batch");
  auto in = log_likelihood(bind, model, in_batch, in_mode);
  ObjectiveTerms terms{t.mean_all(in.logp), std::move(in.batch_stats), 0};
  auto ood = log_likelihood(bind, model, ood_batch, BnMode::kEval);
  const Tensor& ood_values = t.value(ood.logp);
  Tensor indicator(ood_values.shape());
  for (std::size_t i = 0; i < ood_values.size(); ++i) {
    indicator[i] = ood_values[i] > c ? 1.0 : 0.0;
    terms.ood_active += ood_values[i] > c;
  }
  if (terms.ood_active == 0) return terms;
  Var pushed = t.scale(t.sum_all(t.mul(ood.logp, t.constant(indicator))), 1.0 / static_cast<double>(terms.ood_active));
  terms.objective = t.sub(terms.objective, pushed);
  return terms;
}

double contrastive_value(std::span<const double> in_logp, std::span<const double> ood_logp, double c) {
  if (in_logp.empty() || ood_logp.empty()) throw ContractViolation("contrastive objective needs two nonempty batches");
  double in = 0.0;
  for (double v : in_logp) in += v;
  in /= static_cast<double>(in_logp.size());
  double pushed = 0.0;
  std::size_t active = 0;
  for (double v : ood_logp)
    if (v > c) {
      pushed += v;
      ++active;
    }
  return active == 0 ? in : in - pushed / static_cast<double>(active);
}

std::vector<double> batch_log_likelihood(const FlowModel& model, const Dequantized& batch, BnMode mode) {
  Tape tape;
  ParamBinder bind(tape, model.params());
  const Tensor& v = tape.value(log_likelihood(bind, model, batch, mode).logp);
  return {v.data().begin(), v.data().end()};
}

double mle_loss(const FlowModel& model, const Dequantized& batch, BnMode mode) {
  double s = 0.0;
  const auto ll = batch_log_likelihood(model, batch, mode);
  for (double v : ll) s += v;
  return -s / static_cast<double>(ll.size());
}

}  // namespace cflow
