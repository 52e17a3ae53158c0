#pragma once

#include <span>
#include <vector>

#include "cflow/flow/model.hpp"
#include "cflow/training/preprocess.hpp"

namespace cflow {

/// Per-example log-likelihood in nats, offsets included (N x 1).
struct LikelihoodPass {
  Var logp;
  std::vector<BatchStats> batch_stats;  // train mode only
};
LikelihoodPass log_likelihood(const ParamBinder& bind, const FlowModel& model, const Dequantized& batch, BnMode mode);

/// Value to maximize plus what the step needs afterwards.
struct ObjectiveTerms {
  Var objective;  // 1 x 1
  std::vector<BatchStats> batch_stats;  // from the in-distribution pass
  std::size_t ood_active = 0;           // OOD examples above the floor
};

/// Mean log-likelihood of the batch.
ObjectiveTerms mle_objective(const ParamBinder& bind, const FlowModel& model, const Dequantized& batch, BnMode mode);

/// mean(log p_in) - sum(log p_ood * I[log p_ood > c]) / #{log p_ood > c}, with
/// the second term 0 when no OOD example exceeds c. The indicator is fixed
/// from the forward values, so no gradient flows through it. The OOD batch is
/// always evaluated with eval-mode batch norm.
ObjectiveTerms contrastive_objective(const ParamBinder& bind, const FlowModel& model, const Dequantized& in_batch,
                                     BnMode in_mode, const Dequantized& ood_batch, double c);

/// The contrastive objective on precomputed log-likelihoods.
double contrastive_value(std::span<const double> in_logp, std::span<const double> ood_logp, double c);

/// -mean(log p) without gradients.
double mle_loss(const FlowModel& model, const Dequantized& batch, BnMode mode);

/// Log-likelihoods (offsets included) without gradients.
std::vector<double> batch_log_likelihood(const FlowModel& model, const Dequantized& batch, BnMode mode);

}  // namespace cflow
