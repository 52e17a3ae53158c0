#pragma once

#include <filesystem>
#include <string>

namespace cflow::acceptance {

struct Outcome {
  bool passed = false;
  std::string detail;
};

/// Where recipes live and where trained checkpoints are cached between
/// criteria. Training is deterministic, so a cached checkpoint is exactly the
/// model a fresh run would produce.
struct Paths {
  std::filesystem::path recipes;
  std::filesystem::path cache;
};

Outcome invertibility();
Outcome logdet_exactness();
Outcome normalization();
Outcome gradient_suite();
Outcome baseline_failure(const Paths& paths);
Outcome bottleneck_improvement(const Paths& paths);
Outcome cyclemask_improvement(const Paths& paths);
Outcome contrastive_separation(const Paths& paths);
Outcome batchnorm_mode_effect(const Paths& paths);
Outcome vector_sanity(const Paths& paths);
Outcome determinism(const std::filesystem::path& recipes);
Outcome auroc_oracle();

}  // namespace cflow::acceptance
