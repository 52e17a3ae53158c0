#include <CLI11.hpp>

#include <chrono>
#include <functional>
#include <iostream>

#include "cflow/errors.hpp"
#include "criteria.hpp"

using namespace cflow::acceptance;

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks; prints one PASS/FAIL line per criterion"};
  std::vector<int> criteria;
  Paths paths{CFLOW_RECIPES_DIR, "acceptance_cache"};
  app.add_option("--criterion", criteria, "Criterion numbers (default: all)")->check(CLI::Range(1, 12));
  app.add_option("--recipes", paths.recipes, "Recipe directory")->capture_default_str();
  app.add_option("--cache", paths.cache, "Checkpoint cache directory")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  if (criteria.empty())
    for (int c = 1; c <= 12; ++c) criteria.push_back(c);

  const std::function<Outcome()> table[] = {
      invertibility,
      logdet_exactness,
      normalization,
      gradient_suite,
      [&] { return baseline_failure(paths); },
      [&] { return bottleneck_improvement(paths); },
      [&] { return cyclemask_improvement(paths); },
      [&] { return contrastive_separation(paths); },
      [&] { return batchnorm_mode_effect(paths); },
      [&] { return vector_sanity(paths); },
      [&] { return determinism(paths.recipes); },
      auroc_oracle,
  };
  int failures = 0;
  for (int c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = table[c - 1]();
    } catch (const cflow::Error& e) {
      o = {false, "error: " + e.category() + ": " + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << c << ": " << (o.passed ? "PASS" : "FAIL") << " | " << o.detail << " | "
              << static_cast<int>(seconds + 0.5) << "s" << std::endl;
    failures += !o.passed;
  }
  return failures == 0 ? 0 : 1;
}
