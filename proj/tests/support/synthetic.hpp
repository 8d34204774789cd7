#pragma once

#include <cmath>
#include <vector>

#include "graded/classifier.hpp"
#include "graded/random.hpp"

namespace graded::testing {

struct SyntheticConfig {
  std::size_t classes = 3;
  std::size_t per_class = 200;
  std::size_t dim = 16;
  // Distance from each class mean to the midpoint with its neighbour, in
  // units of the per-coordinate noise sigma.
  double margin_sigmas = 3.0;
  double sigma = 1.0;
  std::uint64_t seed = 1;
};

// Gaussian clusters whose means sit on a line through the origin, so class
// order matches geometric order (ordinal structure).
inline std::vector<classifier::LabeledVector> ordinal_gaussians(const SyntheticConfig& cfg) {
  Rng rng(cfg.seed);
  std::vector<double> direction(cfg.dim);
  double norm = 0.0;
  for (double& x : direction) {
    x = rng.normal();
    norm += x * x;
  }
  for (double& x : direction) x /= std::sqrt(norm);
  const double spacing = 2.0 * cfg.margin_sigmas * cfg.sigma;
  const double center = 0.5 * static_cast<double>(cfg.classes - 1);
  std::vector<classifier::LabeledVector> out;
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    const double offset = (static_cast<double>(k) - center) * spacing;
    for (std::size_t n = 0; n < cfg.per_class; ++n) {
      classifier::LabeledVector ex;
      ex.label = k;
      ex.vector.provider_id = "synthetic";
      ex.vector.values.resize(cfg.dim);
      for (std::size_t j = 0; j < cfg.dim; ++j) {
        ex.vector.values[j] = offset * direction[j] + cfg.sigma * rng.normal();
      }
      out.push_back(std::move(ex));
    }
  }
  return out;
}

inline classifier::DifficultyScale numbered_scale(std::size_t k) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < k; ++i) labels.push_back("level" + std::to_string(i + 1));
  return classifier::DifficultyScale(labels);
}

}  // namespace graded::testing
