#pragma once

// Synthetic distribution-shift benchmark: Gaussian class prototypes, noisy
// samples pushed through a blended identity/random linear shift, and jittered
// views around each shifted sample.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "grpo_tta/embedding_file.hpp"
#include "grpo_tta/numerics.hpp"
#include "grpo_tta/pipeline.hpp"
#include "grpo_tta/policy.hpp"

namespace grpo_tta {

struct SynthConfig {
  std::size_t dim = 64;
  std::size_t classes = 20;
  std::size_t samples = 500;
  std::size_t views = 32;
  double sigma_class = 0.1;  // intra-class noise
  double sigma_view = 0.05;  // view jitter
  double shift = 0.35;       // 0 = no shift, 1 = pure random map
  std::uint64_t seed = 7;
  double tau = 0.01;

  void validate() const {
    if (dim == 0 || classes < 2 || samples == 0) {
      throw std::invalid_argument("SynthConfig: need dim >= 1, classes >= 2, samples >= 1");
    }
    if (sigma_class < 0.0 || sigma_view < 0.0) {
      throw std::invalid_argument("SynthConfig: sigmas must be nonnegative");
    }
    if (shift < 0.0 || shift > 1.0) throw std::invalid_argument("SynthConfig: shift must be in [0, 1]");
    if (!(tau > 0.0)) throw std::invalid_argument("SynthConfig: tau must be positive");
  }
};

/// The shift operator (1 - s) I + s R, with R Gaussian scaled by 1/sqrt(D).
inline Mat64 shift_operator(SeededRng& rng, std::size_t dim, double s) {
  Mat64 m(dim, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      m(r, c) = s * scale * rng.normal() + (r == c ? 1.0 - s : 0.0);
    }
  }
  return m;
}

/// Bit-deterministic in the config. Samples keep their views in the returned
/// dataset; `views = 0` yields originals only.
inline EmbeddingFile generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  SeededRng rng(cfg.seed);
  std::vector<Vec64> prototypes;
  prototypes.reserve(cfg.classes);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    prototypes.push_back(l2_normalize(gaussian_sample(rng, cfg.dim, 1.0)));
  }
  const ProjectorParams shift{shift_operator(rng, cfg.dim, cfg.shift), false, Vec64::zeros(cfg.dim)};

  Dataset data;
  data.labels.emplace();
  data.samples.reserve(cfg.samples);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const std::size_t label = rng.below(cfg.classes);
    Vec64 noisy = gaussian_sample(rng, cfg.dim, cfg.sigma_class);
    for (std::size_t r = 0; r < cfg.dim; ++r) noisy[r] += prototypes[label][r];
    Vec64 shifted = project(l2_normalize(noisy), shift);

    std::vector<Vec64> views;
    views.reserve(cfg.views);
    for (std::size_t v = 0; v < cfg.views; ++v) {
      Vec64 view = gaussian_sample(rng, cfg.dim, cfg.sigma_view);
      for (std::size_t r = 0; r < cfg.dim; ++r) view[r] += shifted[r];
      views.push_back(l2_normalize(view));
    }
    data.samples.push_back(SampleViews{std::move(shifted), std::move(views)});
    data.labels->push_back(label);
  }
  return EmbeddingFile{EmbeddingTable::with_default_names(std::move(prototypes), cfg.tau),
                       std::move(data)};
}

}  // namespace grpo_tta
