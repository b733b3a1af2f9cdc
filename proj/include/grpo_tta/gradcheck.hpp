#pragma once

// Random GRPO episodes and the analytic-vs-finite-difference comparison run
// over them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "grpo_tta/grpo.hpp"
#include "grpo_tta/numerics.hpp"
#include "grpo_tta/policy.hpp"
#include "grpo_tta/rewards.hpp"

namespace grpo_tta {

struct EpisodeShape {
  std::size_t dim = 8;
  std::size_t classes = 10;
  std::size_t k = 4;
  std::size_t views = 4;
};

/// A self-contained random episode: the table is owned here so the context
/// can point at it.
struct RandomEpisode {
  EmbeddingTable table;
  ProjectorParams theta_old;
  ProjectorParams theta;  // evaluation point, perturbed away from theta_old
  EpisodeContext ctx;

  RandomEpisode(EmbeddingTable t, ProjectorParams old_params, ProjectorParams params,
                std::vector<Vec64> views)
      : table(std::move(t)),
        theta_old(std::move(old_params)),
        theta(std::move(params)),
        ctx{std::move(views), &table, CandidateGroup{},
            PolicySnapshot{Vec64{1.0}, Vec64{0.0}, theta_old}, Vec64{0.0}, ClipConfig(0.2), 1.0} {}
  RandomEpisode(const RandomEpisode&) = delete;
  RandomEpisode& operator=(const RandomEpisode&) = delete;
};

/// Random episode on the given shape. The table temperature is `min_tau`
/// unless the mean-cosine spread across classes would push the logit spread
/// past `max_logit_spread`, in which case tau is raised to cap it; saturated
/// policies have gradients below what central differences can resolve.
inline std::unique_ptr<RandomEpisode> make_random_episode(std::uint64_t seed,
                                                          const EpisodeShape& shape,
                                                          bool use_bias = false,
                                                          double perturbation = 0.05,
                                                          double min_tau = 0.01,
                                                          double max_logit_spread = 6.0) {
  SeededRng rng(seed);
  // class texts clustered around a shared anchor, as contrastive text towers produce
  const Vec64 anchor = l2_normalize(gaussian_sample(rng, shape.dim, 1.0));
  std::vector<Vec64> texts;
  for (std::size_t c = 0; c < shape.classes; ++c) {
    Vec64 t = gaussian_sample(rng, shape.dim, 0.02);
    for (std::size_t r = 0; r < shape.dim; ++r) t[r] += anchor[r];
    texts.push_back(l2_normalize(t));
  }

  ProjectorParams theta_old = ProjectorParams::identity(shape.dim, use_bias);
  for (double& x : theta_old.W.span()) x += 0.1 * rng.normal();
  if (use_bias) {
    for (double& x : theta_old.b.span()) x = 0.05 * rng.normal();
  }

  Vec64 original = gaussian_sample(rng, shape.dim, 0.5);
  for (std::size_t r = 0; r < shape.dim; ++r) original[r] += anchor[r];
  std::vector<Vec64> views;
  for (std::size_t j = 0; j < shape.views; ++j) {
    Vec64 v = gaussian_sample(rng, shape.dim, 0.1);
    for (std::size_t r = 0; r < shape.dim; ++r) v[r] += original[r];
    views.push_back(std::move(v));
  }

  std::vector<double> mean_cos(shape.classes, 0.0);
  for (const auto& v : views) {
    const Vec64 u = project(v, theta_old);
    for (std::size_t c = 0; c < shape.classes; ++c) mean_cos[c] += cosine(u, texts[c]);
  }
  const auto [lo, hi] = std::minmax_element(mean_cos.begin(), mean_cos.end());
  const double spread = (*hi - *lo) / static_cast<double>(views.size());
  const double tau = std::max(min_tau, spread / max_logit_spread);
  EmbeddingTable table = EmbeddingTable::with_default_names(std::move(texts), tau);

  // theta moves away from theta_old by an amount comparable to tau so that
  // some ratios leave the clip range and some do not
  ProjectorParams theta = theta_old;
  for (std::size_t i = 0; i < theta.num_trainable(); ++i) {
    theta.trainable(i) += perturbation * (tau / min_tau) * rng.normal();
  }

  auto ep = std::make_unique<RandomEpisode>(std::move(table), std::move(theta_old),
                                            std::move(theta), std::move(views));
  const Vec64 agg = aggregate_distribution(ep->ctx.selected, ep->theta_old, ep->table);
  ep->ctx.group = topk_candidates(agg, shape.k);
  ep->ctx.frozen = candidate_policy(ep->ctx.selected, ep->theta_old, ep->table, ep->ctx.group);
  if (shape.k >= 2) {
    ep->ctx.advantages = compute_rewards(original, ep->ctx.selected, ep->theta_old, ep->table,
                                         ep->ctx.group, 1.0, 2.5)
                             .advantages;
  } else {
    ep->ctx.advantages = Vec64::zeros(1);
  }
  return ep;
}

/// Per-candidate flags for whether the ratio term carries gradient at theta.
inline std::vector<bool> active_branches(const ProjectorParams& theta, const EpisodeContext& ctx) {
  const LossReport r = grpo_tta_loss(current_policy(theta, ctx), ctx.frozen, ctx.advantages, ctx.clip);
  std::vector<bool> out(r.per_candidate_ratio.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ratio_term_active(r.per_candidate_ratio[i], ctx.advantages[i], ctx.clip.epsilon);
  }
  return out;
}

struct GradientComparison {
  double max_relative_error = 0.0;
  std::size_t compared = 0;
  std::size_t excluded = 0;
};

/// Max-norm relative error between analytic and central-difference
/// gradients. Parameters whose +-10h probe changes which min() branch is
/// active for any candidate are excluded.
inline GradientComparison compare_gradients(const ProjectorParams& theta, const EpisodeContext& ctx,
                                            double h = 1e-5) {
  const ProjectorParams analytic = loss_gradient(theta, ctx);
  const ProjectorParams numeric = finite_diff_gradient(theta, ctx, h);
  const std::vector<bool> base = active_branches(theta, ctx);

  GradientComparison out;
  double diff = 0.0;
  double scale = 0.0;
  ProjectorParams probe = theta;
  for (std::size_t i = 0; i < theta.num_trainable(); ++i) {
    const double saved = probe.trainable(i);
    probe.trainable(i) = saved + 10.0 * h;
    const bool up_same = active_branches(probe, ctx) == base;
    probe.trainable(i) = saved - 10.0 * h;
    const bool down_same = active_branches(probe, ctx) == base;
    probe.trainable(i) = saved;
    if (!up_same || !down_same) {
      ++out.excluded;
      continue;
    }
    ++out.compared;
    diff = std::max(diff, std::abs(analytic.trainable(i) - numeric.trainable(i)));
    scale = std::max({scale, std::abs(analytic.trainable(i)), std::abs(numeric.trainable(i))});
  }
  out.max_relative_error = scale > 0.0 ? diff / scale : diff;
  return out;
}

struct GradientSuiteResult {
  double max_relative_error = 0.0;
  std::size_t episodes = 0;
  std::size_t compared = 0;
  std::size_t excluded = 0;
};

/// Sweeps seeds over D in {4, 8}, C in {5, 10}, K in {2, 4}, B in {1, 4}, with
/// and without bias.
inline GradientSuiteResult run_gradient_suite(std::size_t num_seeds, std::uint64_t base_seed = 1) {
  static constexpr std::size_t dims[] = {4, 8};
  static constexpr std::size_t classes[] = {5, 10};
  static constexpr std::size_t ks[] = {2, 4};
  static constexpr std::size_t views[] = {1, 4};
  GradientSuiteResult out;
  for (std::size_t s = 0; s < num_seeds; ++s) {
    const EpisodeShape shape{dims[s % 2], classes[(s / 2) % 2], ks[(s / 4) % 2], views[(s / 8) % 2]};
    const bool bias = (s / 16) % 2 == 1;
    auto ep = make_random_episode(base_seed + s, shape, bias);
    const GradientComparison cmp = compare_gradients(ep->theta, ep->ctx);
    out.max_relative_error = std::max(out.max_relative_error, cmp.max_relative_error);
    out.compared += cmp.compared;
    out.excluded += cmp.excluded;
    ++out.episodes;
  }
  return out;
}

}  // namespace grpo_tta
