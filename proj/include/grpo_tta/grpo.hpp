#pragma once

// Clipped group-relative surrogate loss (no KL term), its analytic gradient
// with respect to the projector, a central-difference oracle, and AdamW.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "grpo_tta/numerics.hpp"
#include "grpo_tta/policy.hpp"

namespace grpo_tta {

struct ClipConfig {
  double epsilon = 0.2;

  explicit ClipConfig(double eps = 0.2) : epsilon(eps) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
      throw std::invalid_argument("ClipConfig: epsilon must be in (0, 1)");
    }
  }
};

/// Clamp of z to [1 - epsilon, 1 + epsilon].
inline double cap(double z, double epsilon) {
  if (z < 1.0 - epsilon) return 1.0 - epsilon;
  if (z > 1.0 + epsilon) return 1.0 + epsilon;
  return z;
}

/// True when min(ratio*A, cap(ratio)*A) selects the unclipped term, i.e. the
/// term through which the ratio carries gradient. Ties count as unclipped.
inline bool ratio_term_active(double ratio, double advantage, double epsilon) {
  return ratio * advantage <= cap(ratio, epsilon) * advantage;
}

struct LossReport {
  double loss = 0.0;
  Vec64 per_candidate_ratio;
  std::vector<bool> clipped_mask;
  /// Filled by loss_and_gradient; zeros when produced by grpo_tta_loss alone.
  ProjectorParams gradient;
};

inline LossReport grpo_tta_loss(const PolicySnapshot& current, const PolicySnapshot& frozen,
                                const Vec64& adv, const ClipConfig& clip) {
  const std::size_t g = current.probs.size();
  if (frozen.probs.size() != g || adv.size() != g) {
    throw std::invalid_argument("grpo_tta_loss: group size mismatch");
  }
  std::vector<double> ratio(g);
  std::vector<bool> clipped(g);
  double total = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    ratio[i] = current.probs[i] / frozen.probs[i];
    const double capped = cap(ratio[i], clip.epsilon);
    clipped[i] = capped != ratio[i];
    total += std::min(ratio[i] * adv[i], capped * adv[i]);
  }
  return LossReport{-total / static_cast<double>(g), Vec64(std::move(ratio)), std::move(clipped),
                    ProjectorParams::zeros_like(current.source_params)};
}

/// Everything about an episode that stays fixed while theta is updated.
struct EpisodeContext {
  std::vector<Vec64> selected;
  const EmbeddingTable* table = nullptr;
  CandidateGroup group;
  PolicySnapshot frozen;
  Vec64 advantages;
  ClipConfig clip;
  double policy_temperature = 1.0;
};

inline PolicySnapshot current_policy(const ProjectorParams& theta, const EpisodeContext& ctx) {
  return candidate_policy(ctx.selected, theta, *ctx.table, ctx.group, ctx.policy_temperature);
}

inline double episode_loss(const ProjectorParams& theta, const EpisodeContext& ctx) {
  return grpo_tta_loss(current_policy(theta, ctx), ctx.frozen, ctx.advantages, ctx.clip).loss;
}

/// Backpropagates dL/d cos(project(view_j), t_{class_ids[m]}) (a views x M
/// matrix) through normalization and the linear map into a parameter gradient.
inline ProjectorParams backprop_view_cosines(std::span<const Vec64> views,
                                             const ProjectorParams& theta,
                                             const EmbeddingTable& table,
                                             std::span<const std::size_t> class_ids,
                                             const Mat64& d_cos) {
  const std::size_t d = theta.dim();
  ProjectorParams grad = ProjectorParams::zeros_like(theta);
  std::vector<double> du(d);
  for (std::size_t j = 0; j < views.size(); ++j) {
    const Vec64 y = project_raw(views[j], theta);
    const double ny = norm(y.span());
    if (!(ny > kMinNorm)) throw DegenerateInput("gradient: near-zero projected view");

    std::fill(du.begin(), du.end(), 0.0);
    for (std::size_t m = 0; m < class_ids.size(); ++m) {
      const double coef = d_cos(j, m);
      if (coef == 0.0) continue;
      const Vec64& t = table.text(class_ids[m]);
      for (std::size_t r = 0; r < d; ++r) du[r] += coef * t[r];
    }
    // d/dy of y/|y| is (I - u u^T) / |y|
    double u_dot_du = 0.0;
    for (std::size_t r = 0; r < d; ++r) u_dot_du += (y[r] / ny) * du[r];
    for (std::size_t r = 0; r < d; ++r) {
      const double dy = (du[r] - u_dot_du * y[r] / ny) / ny;
      if (dy == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) grad.W(r, c) += dy * views[j][c];
      if (theta.use_bias) grad.b[r] += dy;
    }
  }
  return grad;
}

/// Loss and exact gradient with respect to W (and b when enabled). The
/// advantages and the frozen policy are constants.
inline LossReport loss_and_gradient(const ProjectorParams& theta, const EpisodeContext& ctx) {
  const PolicySnapshot current = current_policy(theta, ctx);
  LossReport report = grpo_tta_loss(current, ctx.frozen, ctx.advantages, ctx.clip);

  const std::size_t g = ctx.group.size();
  const double inv_g = 1.0 / static_cast<double>(g);
  std::vector<double> d_prob(g, 0.0);
  for (std::size_t i = 0; i < g; ++i) {
    if (ratio_term_active(report.per_candidate_ratio[i], ctx.advantages[i], ctx.clip.epsilon)) {
      d_prob[i] = -inv_g * ctx.advantages[i] / ctx.frozen.probs[i];
    }
  }
  // softmax backward
  double weighted = 0.0;
  for (std::size_t i = 0; i < g; ++i) weighted += current.probs[i] * d_prob[i];
  const std::size_t views = ctx.selected.size();
  const double logit_scale =
      1.0 / (ctx.policy_temperature * static_cast<double>(views) * ctx.table->temperature());
  Mat64 d_cos(views, g);
  for (std::size_t i = 0; i < g; ++i) {
    const double d_logit = current.probs[i] * (d_prob[i] - weighted);
    for (std::size_t j = 0; j < views; ++j) d_cos(j, i) = d_logit * logit_scale;
  }
  report.gradient = backprop_view_cosines(ctx.selected, theta, *ctx.table, ctx.group.class_ids, d_cos);
  return report;
}

inline ProjectorParams loss_gradient(const ProjectorParams& theta, const EpisodeContext& ctx) {
  return loss_and_gradient(theta, ctx).gradient;
}

/// Central differences of an arbitrary scalar function of the parameters.
template <typename LossFn>
  requires std::invocable<LossFn&, const ProjectorParams&>
ProjectorParams finite_diff_gradient(const ProjectorParams& theta, LossFn&& loss, double h = 1e-5) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_gradient: h must be positive");
  ProjectorParams probe = theta;
  ProjectorParams grad = ProjectorParams::zeros_like(theta);
  for (std::size_t i = 0; i < theta.num_trainable(); ++i) {
    const double saved = probe.trainable(i);
    probe.trainable(i) = saved + h;
    const double up = loss(probe);
    probe.trainable(i) = saved - h;
    const double down = loss(probe);
    probe.trainable(i) = saved;
    grad.trainable(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

inline ProjectorParams finite_diff_gradient(const ProjectorParams& theta, const EpisodeContext& ctx,
                                            double h = 1e-5) {
  return finite_diff_gradient(
      theta, [&](const ProjectorParams& p) { return episode_loss(p, ctx); }, h);
}

struct OptimState {
  ProjectorParams first_moment;
  ProjectorParams second_moment;
  std::size_t step = 0;
  double learning_rate = 5e-6;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimState for_params(const ProjectorParams& theta, double learning_rate = 5e-6,
                               double weight_decay = 5e-4) {
    return OptimState{ProjectorParams::zeros_like(theta), ProjectorParams::zeros_like(theta), 0,
                      learning_rate, weight_decay};
  }
};

/// AdamW: weight decay is applied to the parameters directly, not folded
/// into the gradient.
inline void optimizer_step(ProjectorParams& theta, const ProjectorParams& grad, OptimState& state) {
  const std::size_t n = theta.num_trainable();
  if (grad.num_trainable() != n || state.first_moment.num_trainable() != n ||
      grad.dim() != theta.dim()) {
    throw std::invalid_argument("optimizer_step: shape mismatch");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  const double decay = 1.0 - state.learning_rate * state.weight_decay;
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = grad.trainable(i);
    double& m = state.first_moment.trainable(i);
    double& v = state.second_moment.trainable(i);
    m = state.beta1 * m + (1.0 - state.beta1) * gi;
    v = state.beta2 * v + (1.0 - state.beta2) * gi * gi;
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    double& p = theta.trainable(i);
    p *= decay;
    p -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

}  // namespace grpo_tta
