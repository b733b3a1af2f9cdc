#pragma once

// Label-free rewards for a candidate group and their group-relative
// standardization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "grpo_tta/numerics.hpp"
#include "grpo_tta/policy.hpp"

namespace grpo_tta {

struct RewardBundle {
  Vec64 align;
  Vec64 disp;
  Vec64 combined;
  Vec64 advantages;
  double lambda = 1.0;
  double w = 2.5;
};

/// Standard deviations below this are treated as a degenerate group.
inline constexpr double kAdvantageStdFloor = 1e-8;

/// w * max(cos(t_c, v), 0) for each candidate c.
inline Vec64 alignment_rewards(const Vec64& original, const EmbeddingTable& table,
                               const CandidateGroup& group, double w) {
  if (!(w > 0.0)) throw std::invalid_argument("alignment_rewards: w must be positive");
  check_group(group, table);
  std::vector<double> out(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    out[i] = w * std::max(cosine(table.text(group.class_ids[i]), original), 0.0);
  }
  return Vec64(std::move(out));
}

/// B x K matrix of cos(project(view_j), t_{c_i}).
inline Mat64 sim_matrix(std::span<const Vec64> selected, const ProjectorParams& theta,
                        const EmbeddingTable& table, const CandidateGroup& group) {
  if (selected.empty()) throw std::invalid_argument("sim_matrix: empty selection");
  check_group(group, table);
  Mat64 sim(selected.size(), group.size());
  for (std::size_t j = 0; j < selected.size(); ++j) {
    const Vec64 u = project(selected[j], theta);
    for (std::size_t i = 0; i < group.size(); ++i) {
      sim(j, i) = cosine(u, table.text(group.class_ids[i]));
    }
  }
  return sim;
}

/// Mean over views of |sim(j, i) - mean_i sim(j, i)|.
inline Vec64 dispersion_rewards(const Mat64& sim) {
  const std::size_t views = sim.rows();
  const std::size_t k = sim.cols();
  std::vector<double> out(k, 0.0);
  for (std::size_t j = 0; j < views; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < k; ++i) mu += sim(j, i);
    mu /= static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i) out[i] += std::abs(sim(j, i) - mu);
  }
  for (double& x : out) x /= static_cast<double>(views);
  return Vec64(std::move(out));
}

inline Vec64 combine_rewards(const Vec64& align, const Vec64& disp, double lambda) {
  if (align.size() != disp.size()) throw std::invalid_argument("combine_rewards: length mismatch");
  if (lambda < 0.0) throw std::invalid_argument("combine_rewards: lambda must be nonnegative");
  std::vector<double> out(align.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = align[i] + lambda * disp[i];
  return Vec64(std::move(out));
}

/// (r - mean) / std with the population std; all zeros when std < 1e-8.
inline Vec64 advantages(const Vec64& rewards) {
  const std::size_t g = rewards.size();
  if (g < 2) throw std::invalid_argument("advantages: need a group of at least 2");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);
  const double sd = std::sqrt(var);
  std::vector<double> out(g, 0.0);
  if (sd < kAdvantageStdFloor) return Vec64(std::move(out));
  for (std::size_t i = 0; i < g; ++i) out[i] = (rewards[i] - mean) / sd;
  return Vec64(std::move(out));
}

/// Full reward pass for one episode under the given (old) parameters.
inline RewardBundle compute_rewards(const Vec64& original, std::span<const Vec64> selected,
                                    const ProjectorParams& theta, const EmbeddingTable& table,
                                    const CandidateGroup& group, double lambda, double w,
                                    bool use_dispersion = true) {
  Vec64 align = alignment_rewards(project(original, theta), table, group, w);
  Vec64 disp = use_dispersion ? dispersion_rewards(sim_matrix(selected, theta, table, group))
                              : Vec64::zeros(group.size());
  Vec64 combined = use_dispersion ? combine_rewards(align, disp, lambda) : align;
  Vec64 adv = advantages(combined);
  return RewardBundle{std::move(align), std::move(disp), std::move(combined), std::move(adv),
                      lambda, w};
}

}  // namespace grpo_tta
