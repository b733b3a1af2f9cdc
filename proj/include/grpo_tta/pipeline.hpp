#pragma once

// Episodic per-sample adaptation: filter views, build the candidate group
// and its rewards under the frozen parameters, then take AdamW steps on the
// clipped surrogate. Every sample starts from the same pristine projector.

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "grpo_tta/grpo.hpp"
#include "grpo_tta/numerics.hpp"
#include "grpo_tta/policy.hpp"
#include "grpo_tta/rewards.hpp"

namespace grpo_tta {

inline constexpr const char* kEngineVersion = "1.0.0";

/// Which embedding the post-adaptation prediction is read from.
enum class PredictFrom {
  kOriginal,  // class_distribution of the projected original embedding
  kViews,     // aggregated distribution over the selected views
};

struct AdaptConfig {
  std::size_t k = 4;
  double lambda = 1.0;
  double w = 2.5;
  double epsilon = 0.2;
  double keep_fraction = 0.1;
  std::optional<double> tau;  // overrides the table temperature when set
  double learning_rate = 5e-6;
  double weight_decay = 5e-4;
  std::size_t tta_steps = 1;
  bool use_bias = false;
  std::uint64_t seed = 0;
  double policy_temperature = 1.0;
  bool use_dispersion = true;
  PredictFrom predict_from = PredictFrom::kOriginal;
  // Used only for samples stored without views.
  std::size_t jitter_views = 63;
  double jitter_sigma = 0.05;

  void validate() const {
    if (k < 2) throw std::invalid_argument("AdaptConfig: K must be at least 2");
    if (tta_steps < 1) throw std::invalid_argument("AdaptConfig: tta_steps must be at least 1");
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
      throw std::invalid_argument("AdaptConfig: keep_fraction must be in (0, 1]");
    }
    if (lambda < 0.0) throw std::invalid_argument("AdaptConfig: lambda must be nonnegative");
    if (!(w > 0.0)) throw std::invalid_argument("AdaptConfig: w must be positive");
    static_cast<void>(ClipConfig(epsilon));
    if (tau && !(*tau > 0.0)) throw std::invalid_argument("AdaptConfig: tau must be positive");
    if (learning_rate < 0.0 || weight_decay < 0.0) {
      throw std::invalid_argument("AdaptConfig: learning rate and weight decay must be nonnegative");
    }
    if (!(policy_temperature > 0.0)) {
      throw std::invalid_argument("AdaptConfig: policy temperature must be positive");
    }
    if (jitter_views < 1 || jitter_sigma < 0.0) {
      throw std::invalid_argument("AdaptConfig: invalid view jitter settings");
    }
  }
};

struct EpisodeResult {
  std::size_t sample_id = 0;
  std::size_t zero_shot_prediction = 0;
  std::size_t adapted_prediction = 0;
  std::vector<std::size_t> candidate_ids;
  std::vector<double> per_step_loss;
  std::vector<std::size_t> selected_view_indices;
  std::optional<RewardBundle> rewards;
  bool failed = false;
  std::string failure;
  std::chrono::duration<double, std::milli> wall_time{0};
};

/// A stream of samples. Labels are only read when scoring.
struct Dataset {
  std::vector<SampleViews> samples;
  std::optional<std::vector<std::size_t>> labels;

  std::size_t size() const { return samples.size(); }
};

struct RunSummary {
  std::string method;
  AdaptConfig config;
  std::optional<double> top1_accuracy_zero_shot;
  std::optional<double> top1_accuracy_adapted;
  std::vector<EpisodeResult> episodes;
};

/// Called with (sample_id, parameters at episode start, parameters at end).
/// May be invoked concurrently from worker threads.
using EpisodeObserver =
    std::function<void(std::size_t, const ProjectorParams&, const ProjectorParams&)>;

struct RunOptions {
  std::size_t workers = 1;
  EpisodeObserver observer;
};

inline std::vector<Vec64> jitter_views(const Vec64& original, std::size_t count, double sigma,
                                       std::uint64_t seed, std::size_t sample_id) {
  SeededRng rng = SeededRng::derive(seed, sample_id);
  std::vector<Vec64> views;
  views.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vec64 v = gaussian_sample(rng, original.size(), sigma);
    for (std::size_t r = 0; r < v.size(); ++r) v[r] += original[r];
    views.push_back(std::move(v));
  }
  return views;
}

namespace detail {

inline std::vector<Vec64> views_for(const SampleViews& sample, const AdaptConfig& cfg,
                                    std::size_t sample_id) {
  if (!sample.views.empty()) return sample.views;
  return jitter_views(sample.original, cfg.jitter_views, cfg.jitter_sigma, cfg.seed, sample_id);
}

inline std::size_t predict(const Vec64& original, std::span<const Vec64> selected,
                           const ProjectorParams& theta, const EmbeddingTable& table,
                           PredictFrom mode) {
  if (mode == PredictFrom::kViews) return argmax(aggregate_distribution(selected, theta, table).span());
  return argmax(class_distribution(project(original, theta), table).span());
}

/// Filters views and fixes the candidate group under the frozen parameters.
struct EpisodeSetup {
  std::vector<std::size_t> selected_idx;
  std::vector<Vec64> selected;
  CandidateGroup group;
};

inline EpisodeSetup setup_episode(const SampleViews& sample, const ProjectorParams& theta_old,
                                  const EmbeddingTable& table, const AdaptConfig& cfg,
                                  std::size_t sample_id) {
  SampleViews with_views{sample.original, views_for(sample, cfg, sample_id)};
  EpisodeSetup s;
  s.selected_idx = filter_views(with_views, theta_old, table, cfg.keep_fraction);
  s.selected = gather_views(with_views, s.selected_idx);
  s.group = topk_candidates(aggregate_distribution(s.selected, theta_old, table), cfg.k);
  return s;
}

template <typename Body>
EpisodeResult run_episode(const SampleViews& sample, const EmbeddingTable& table,
                          const ProjectorParams& theta_init, std::size_t sample_id,
                          const EpisodeObserver& observer, Body&& body) {
  const auto start = std::chrono::steady_clock::now();
  EpisodeResult result;
  result.sample_id = sample_id;
  ProjectorParams theta = theta_init;
  std::optional<ProjectorParams> theta_start;
  if (observer) theta_start = theta;
  try {
    result.zero_shot_prediction =
        argmax(class_distribution(project(sample.original, theta_init), table).span());
  } catch (const DegenerateInput& e) {
    // no usable original embedding; nothing better than class 0 to report
    result.failed = true;
    result.failure = e.what();
  }
  if (!result.failed) {
    try {
      body(theta, result);
    } catch (const DegenerateInput& e) {
      result.failed = true;
      result.failure = e.what();
      result.adapted_prediction = result.zero_shot_prediction;
    }
  }
  if (result.failed) result.adapted_prediction = result.zero_shot_prediction;
  if (observer) observer(sample_id, *theta_start, theta);
  result.wall_time = std::chrono::steady_clock::now() - start;
  return result;
}

}  // namespace detail

/// One GRPO episode on a single sample, starting from a private copy of theta_init.
inline EpisodeResult adapt_sample(const SampleViews& sample, const EmbeddingTable& table,
                                  const ProjectorParams& theta_init, const AdaptConfig& cfg,
                                  std::size_t sample_id = 0, const EpisodeObserver& observer = {}) {
  return detail::run_episode(
      sample, table, theta_init, sample_id, observer,
      [&](ProjectorParams& theta, EpisodeResult& result) {
        const ProjectorParams theta_old = theta_init;
        detail::EpisodeSetup setup = detail::setup_episode(sample, theta_old, table, cfg, sample_id);
        result.selected_view_indices = setup.selected_idx;
        result.candidate_ids = setup.group.class_ids;

        RewardBundle rewards = compute_rewards(sample.original, setup.selected, theta_old, table,
                                               setup.group, cfg.lambda, cfg.w, cfg.use_dispersion);
        PolicySnapshot frozen = candidate_policy(setup.selected, theta_old, table, setup.group,
                                                 cfg.policy_temperature);
        EpisodeContext ctx{std::move(setup.selected), &table,          setup.group,
                           std::move(frozen),         rewards.advantages, ClipConfig(cfg.epsilon),
                           cfg.policy_temperature};
        result.rewards = std::move(rewards);

        OptimState state = OptimState::for_params(theta, cfg.learning_rate, cfg.weight_decay);
        for (std::size_t step = 0; step < cfg.tta_steps; ++step) {
          const LossReport report = loss_and_gradient(theta, ctx);
          result.per_step_loss.push_back(report.loss);
          optimizer_step(theta, report.gradient, state);
        }
        result.adapted_prediction =
            detail::predict(sample.original, ctx.selected, theta, table, cfg.predict_from);
      });
}

/// Entropy of the view-aggregated class distribution and its gradient.
inline std::pair<double, ProjectorParams> entropy_loss_and_gradient(std::span<const Vec64> selected,
                                                                    const ProjectorParams& theta,
                                                                    const EmbeddingTable& table) {
  const std::size_t views = selected.size();
  const std::size_t classes = table.num_classes();
  std::vector<Vec64> per_view;
  per_view.reserve(views);
  std::vector<double> agg(classes, 0.0);
  for (const auto& v : selected) {
    per_view.push_back(class_distribution(project(v, theta), table));
    for (std::size_t c = 0; c < classes; ++c) agg[c] += per_view.back()[c];
  }
  for (double& x : agg) x /= static_cast<double>(views);
  const Vec64 agg_vec(agg);
  const double loss = shannon_entropy(agg_vec);

  std::vector<double> d_agg(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    if (agg[c] > 0.0) d_agg[c] = -(std::log(agg[c]) + 1.0) / static_cast<double>(views);
  }
  Mat64 d_cos(views, classes);
  for (std::size_t j = 0; j < views; ++j) {
    double weighted = 0.0;
    for (std::size_t c = 0; c < classes; ++c) weighted += per_view[j][c] * d_agg[c];
    for (std::size_t c = 0; c < classes; ++c) {
      d_cos(j, c) = per_view[j][c] * (d_agg[c] - weighted) / table.temperature();
    }
  }
  std::vector<std::size_t> all(classes);
  for (std::size_t c = 0; c < classes; ++c) all[c] = c;
  return {loss, backprop_view_cosines(selected, theta, table, all, d_cos)};
}

/// Entropy-minimization comparator on the same episodic skeleton.
inline EpisodeResult entropy_min_sample(const SampleViews& sample, const EmbeddingTable& table,
                                        const ProjectorParams& theta_init, const AdaptConfig& cfg,
                                        std::size_t sample_id = 0,
                                        const EpisodeObserver& observer = {}) {
  return detail::run_episode(
      sample, table, theta_init, sample_id, observer,
      [&](ProjectorParams& theta, EpisodeResult& result) {
        detail::EpisodeSetup setup = detail::setup_episode(sample, theta_init, table, cfg, sample_id);
        result.selected_view_indices = setup.selected_idx;
        result.candidate_ids = setup.group.class_ids;
        OptimState state = OptimState::for_params(theta, cfg.learning_rate, cfg.weight_decay);
        for (std::size_t step = 0; step < cfg.tta_steps; ++step) {
          auto [loss, grad] = entropy_loss_and_gradient(setup.selected, theta, table);
          result.per_step_loss.push_back(loss);
          optimizer_step(theta, grad, state);
        }
        result.adapted_prediction =
            detail::predict(sample.original, setup.selected, theta, table, cfg.predict_from);
      });
}

inline void check_dimensions(const Dataset& data, const EmbeddingTable& table) {
  const std::size_t d = table.dim();
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    if (s.original.size() != d) {
      throw std::invalid_argument("sample " + std::to_string(i) + ": original has dimension " +
                                  std::to_string(s.original.size()) + ", expected " +
                                  std::to_string(d));
    }
    for (std::size_t v = 0; v < s.views.size(); ++v) {
      if (s.views[v].size() != d) {
        throw std::invalid_argument("sample " + std::to_string(i) + ": view " + std::to_string(v) +
                                    " has dimension " + std::to_string(s.views[v].size()) +
                                    ", expected " + std::to_string(d));
      }
    }
  }
  if (data.labels) {
    if (data.labels->size() != data.samples.size()) {
      throw std::invalid_argument("label count does not match sample count");
    }
    for (std::size_t i = 0; i < data.labels->size(); ++i) {
      if ((*data.labels)[i] >= table.num_classes()) {
        throw std::invalid_argument("sample " + std::to_string(i) + ": label out of range");
      }
    }
  }
}

/// Fills the accuracy fields from the dataset labels, if there are any.
inline void score(RunSummary& summary, const Dataset& data) {
  if (!data.labels || data.samples.empty()) return;
  std::size_t zs = 0;
  std::size_t ad = 0;
  for (const auto& ep : summary.episodes) {
    const std::size_t label = (*data.labels)[ep.sample_id];
    zs += ep.zero_shot_prediction == label;
    ad += ep.adapted_prediction == label;
  }
  const double n = static_cast<double>(summary.episodes.size());
  summary.top1_accuracy_zero_shot = 100.0 * static_cast<double>(zs) / n;
  summary.top1_accuracy_adapted = 100.0 * static_cast<double>(ad) / n;
}

inline EmbeddingTable resolve_table(const EmbeddingTable& table, const AdaptConfig& cfg) {
  if (!cfg.tau || *cfg.tau == table.temperature()) return table;
  return EmbeddingTable(table.texts(), table.class_names(), *cfg.tau);
}

/// Runs `episode(sample, sample_id)` over every sample on a worker pool;
/// results are stored by sample id so the output does not depend on scheduling.
template <typename EpisodeFn>
std::vector<EpisodeResult> run_episodes(const Dataset& data, std::size_t workers,
                                        EpisodeFn&& episode) {
  const std::size_t n = data.samples.size();
  std::vector<EpisodeResult> results(n);
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) results[i] = episode(data.samples[i], i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            results[i] = episode(data.samples[i], i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
  return results;
}

inline RunSummary run_stream(const Dataset& data, const EmbeddingTable& table_in,
                             const AdaptConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  check_dimensions(data, table_in);
  const EmbeddingTable table = resolve_table(table_in, cfg);
  if (cfg.k > table.num_classes()) throw std::invalid_argument("AdaptConfig: K exceeds class count");
  const ProjectorParams theta_init = ProjectorParams::identity(table.dim(), cfg.use_bias);

  RunSummary summary{"grpo_tta", cfg, std::nullopt, std::nullopt, {}};
  summary.episodes = run_episodes(data, opts.workers, [&](const SampleViews& s, std::size_t id) {
    return adapt_sample(s, table, theta_init, cfg, id, opts.observer);
  });
  score(summary, data);
  return summary;
}

inline RunSummary entropy_min_baseline(const Dataset& data, const EmbeddingTable& table_in,
                                       const AdaptConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  check_dimensions(data, table_in);
  const EmbeddingTable table = resolve_table(table_in, cfg);
  if (cfg.k > table.num_classes()) throw std::invalid_argument("AdaptConfig: K exceeds class count");
  const ProjectorParams theta_init = ProjectorParams::identity(table.dim(), cfg.use_bias);

  RunSummary summary{"entropy_min", cfg, std::nullopt, std::nullopt, {}};
  summary.episodes = run_episodes(data, opts.workers, [&](const SampleViews& s, std::size_t id) {
    return entropy_min_sample(s, table, theta_init, cfg, id, opts.observer);
  });
  score(summary, data);
  return summary;
}

inline RunSummary zero_shot_baseline(const Dataset& data, const EmbeddingTable& table) {
  check_dimensions(data, table);
  RunSummary summary{"zero_shot", AdaptConfig{}, std::nullopt, std::nullopt, {}};
  summary.episodes.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    EpisodeResult& ep = summary.episodes[i];
    ep.sample_id = i;
    try {
      ep.zero_shot_prediction = zero_shot_class(data.samples[i].original, table);
    } catch (const DegenerateInput& e) {
      ep.failed = true;
      ep.failure = e.what();
    }
    ep.adapted_prediction = ep.zero_shot_prediction;
    ep.wall_time = std::chrono::steady_clock::now() - start;
  }
  score(summary, data);
  return summary;
}

namespace detail {

inline bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

inline bool same_bits(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_bits(a[i], b[i])) return false;
  }
  return true;
}

inline bool same_bits(const std::optional<double>& a, const std::optional<double>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || same_bits(*a, *b);
}

}  // namespace detail

/// Bitwise comparison of everything in two episodes except wall time.
inline bool same_outcome(const EpisodeResult& a, const EpisodeResult& b) {
  using detail::same_bits;
  if (a.sample_id != b.sample_id || a.zero_shot_prediction != b.zero_shot_prediction ||
      a.adapted_prediction != b.adapted_prediction || a.candidate_ids != b.candidate_ids ||
      a.selected_view_indices != b.selected_view_indices || a.failed != b.failed ||
      a.failure != b.failure || !same_bits(a.per_step_loss, b.per_step_loss) ||
      a.rewards.has_value() != b.rewards.has_value()) {
    return false;
  }
  if (!a.rewards) return true;
  const RewardBundle& ra = *a.rewards;
  const RewardBundle& rb = *b.rewards;
  return same_bits(ra.align.span(), rb.align.span()) && same_bits(ra.disp.span(), rb.disp.span()) &&
         same_bits(ra.combined.span(), rb.combined.span()) &&
         same_bits(ra.advantages.span(), rb.advantages.span()) && same_bits(ra.lambda, rb.lambda) &&
         same_bits(ra.w, rb.w);
}

/// Bitwise comparison of two summaries, ignoring wall times.
inline bool same_outcome(const RunSummary& a, const RunSummary& b) {
  if (a.method != b.method || a.episodes.size() != b.episodes.size() ||
      !detail::same_bits(a.top1_accuracy_zero_shot, b.top1_accuracy_zero_shot) ||
      !detail::same_bits(a.top1_accuracy_adapted, b.top1_accuracy_adapted)) {
    return false;
  }
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    if (!same_outcome(a.episodes[i], b.episodes[i])) return false;
  }
  return true;
}

}  // namespace grpo_tta
