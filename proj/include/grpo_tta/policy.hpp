#pragma once

// Frozen class-text table, the tunable visual projector, and the K-candidate
// policy it induces.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grpo_tta/numerics.hpp"

namespace grpo_tta {

/// Frozen class-text embeddings plus the logit temperature.
class EmbeddingTable {
 public:
  EmbeddingTable(std::vector<Vec64> text_embeddings, std::vector<std::string> class_names,
                 double temperature = 0.01)
      : text_(std::move(text_embeddings)),
        names_(std::move(class_names)),
        temperature_(temperature) {
    if (text_.size() < 2) throw std::invalid_argument("EmbeddingTable: need at least 2 classes");
    if (names_.size() != text_.size()) {
      throw std::invalid_argument("EmbeddingTable: class name count mismatch");
    }
    if (!(temperature_ > 0.0)) throw std::invalid_argument("EmbeddingTable: tau must be positive");
    dim_ = text_.front().size();
    for (const auto& t : text_) {
      if (t.size() != dim_) throw std::invalid_argument("EmbeddingTable: ragged embeddings");
      if (std::abs(norm(t.span()) - 1.0) > 1e-6) {
        throw std::invalid_argument("EmbeddingTable: text embedding is not unit norm");
      }
    }
  }

  /// Builds a table with generated names "class_<i>".
  static EmbeddingTable with_default_names(std::vector<Vec64> text_embeddings,
                                           double temperature = 0.01) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < text_embeddings.size(); ++i) {
      names.push_back("class_" + std::to_string(i));
    }
    return EmbeddingTable(std::move(text_embeddings), std::move(names), temperature);
  }

  std::size_t dim() const { return dim_; }
  std::size_t num_classes() const { return text_.size(); }
  double temperature() const { return temperature_; }
  const Vec64& text(std::size_t c) const { return text_.at(c); }
  const std::vector<Vec64>& texts() const { return text_; }
  const std::vector<std::string>& class_names() const { return names_; }

 private:
  std::vector<Vec64> text_;
  std::vector<std::string> names_;
  double temperature_;
  std::size_t dim_ = 0;
};

/// Linear projector y = W z + b applied to visual embeddings. Also used as
/// the gradient / moment carrier since those share its shape.
struct ProjectorParams {
  Mat64 W;
  bool use_bias = false;
  Vec64 b;

  static ProjectorParams identity(std::size_t dim, bool use_bias = false) {
    return ProjectorParams{Mat64::identity(dim), use_bias, Vec64::zeros(dim)};
  }
  static ProjectorParams zeros_like(const ProjectorParams& p) {
    return ProjectorParams{Mat64(p.W.rows(), p.W.cols()), p.use_bias, Vec64::zeros(p.b.size())};
  }

  std::size_t dim() const { return W.rows(); }

  /// Number of trainable scalars (bias only counted when enabled).
  std::size_t num_trainable() const { return W.span().size() + (use_bias ? b.size() : 0); }
  double& trainable(std::size_t i) {
    const std::size_t nw = W.span().size();
    return i < nw ? W.span()[i] : b[i - nw];
  }
  double trainable(std::size_t i) const {
    const std::size_t nw = W.span().size();
    return i < nw ? W.span()[i] : b[i - nw];
  }

  friend bool operator==(const ProjectorParams&, const ProjectorParams&) = default;
};

struct SampleViews {
  Vec64 original;
  std::vector<Vec64> views;
};

struct CandidateGroup {
  std::vector<std::size_t> class_ids;
  std::size_t size() const { return class_ids.size(); }
  friend bool operator==(const CandidateGroup&, const CandidateGroup&) = default;
};

struct PolicySnapshot {
  Vec64 probs;
  Vec64 logits;
  ProjectorParams source_params;
};

/// Unnormalized W z + b.
inline Vec64 project_raw(const Vec64& z, const ProjectorParams& theta) {
  const std::size_t d = theta.dim();
  if (z.size() != theta.W.cols()) throw std::invalid_argument("project: dimension mismatch");
  std::vector<double> y(d);
  for (std::size_t r = 0; r < d; ++r) {
    y[r] = dot(theta.W.row(r), z.span()) + (theta.use_bias ? theta.b[r] : 0.0);
  }
  return Vec64(std::move(y));
}

inline Vec64 project(const Vec64& z, const ProjectorParams& theta) {
  return l2_normalize(project_raw(z, theta));
}

inline Vec64 class_distribution(const Vec64& visual, const EmbeddingTable& table) {
  std::vector<double> logits(table.num_classes());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    logits[c] = cosine(visual, table.text(c));
  }
  return softmax(Vec64(std::move(logits)), table.temperature());
}

inline std::size_t zero_shot_class(const Vec64& visual, const EmbeddingTable& table) {
  return argmax(class_distribution(l2_normalize(visual), table).span());
}

/// Keeps the max(1, ceil(keep_fraction * n)) lowest-entropy views under
/// theta_old. Ties go to the lower view index; result is sorted ascending.
inline std::vector<std::size_t> filter_views(const SampleViews& sample,
                                             const ProjectorParams& theta_old,
                                             const EmbeddingTable& table, double keep_fraction) {
  const std::size_t n = sample.views.size();
  if (n == 0) throw std::invalid_argument("filter_views: no views");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw std::invalid_argument("filter_views: keep_fraction must be in (0, 1]");
  }
  std::vector<double> entropy(n);
  for (std::size_t i = 0; i < n; ++i) {
    entropy[i] = shannon_entropy(class_distribution(project(sample.views[i], theta_old), table));
  }
  // ceil with a small guard so e.g. (2/3)*3 is not rounded up to 3
  const double scaled = keep_fraction * static_cast<double>(n);
  auto keep = static_cast<std::size_t>(std::ceil(scaled - 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return entropy[a] < entropy[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

inline Vec64 aggregate_distribution(std::span<const Vec64> selected, const ProjectorParams& theta,
                                    const EmbeddingTable& table) {
  if (selected.empty()) throw std::invalid_argument("aggregate_distribution: empty selection");
  std::vector<double> acc(table.num_classes(), 0.0);
  for (const auto& view : selected) {
    const Vec64 p = class_distribution(project(view, theta), table);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += p[c];
  }
  for (double& x : acc) x /= static_cast<double>(selected.size());
  return Vec64(std::move(acc));
}

inline CandidateGroup topk_candidates(const Vec64& aggregated, std::size_t k) {
  if (k == 0 || k > aggregated.size()) {
    throw std::invalid_argument("topk_candidates: K must be in [1, C]");
  }
  std::vector<std::size_t> ids(aggregated.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(),
                   [&](std::size_t a, std::size_t b) { return aggregated[a] > aggregated[b]; });
  ids.resize(k);
  return CandidateGroup{std::move(ids)};
}

inline void check_group(const CandidateGroup& group, const EmbeddingTable& table) {
  if (group.class_ids.empty()) throw std::invalid_argument("candidate group is empty");
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group.class_ids[i] >= table.num_classes()) {
      throw std::invalid_argument("candidate group: class id out of range");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (group.class_ids[i] == group.class_ids[j]) {
        throw std::invalid_argument("candidate group: duplicate class id");
      }
    }
  }
}

/// Policy over the K candidates: softmax(mean_j cos(project(view_j), t_c) / tau,
/// policy_temperature).
inline PolicySnapshot candidate_policy(std::span<const Vec64> selected, const ProjectorParams& theta,
                                       const EmbeddingTable& table, const CandidateGroup& group,
                                       double policy_temperature = 1.0) {
  if (selected.empty()) throw std::invalid_argument("candidate_policy: empty selection");
  check_group(group, table);
  std::vector<double> logits(group.size(), 0.0);
  for (const auto& view : selected) {
    const Vec64 u = project(view, theta);
    for (std::size_t i = 0; i < group.size(); ++i) {
      logits[i] += cosine(u, table.text(group.class_ids[i]));
    }
  }
  const double scale = static_cast<double>(selected.size()) * table.temperature();
  for (double& l : logits) l /= scale;
  Vec64 logit_vec(std::move(logits));
  Vec64 probs = softmax(logit_vec, policy_temperature);
  return PolicySnapshot{std::move(probs), std::move(logit_vec), theta};
}

/// Copies the views at the given indices.
inline std::vector<Vec64> gather_views(const SampleViews& sample,
                                       std::span<const std::size_t> indices) {
  std::vector<Vec64> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(sample.views.at(i));
  return out;
}

}  // namespace grpo_tta
