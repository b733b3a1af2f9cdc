#pragma once

// Hyperparameter sweeps over lambda, K and the number of adaptation steps.

#include <charconv>
#include <cstddef>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "grpo_tta/pipeline.hpp"

namespace grpo_tta {

struct AblationGrid {
  std::vector<double> lambda_values;
  std::vector<std::size_t> k_values;
  std::vector<std::size_t> step_values;
  bool one_factor_at_a_time = true;
};

struct AblationRow {
  std::string factor;
  std::string value;
  std::optional<double> top1_zero_shot;
  std::optional<double> top1_adapted;
  double mean_episode_time_ms = 0.0;
  RunSummary summary;
};

/// Shortest round-trip decimal form, independent of the C locale.
inline std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  if (res.ec != std::errc()) throw std::runtime_error("format_number failed");
  return std::string(buf, res.ptr);
}

inline std::string format_number(std::size_t x) { return std::to_string(x); }

/// Parses "lambda=0.5,1,2;k=2,4;steps=1,2" (factors optional, any order).
inline AblationGrid parse_grid(const std::string& spec) {
  AblationGrid grid;
  std::stringstream factors(spec);
  std::string part;
  while (std::getline(factors, part, ';')) {
    if (part.empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("grid: expected name=values in '" + part + "'");
    const std::string name = part.substr(0, eq);
    std::stringstream values(part.substr(eq + 1));
    std::string item;
    while (std::getline(values, item, ',')) {
      double v = 0.0;
      const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
      if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
        throw std::invalid_argument("grid: bad number '" + item + "'");
      }
      if (name == "lambda") {
        grid.lambda_values.push_back(v);
      } else if (name == "k" || name == "K" || name == "steps") {
        if (v < 0.0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
          throw std::invalid_argument("grid: " + name + " values must be nonnegative integers");
        }
        (name == "steps" ? grid.step_values : grid.k_values).push_back(static_cast<std::size_t>(v));
      } else {
        throw std::invalid_argument("grid: unknown factor '" + name + "'");
      }
    }
  }
  return grid;
}

inline void validate_grid(const AblationGrid& grid, std::size_t num_classes) {
  if (grid.lambda_values.empty() && grid.k_values.empty() && grid.step_values.empty()) {
    throw std::invalid_argument("ablation grid is empty");
  }
  for (std::size_t k : grid.k_values) {
    if (k > num_classes) throw std::invalid_argument("ablation grid: K exceeds class count");
  }
}

inline AblationRow ablation_row(std::string factor, std::string value, RunSummary summary) {
  double total = 0.0;
  for (const auto& ep : summary.episodes) total += ep.wall_time.count();
  const double mean =
      summary.episodes.empty() ? 0.0 : total / static_cast<double>(summary.episodes.size());
  return AblationRow{std::move(factor), std::move(value), summary.top1_accuracy_zero_shot,
                     summary.top1_accuracy_adapted, mean, std::move(summary)};
}

/// One run_stream per grid point. One-factor-at-a-time varies each listed
/// factor from `base`; otherwise the full Cartesian product is run, with an
/// empty list standing for the base value.
inline std::vector<AblationRow> run_ablation(const AblationGrid& grid, const Dataset& data,
                                             const EmbeddingTable& table, const AdaptConfig& base,
                                             const RunOptions& opts = {}) {
  validate_grid(grid, table.num_classes());
  std::vector<AblationRow> rows;
  if (grid.one_factor_at_a_time) {
    for (double lambda : grid.lambda_values) {
      AdaptConfig cfg = base;
      cfg.lambda = lambda;
      rows.push_back(ablation_row("lambda", format_number(lambda), run_stream(data, table, cfg, opts)));
    }
    for (std::size_t k : grid.k_values) {
      AdaptConfig cfg = base;
      cfg.k = k;
      rows.push_back(ablation_row("K", format_number(k), run_stream(data, table, cfg, opts)));
    }
    for (std::size_t steps : grid.step_values) {
      AdaptConfig cfg = base;
      cfg.tta_steps = steps;
      rows.push_back(ablation_row("steps", format_number(steps), run_stream(data, table, cfg, opts)));
    }
    return rows;
  }
  const auto lambdas = grid.lambda_values.empty() ? std::vector<double>{base.lambda} : grid.lambda_values;
  const auto ks = grid.k_values.empty() ? std::vector<std::size_t>{base.k} : grid.k_values;
  const auto steps = grid.step_values.empty() ? std::vector<std::size_t>{base.tta_steps} : grid.step_values;
  for (double lambda : lambdas) {
    for (std::size_t k : ks) {
      for (std::size_t s : steps) {
        AdaptConfig cfg = base;
        cfg.lambda = lambda;
        cfg.k = k;
        cfg.tta_steps = s;
        rows.push_back(ablation_row(
            "lambda/K/steps", format_number(lambda) + "/" + format_number(k) + "/" + format_number(s),
            run_stream(data, table, cfg, opts)));
      }
    }
  }
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "factor,value,top1_zero_shot,top1_adapted,mean_episode_time_ms\n";
  auto opt = [](const std::optional<double>& x) { return x ? format_number(*x) : std::string(); };
  for (const auto& r : rows) {
    out += r.factor + "," + r.value + "," + opt(r.top1_zero_shot) + "," + opt(r.top1_adapted) + "," +
           format_number(r.mean_episode_time_ms) + "\n";
  }
  return out;
}

}  // namespace grpo_tta
