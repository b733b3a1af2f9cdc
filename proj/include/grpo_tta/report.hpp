#pragma once

// JSON and CSV renderings of run summaries.

#include <string>

#include <json.hpp>

#include "grpo_tta/ablation.hpp"
#include "grpo_tta/pipeline.hpp"

namespace grpo_tta {

inline nlohmann::json config_json(const AdaptConfig& cfg) {
  nlohmann::json j;
  j["k"] = cfg.k;
  j["lambda"] = cfg.lambda;
  j["w"] = cfg.w;
  j["epsilon"] = cfg.epsilon;
  j["keep_fraction"] = cfg.keep_fraction;
  j["tau"] = cfg.tau ? nlohmann::json(*cfg.tau) : nlohmann::json(nullptr);
  j["learning_rate"] = cfg.learning_rate;
  j["weight_decay"] = cfg.weight_decay;
  j["tta_steps"] = cfg.tta_steps;
  j["use_bias"] = cfg.use_bias;
  j["seed"] = cfg.seed;
  j["policy_temperature"] = cfg.policy_temperature;
  j["use_dispersion"] = cfg.use_dispersion;
  j["predict_from"] = cfg.predict_from == PredictFrom::kViews ? "views" : "original";
  j["jitter_views"] = cfg.jitter_views;
  j["jitter_sigma"] = cfg.jitter_sigma;
  return j;
}

inline nlohmann::json episode_json(const EpisodeResult& ep, bool include_timing) {
  nlohmann::json j;
  j["sample_id"] = ep.sample_id;
  j["zero_shot_prediction"] = ep.zero_shot_prediction;
  j["adapted_prediction"] = ep.adapted_prediction;
  j["candidate_ids"] = ep.candidate_ids;
  j["per_step_loss"] = ep.per_step_loss;
  j["selected_view_indices"] = ep.selected_view_indices;
  if (ep.rewards) {
    const RewardBundle& r = *ep.rewards;
    j["rewards"] = {{"align", r.align.values()},         {"disp", r.disp.values()},
                    {"combined", r.combined.values()},   {"advantages", r.advantages.values()},
                    {"lambda", r.lambda},                {"w", r.w}};
  } else {
    j["rewards"] = nullptr;
  }
  j["failed"] = ep.failed;
  if (ep.failed) j["failure"] = ep.failure;
  if (include_timing) j["wall_time_ms"] = ep.wall_time.count();
  return j;
}

/// Keys: config, top1_zero_shot, top1_adapted, episodes, engine_version
/// (plus method). Accuracies are null when the dataset has no labels.
inline nlohmann::json summary_json(const RunSummary& s, bool include_timing = true) {
  nlohmann::json j;
  j["engine_version"] = kEngineVersion;
  j["method"] = s.method;
  j["config"] = config_json(s.config);
  j["top1_zero_shot"] = s.top1_accuracy_zero_shot ? nlohmann::json(*s.top1_accuracy_zero_shot)
                                                  : nlohmann::json(nullptr);
  j["top1_adapted"] = s.top1_accuracy_adapted ? nlohmann::json(*s.top1_accuracy_adapted)
                                              : nlohmann::json(nullptr);
  j["episodes"] = nlohmann::json::array();
  for (const auto& ep : s.episodes) j["episodes"].push_back(episode_json(ep, include_timing));
  return j;
}

/// One line per episode.
inline std::string summary_csv(const RunSummary& s) {
  std::string out = "sample_id,zero_shot_prediction,adapted_prediction,failed,final_loss,wall_time_ms\n";
  for (const auto& ep : s.episodes) {
    out += std::to_string(ep.sample_id) + "," + std::to_string(ep.zero_shot_prediction) + "," +
           std::to_string(ep.adapted_prediction) + "," + (ep.failed ? "1" : "0") + "," +
           (ep.per_step_loss.empty() ? std::string() : format_number(ep.per_step_loss.back())) + "," +
           format_number(ep.wall_time.count()) + "\n";
  }
  return out;
}

}  // namespace grpo_tta
