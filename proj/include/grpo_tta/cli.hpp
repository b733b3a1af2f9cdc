#pragma once

// Command-line front end: synth, zeroshot, adapt, ablate, gradcheck.
// Exit codes: 0 success, 1 usage error, 2 data or format error, 3 gradient
// check above tolerance.

#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "grpo_tta/ablation.hpp"
#include "grpo_tta/embedding_file.hpp"
#include "grpo_tta/gradcheck.hpp"
#include "grpo_tta/pipeline.hpp"
#include "grpo_tta/report.hpp"
#include "grpo_tta/synthetic.hpp"

namespace grpo_tta {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitCheckFailed = 3;

namespace detail {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AdaptFlags {
  AdaptConfig cfg;
  double tau = 0.0;
  std::size_t workers = 0;
  std::string out = "json";
  std::string method = "grpo";
  std::string predict_from = "original";
  bool bias = false;
  bool no_dispersion = false;
  bool no_timing = false;
};

inline void add_adapt_flags(CLI::App* cmd, AdaptFlags& f) {
  cmd->add_option("--k", f.cfg.k, "number of top-K candidates")->capture_default_str();
  cmd->add_option("--lambda", f.cfg.lambda, "dispersion reward weight")->capture_default_str();
  cmd->add_option("--w", f.cfg.w, "alignment reward scale")->capture_default_str();
  cmd->add_option("--epsilon", f.cfg.epsilon, "ratio clip range")->capture_default_str();
  cmd->add_option("--keep-fraction", f.cfg.keep_fraction, "fraction of lowest-entropy views kept")
      ->capture_default_str();
  cmd->add_option("--tau", f.tau, "override the file's softmax temperature");
  cmd->add_option("--lr", f.cfg.learning_rate, "AdamW learning rate")->capture_default_str();
  cmd->add_option("--wd", f.cfg.weight_decay, "AdamW decoupled weight decay")->capture_default_str();
  cmd->add_option("--steps", f.cfg.tta_steps, "adaptation steps per sample")->capture_default_str();
  cmd->add_option("--seed", f.cfg.seed, "seed for generated views")->capture_default_str();
  cmd->add_option("--workers", f.workers, "worker threads (default: $GRPO_TTA_WORKERS or 1)");
  cmd->add_option("--policy-temperature", f.cfg.policy_temperature,
                  "temperature of the candidate softmax")
      ->capture_default_str();
  cmd->add_option("--jitter-views", f.cfg.jitter_views, "views generated for view-less samples")
      ->capture_default_str();
  cmd->add_option("--jitter-sigma", f.cfg.jitter_sigma, "noise of generated views")
      ->capture_default_str();
  cmd->add_option("--predict-from", f.predict_from, "original|views")
      ->check(CLI::IsMember({"original", "views"}))
      ->capture_default_str();
  cmd->add_flag("--bias", f.bias, "train a projector bias");
  cmd->add_flag("--no-dispersion", f.no_dispersion, "alignment reward only");
  cmd->add_flag("--no-timing", f.no_timing, "omit wall times from JSON output");
}

inline AdaptConfig resolve(const AdaptFlags& f) {
  AdaptConfig cfg = f.cfg;
  if (f.tau > 0.0) cfg.tau = f.tau;
  cfg.use_bias = f.bias;
  cfg.use_dispersion = !f.no_dispersion;
  cfg.predict_from = f.predict_from == "views" ? PredictFrom::kViews : PredictFrom::kOriginal;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

inline std::size_t resolve_workers(std::size_t flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("GRPO_TTA_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("GRPO_TTA_WORKERS is not a positive integer: ") + env);
  }
  return 1;
}

inline void print_summary(std::ostream& out, const RunSummary& s, const std::string& format,
                          bool timing) {
  if (format == "csv") {
    out << summary_csv(s);
  } else {
    out << summary_json(s, timing).dump(2) << "\n";
  }
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Group-relative policy optimization for test-time adaptation of embedding classifiers"};
  app.require_subcommand(1);

  SynthConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic distribution-shift benchmark file");
  synth->add_option("--out", synth_out, "output path")->required();
  synth->add_option("--dim", synth_cfg.dim)->capture_default_str();
  synth->add_option("--classes", synth_cfg.classes)->capture_default_str();
  synth->add_option("--samples", synth_cfg.samples)->capture_default_str();
  synth->add_option("--views", synth_cfg.views)->capture_default_str();
  synth->add_option("--sigma-c", synth_cfg.sigma_class, "intra-class noise")->capture_default_str();
  synth->add_option("--sigma-v", synth_cfg.sigma_view, "view jitter")->capture_default_str();
  synth->add_option("--shift", synth_cfg.shift, "shift strength in [0, 1]")->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed)->capture_default_str();
  synth->add_option("--tau", synth_cfg.tau)->capture_default_str();

  std::string zs_file;
  std::string zs_out = "json";
  bool zs_no_timing = false;
  auto* zeroshot = app.add_subcommand("zeroshot", "zero-shot top-1 on an embedding file");
  zeroshot->add_option("file", zs_file)->required();
  zeroshot->add_option("--out", zs_out, "json|csv")->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  zeroshot->add_flag("--no-timing", zs_no_timing, "omit wall times from JSON output");

  std::string adapt_file;
  detail::AdaptFlags adapt_flags;
  auto* adapt = app.add_subcommand("adapt", "episodic adaptation over an embedding file");
  adapt->add_option("file", adapt_file)->required();
  detail::add_adapt_flags(adapt, adapt_flags);
  adapt->add_option("--out", adapt_flags.out, "json|csv")->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  adapt->add_option("--method", adapt_flags.method, "grpo|entropy")
      ->check(CLI::IsMember({"grpo", "entropy"}))
      ->capture_default_str();

  std::string ablate_file;
  std::string grid_spec;
  bool full_grid = false;
  detail::AdaptFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "sweep lambda, K and steps; CSV on stdout");
  ablate->add_option("file", ablate_file)->required();
  ablate->add_option("--grid", grid_spec, "e.g. lambda=0.5,1,2,4;k=2,3,4;steps=1,2,3")->required();
  ablate->add_flag("--full-grid", full_grid, "Cartesian product instead of one factor at a time");
  detail::add_adapt_flags(ablate, ablate_flags);

  std::size_t gc_seeds = 50;
  double gc_tolerance = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  gradcheck->add_option("--seeds", gc_seeds)->capture_default_str();
  gradcheck->add_option("--tolerance", gc_tolerance)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      try {
        synth_cfg.validate();
      } catch (const std::invalid_argument& e) {
        throw detail::UsageError(e.what());
      }
      write_embedding_file(synth_out, generate_synthetic(synth_cfg));
      err << "wrote " << synth_out << "\n";
    } else if (zeroshot->parsed()) {
      const EmbeddingFile file = read_embedding_file(zs_file);
      detail::print_summary(out, zero_shot_baseline(file.data, file.table), zs_out, !zs_no_timing);
    } else if (adapt->parsed()) {
      const AdaptConfig cfg = detail::resolve(adapt_flags);
      RunOptions opts;
      opts.workers = detail::resolve_workers(adapt_flags.workers);
      const EmbeddingFile file = read_embedding_file(adapt_file);
      const RunSummary s = adapt_flags.method == "entropy"
                               ? entropy_min_baseline(file.data, file.table, cfg, opts)
                               : run_stream(file.data, file.table, cfg, opts);
      detail::print_summary(out, s, adapt_flags.out, !adapt_flags.no_timing);
    } else if (ablate->parsed()) {
      const AdaptConfig cfg = detail::resolve(ablate_flags);
      AblationGrid grid;
      try {
        grid = parse_grid(grid_spec);
      } catch (const std::invalid_argument& e) {
        throw detail::UsageError(e.what());
      }
      grid.one_factor_at_a_time = !full_grid;
      RunOptions opts;
      opts.workers = detail::resolve_workers(ablate_flags.workers);
      const EmbeddingFile file = read_embedding_file(ablate_file);
      out << ablation_csv(run_ablation(grid, file.data, file.table, cfg, opts));
    } else if (gradcheck->parsed()) {
      const GradientSuiteResult r = run_gradient_suite(gc_seeds);
      out << "episodes " << r.episodes << ", parameters compared " << r.compared << ", excluded "
          << r.excluded << "\n";
      out << "max relative error " << std::scientific << std::setprecision(3)
          << r.max_relative_error << "\n";
      if (!(r.max_relative_error <= gc_tolerance)) {
        err << "gradient check failed: tolerance " << gc_tolerance << "\n";
        return kExitCheckFailed;
      }
    }
  } catch (const detail::UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace grpo_tta
