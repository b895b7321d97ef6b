#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "pneumo/errors.hpp"
#include "pneumo/model.hpp"
#include "pneumo/train.hpp"

namespace pneumo {

/// One component configuration of the ablation grid.
struct AblationVariant {
  std::string name;
  bool adapters = true;
  PromptSource prompt = PromptSource::kEngine;
  std::size_t diag_tokens = 4;
  bool emitter_mask = false;
  Pooling pooling = Pooling::kDiagnosisMean;
};

/// The six-row component grid: bare baseline, adapters, the two prompt-style
/// baselines, the engine alone, and engine plus emitter mask.
inline std::vector<AblationVariant> standard_variants(std::size_t m) {
  return {
      {"baseline", false, PromptSource::kNone, 0, false, Pooling::kSourceMean},
      {"adapter", true, PromptSource::kNone, 0, false, Pooling::kSourceMean},
      {"adapter+coop", true, PromptSource::kFixed, m, false, Pooling::kDiagnosisMean},
      {"adapter+cocoop", true, PromptSource::kConditional, m, false,
       Pooling::kDiagnosisMean},
      {"adapter+engine", true, PromptSource::kEngine, m, false,
       Pooling::kDiagnosisMean},
      {"adapter+engine+emitter", true, PromptSource::kEngine, m, true,
       Pooling::kDiagnosisMean},
  };
}

inline AblationVariant variant_by_name(const std::string& name, std::size_t m) {
  for (AblationVariant& v : standard_variants(m))
    if (v.name == name) return v;
  throw ConfigError("ablation: unknown variant '" + name + "'");
}

inline ModelConfig apply_variant(ModelConfig base, const AblationVariant& v) {
  base.adapters = v.adapters;
  base.prompt = v.prompt;
  base.diag_tokens = v.diag_tokens;
  base.emitter_mask = v.emitter_mask;
  base.pooling = v.pooling;
  base.validate();
  return base;
}

struct AblationRow {
  AblationVariant variant;
  CvResult cv;
};

/// Cross-validated metrics for each variant, all from the same seed so rows
/// differ only in the component switches.
inline std::vector<AblationRow> run_ablation(const Dataset& ds,
                                             const ModelConfig& base,
                                             const TrainConfig& train_cfg,
                                             const std::vector<AblationVariant>& variants,
                                             std::size_t folds, std::uint64_t seed,
                                             bool parallel = false) {
  if (variants.empty()) throw ConfigError("ablation: no variants selected");
  std::vector<AblationRow> rows;
  rows.reserve(variants.size());
  for (const AblationVariant& v : variants) {
    ModelConfig cfg = apply_variant(base, v);
    rows.push_back({v, run_cv(cfg, train_cfg, ds, folds, seed, parallel)});
  }
  return rows;
}

/// Multi-seed comparison of the full mechanism against the fixed-prompt
/// baseline. `reversal` flags the fixed-prompt side winning on mean AVG.
struct SeedComparison {
  std::vector<double> engine_emitter_avg;
  std::vector<double> fixed_prompt_avg;
  double mean_engine_emitter = 0.0;
  double mean_fixed_prompt = 0.0;
  bool reversal = false;
};

inline SeedComparison compare_engine_vs_fixed(const Dataset& ds,
                                              const ModelConfig& base,
                                              const TrainConfig& train_cfg,
                                              std::size_t folds,
                                              const std::vector<std::uint64_t>& seeds,
                                              bool parallel = false) {
  if (seeds.empty()) throw ConfigError("comparison: need at least one seed");
  const ModelConfig full =
      apply_variant(base, variant_by_name("adapter+engine+emitter", base.diag_tokens));
  const ModelConfig coop =
      apply_variant(base, variant_by_name("adapter+coop", base.diag_tokens));
  SeedComparison cmp;
  for (std::uint64_t s : seeds) {
    CvResult a = run_cv(full, train_cfg, ds, folds, s, parallel);
    CvResult b = run_cv(coop, train_cfg, ds, folds, s, parallel);
    cmp.engine_emitter_avg.push_back(a.mean.avg.value_or(a.mean.accuracy));
    cmp.fixed_prompt_avg.push_back(b.mean.avg.value_or(b.mean.accuracy));
    cmp.mean_engine_emitter += cmp.engine_emitter_avg.back();
    cmp.mean_fixed_prompt += cmp.fixed_prompt_avg.back();
  }
  cmp.mean_engine_emitter /= static_cast<double>(seeds.size());
  cmp.mean_fixed_prompt /= static_cast<double>(seeds.size());
  cmp.reversal = cmp.mean_engine_emitter < cmp.mean_fixed_prompt;
  return cmp;
}

namespace detail {
inline std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}
inline std::string fmt_metric(const std::optional<double>& v) {
  return v ? fmt_metric(*v) : std::string("nan");
}
}  // namespace detail

inline void append_metrics_rows(std::string& out, const std::string& variant,
                                const CvResult& cv) {
  for (const FoldResult& f : cv.folds) {
    out += variant + "," + std::to_string(f.fold) + "," +
           detail::fmt_metric(f.metrics.sensitivity) + "," +
           detail::fmt_metric(f.metrics.specificity) + "," +
           detail::fmt_metric(f.metrics.accuracy) + "," +
           detail::fmt_metric(f.metrics.auc) + "," + detail::fmt_metric(f.metrics.avg) +
           "\n";
  }
  out += variant + ",mean," + detail::fmt_metric(cv.mean.sensitivity) + "," +
         detail::fmt_metric(cv.mean.specificity) + "," +
         detail::fmt_metric(cv.mean.accuracy) + "," + detail::fmt_metric(cv.mean.auc) +
         "," + detail::fmt_metric(cv.mean.avg) + "\n";
}

inline std::string metrics_csv(const std::vector<std::pair<std::string, CvResult>>& runs) {
  std::string out = "variant,fold,sens,spec,acc,auc,avg\n";
  for (const auto& [name, cv] : runs) append_metrics_rows(out, name, cv);
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// Markdown aggregate table, config-hash stamped. One row per variant plus an
/// optional seed-comparison section that calls out a reversal explicitly.
inline std::string ablation_markdown(const std::vector<AblationRow>& rows,
                                     const std::string& config_hash,
                                     const SeedComparison* cmp = nullptr) {
  std::string out = "| Variant | Sens | Spec | Acc | AUC | AVG |\n";
  out += "|---|---|---|---|---|---|\n";
  for (const AblationRow& r : rows) {
    out += "| " + r.variant.name + " | " + detail::fmt_metric(r.cv.mean.sensitivity) +
           " | " + detail::fmt_metric(r.cv.mean.specificity) + " | " +
           detail::fmt_metric(r.cv.mean.accuracy) + " | " +
           detail::fmt_metric(r.cv.mean.auc) + " | " + detail::fmt_metric(r.cv.mean.avg) +
           " |\n";
  }
  if (cmp) {
    out += "\nengine+emitter mean AVG over " +
           std::to_string(cmp->engine_emitter_avg.size()) + " seeds: " +
           detail::fmt_metric(cmp->mean_engine_emitter) + "\n";
    out += "fixed-prompt (coop) mean AVG: " + detail::fmt_metric(cmp->mean_fixed_prompt) +
           "\n";
    out += cmp->reversal
               ? "RESULT: REVERSAL - fixed-prompt outperformed engine+emitter on this run\n"
               : "RESULT: engine+emitter >= fixed-prompt\n";
  }
  out += "\nconfig hash: " + config_hash + "\n";
  return out;
}

}  // namespace pneumo
