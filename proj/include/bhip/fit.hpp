#pragma once

#include "bhip/data.hpp"
#include "bhip/decision.hpp"
#include "bhip/model.hpp"
#include "bhip/sampler.hpp"

#include <json.hpp>

namespace bhip {

struct FitOptions {
  ModelSpec model;
  SamplerConfig sampler;
  DecisionConfig decision;
  bool standardize = true;
};

struct FitResult {
  EnvironmentDataset data;  // as fitted (standardized unless disabled)
  PosteriorSamples samples;
  DiagnosticsSummary summary;
  DecisionReport report;
};

/// Standardize, build the density, sample, summarize, decide.
inline FitResult fit_bhip(const EnvironmentDataset& raw, const FitOptions& opt) {
  FitResult r;
  r.data = opt.standardize ? standardize(raw) : raw;
  const auto density = build_density(opt.model, r.data);
  r.samples = nuts_sample(*density, opt.sampler);
  r.summary = diagnostics(r.samples);
  // Binary targets have no natural outcome-scale sd; the ROPE is then
  // taken on the unit logit scale.
  const double target_sd = r.data.target_kind == TargetKind::continuous ? pooled_target_sd(r.data) : 1.0;
  r.report = decide(r.samples, opt.model.prior_family, r.data.predictor_names, r.data.n_environments(), opt.decision,
                    target_sd);
  return r;
}

/// Same as fit_bhip but skips the per-parameter summary, which dominates
/// the cost of small benchmark fits.
inline DecisionReport fit_and_decide(const EnvironmentDataset& raw, const FitOptions& opt) {
  const EnvironmentDataset data = opt.standardize ? standardize(raw) : raw;
  const auto density = build_density(opt.model, data);
  const PosteriorSamples samples = nuts_sample(*density, opt.sampler);
  const double target_sd = data.target_kind == TargetKind::continuous ? pooled_target_sd(data) : 1.0;
  return decide(samples, opt.model.prior_family, data.predictor_names, data.n_environments(), opt.decision, target_sd);
}

}  // namespace bhip
