#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "methanol/inference.hpp"
#include "methanol/metrics.hpp"
#include "methanol/model.hpp"

namespace methanol {

struct EvalReport {
  long n_samples = 0;
  double answer_exact_match = 0.0;   // fraction in [0, 1]
  double thought_exact_match = 0.0;
  double thought_ppl = 0.0;
  long generation_errors = 0;
  std::vector<std::string> transcripts;  // optional, transcript JSON per sample
};

// exp of the mean teacher-forced thinking loss over the set.
double thought_ppl(const ThinkingTransformer& model, const std::vector<RenderedSample>& set);

// Greedy two-pass generation per sample; answers and thoughts compare as
// strings after trailing-whitespace trim. Per-sample generation failures are
// counted, not fatal.
EvalReport exact_match(const ThinkingTransformer& model,
                       const std::vector<TripletSample>& set, const GenerationParams& params,
                       bool with_transcripts = false, bool with_ppl = true);

std::string eval_report_json(const EvalReport& report);

// CSV with columns step,loss_total,loss_think,loss_speak,lr,thought_ppl.
void export_series(const std::vector<MetricsRecord>& records,
                   const std::filesystem::path& path);
std::vector<MetricsRecord> read_series_csv(const std::filesystem::path& path);

}  // namespace methanol
