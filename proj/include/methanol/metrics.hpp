#pragma once

#include <filesystem>
#include <vector>

namespace methanol {

// Per-step training telemetry. loss_total is combined in double from the
// other two fields, so loss_total == f_T * loss_think + loss_speak holds
// exactly; thought_ppl == exp(loss_think).
struct MetricsRecord {
  long step = 0;
  double loss_total = 0.0;
  double loss_think = 0.0;
  double loss_speak = 0.0;
  double lr = 0.0;
  double thought_ppl = 1.0;
  double wall_ms = 0.0;
};

void write_metrics_jsonl(const std::filesystem::path& path,
                         const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_jsonl(const std::filesystem::path& path);

}  // namespace methanol
